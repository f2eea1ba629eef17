#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mopinnenkf/driver.hpp"

using namespace mopinnenkf;

namespace {

/// Small-budget configuration for driver logic tests.
DriverConfig tiny_config() {
  DriverConfig c = DriverConfig::defaults(ProblemKind::tfmdwe);
  c.population = 6;
  c.generations_per_outer = 2;
  c.epochs_per_gen = 60;
  c.adam_epochs = 150;
  c.nsga_generations = 2;
  c.res_batch = 24;
  c.obj_batch = 32;
  c.caputo_steps = 10;
  c.hidden_layers = 1;
  c.hidden_width = 8;
  c.obs_nx = 6;
  c.obs_nt = 4;
  c.test_nx = 24;
  c.test_nt = 12;
  c.outer_max = 3;
  c.enkf_min_ensemble = 4;
  c.threads = 2;
  return c;
}

}  // namespace

TEST_CASE("metrics against the ground truth", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  SECTION("the truth itself scores zero") {
    const auto m = evaluate_metrics([&](double x, double t) { return ground_truth(spec, x, t); },
                                    spec, 40, 20);
    REQUIRE(m.mse == 0.0);
    REQUIRE(m.mae == 0.0);
  }
  SECTION("a constant offset c gives MAE = |c| and MSE = c^2") {
    const double c = -0.37;
    const auto m = evaluate_metrics(
        [&](double x, double t) { return ground_truth(spec, x, t) + c; }, spec, 40, 20);
    REQUIRE(m.mae == Catch::Approx(std::fabs(c)).margin(1e-12));
    REQUIRE(m.mse == Catch::Approx(c * c).margin(1e-12));
  }
  SECTION("matches an independent reimplementation on a random field") {
    auto field = [](double x, double t) { return std::sin(2 * x) * (t - 0.3); };
    const int nx = 17, nt = 9;
    const auto m = evaluate_metrics(field, spec, nx, nt);
    double mse = 0.0, mae = 0.0;
    for (int j = 0; j < nt; ++j) {
      for (int i = 0; i < nx; ++i) {
        const double x = spec.x_min + (spec.x_max - spec.x_min) * i / (nx - 1);
        const double t = spec.t_max * j / (nt - 1);
        const double d = field(x, t) - t * t * t * std::sin(x);
        mse += d * d;
        mae += std::fabs(d);
      }
    }
    mse /= nx * nt;
    mae /= nx * nt;
    REQUIRE(m.mse == Catch::Approx(mse).epsilon(1e-12));
    REQUIRE(m.mae == Catch::Approx(mae).epsilon(1e-12));
  }
}

TEST_CASE("noise-free observations with a perfect model converge in <= 2 outer iterations",
          "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward, /*misspecified=*/false);
  DriverConfig cfg = tiny_config();
  cfg.epochs_per_gen = 2200;
  cfg.res_batch = 48;
  cfg.outer_max = 5;
  const auto rep = run_mopinnenkf(spec, cfg, 0.0, 3);
  REQUIRE(rep.converged);
  REQUIRE(rep.outer_iterations <= 2);
  // with exact data the analysis hugs the truth at the fitted-ensemble level
  REQUIRE(rep.outer.back().analysis_truth_mse < 1e-3);
}

TEST_CASE("mopinnenkf report is structurally complete", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  const auto rep = run_mopinnenkf(spec, tiny_config(), 0.5, 7);
  REQUIRE(rep.outer_iterations >= 1);
  REQUIRE(rep.outer.size() == static_cast<std::size_t>(rep.outer_iterations));
  for (const auto& row : rep.outer) {
    REQUIRE(row.front_size >= 1);
    REQUIRE(std::isfinite(row.analysis_truth_mse));
    if (row.iteration > 1) REQUIRE(row.convergence >= 0.0);
  }
  REQUIRE_FALSE(rep.front.empty());
  REQUIRE(std::isfinite(rep.metrics.mse));
  REQUIRE(rep.solution.size() == static_cast<std::size_t>(rep.arch.parameter_count()));
  REQUIRE(rep.last_analysis_mean.size() == rep.observation_points.size());
}

TEST_CASE("the reported solution is the scalar-best rank-1 member", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::inverse);
  DriverConfig cfg = tiny_config();
  const auto rep = run_mopinnenkf(spec, cfg, 0.2, 9);
  REQUIRE(rep.physics_estimate.has_value());
  REQUIRE(*rep.physics_estimate > 0.0);
  REQUIRE(*rep.physics_estimate < 1.0);
  REQUIRE(rep.physics_error.has_value());
  // the champion's objectives are recorded in the last outer row; no front
  // member can have a smaller unit-weight scalar
  const auto& last = rep.outer.back();
  const double best_scalar = weighted_scalar(last.best_objectives, LossWeights{});
  for (const auto& o : rep.front)
    REQUIRE(weighted_scalar(o, LossWeights{}) >= best_scalar - 1e-12);
}

TEST_CASE("baselines consume byte-identical observation sets", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  DriverConfig cfg = tiny_config();
  const auto a = run_baseline(spec, "adam", cfg, 0.5, 11);
  const auto b = run_baseline(spec, "nsga3", cfg, 0.5, 11);
  const auto c = run_mopinnenkf(spec, cfg, 0.5, 11);
  REQUIRE(a.observation_values == b.observation_values);
  REQUIRE(a.observation_values == c.observation_values);
  REQUIRE(a.observation_points.size() == c.observation_points.size());
}

TEST_CASE("the nsga3 baseline reports a full pareto front", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  const auto rep = run_baseline(spec, "nsga3", tiny_config(), 0.2, 13);
  REQUIRE_FALSE(rep.front.empty());
  REQUIRE(std::isfinite(rep.metrics.mse));
}

TEST_CASE("the adam baseline records a finite loss trajectory", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  const auto rep = run_baseline(spec, "adam", tiny_config(), 0.2, 13);
  REQUIRE_FALSE(rep.loss_trace.empty());
  for (const auto& row : rep.loss_trace) REQUIRE(row.obj.finite());
  REQUIRE(rep.front.empty());
}

TEST_CASE("no-data baselines skip the data term", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  const auto rep = run_baseline(spec, "adam", tiny_config(), 0.0, 17);
  REQUIRE(rep.observation_points.empty());
  for (const auto& row : rep.loss_trace) REQUIRE(row.obj.data == 0.0);
}

TEST_CASE("driver runs are deterministic", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  const auto a = run_mopinnenkf(spec, tiny_config(), 0.2, 19);
  const auto b = run_mopinnenkf(spec, tiny_config(), 0.2, 19);
  REQUIRE(a.metrics.mse == b.metrics.mse);
  REQUIRE(a.solution == b.solution);
  REQUIRE(a.outer_iterations == b.outer_iterations);
}

TEST_CASE("invalid baseline variants are rejected", "[driver]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  REQUIRE_THROWS_AS(run_baseline(spec, "sgd", tiny_config(), 0.2, 3), std::invalid_argument);
}

TEST_CASE("adam-pinn on burgers with true viscosity and no data reaches O(1e-3) MSE",
          "[.][slow]") {
  const auto spec = ProblemSpec::burgers(Mode::forward, /*misspecified=*/false);
  DriverConfig cfg = DriverConfig::defaults(ProblemKind::burgers);
  cfg.adam_epochs = 5000;
  cfg.res_batch = 1024;
  cfg.threads = 2;
  const auto rep = run_baseline(spec, "adam", cfg, 0.0, 1);
  INFO("test MSE = " << rep.metrics.mse);
  REQUIRE(rep.metrics.mse < 1.5e-2);
  REQUIRE(rep.metrics.mse > 0.0);
}

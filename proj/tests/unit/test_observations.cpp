#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "mopinnenkf/losses.hpp"

using namespace mopinnenkf;

TEST_CASE("collocation sets follow the sampling contract", "[observations]") {
  const auto spec = ProblemSpec::burgers(Mode::forward);
  const auto c = sample_collocation(spec, 7);
  SECTION("counts: 50/50 split of 100 condition points, 10^4 interior points") {
    REQUIRE(c.ic.size() == 50);
    REQUIRE(c.bc.size() == 50);
    REQUIRE(c.res.size() == 10000);
  }
  SECTION("boundary points sit on the boundary, initial points at t = 0") {
    for (const auto& p : c.bc) REQUIRE((p.x == spec.x_min || p.x == spec.x_max));
    for (const auto& p : c.ic) REQUIRE(p.t == 0.0);
  }
  SECTION("all points are inside the closed domain") {
    auto inside = [&](const Point& p) {
      return p.x >= spec.x_min && p.x <= spec.x_max && p.t >= 0.0 && p.t <= spec.t_max;
    };
    for (const auto& p : c.ic) REQUIRE(inside(p));
    for (const auto& p : c.bc) REQUIRE(inside(p));
    for (const auto& p : c.res) REQUIRE(inside(p));
  }
  SECTION("initial-condition targets are -sin(pi x)") {
    for (std::size_t i = 0; i < c.ic.size(); ++i)
      REQUIRE(c.ic_target[i] == Catch::Approx(-std::sin(std::numbers::pi * c.ic[i].x)).margin(1e-14));
  }
  SECTION("latin hypercube strata each contain one point") {
    std::vector<int> seen(10000, 0);
    for (const auto& p : c.res) {
      const int s = std::min(9999, static_cast<int>((p.x - spec.x_min) / 2.0 * 10000));
      seen[s] += 1;
    }
    for (int v : seen) REQUIRE(v == 1);
  }
  SECTION("deterministic for equal seeds") {
    const auto c2 = sample_collocation(spec, 7);
    REQUIRE(c.res[1234].x == c2.res[1234].x);
    REQUIRE(c.res[1234].t == c2.res[1234].t);
  }
  SECTION("tfmdwe carries one forcing-noise draw per interior point") {
    const auto f = sample_collocation(ProblemSpec::tfmdwe(Mode::forward), 3);
    REQUIRE(f.res_forcing_noise.size() == f.res.size());
  }
}

TEST_CASE("observation noise model", "[observations]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  SECTION("eta = 0 reproduces the truth exactly") {
    const auto obs = make_observations(spec, 0.0, 20, 10, 5);
    REQUIRE(obs.size() == 200);
    for (int i = 0; i < obs.size(); ++i) REQUIRE(obs.values[i] == obs.truth[i]);
  }
  SECTION("noise std tracks eta * std(truth) per grid x") {
    const int nx = 20, nt = 10;
    const double eta = 0.8;
    const auto obs = make_observations(spec, eta, nx, nt, 11);
    // independent oracle: recompute the per-x target std from the truth
    double s2 = 0.0;
    int n = 0;
    for (int ix = 0; ix < nx; ++ix) {
      double mean = 0.0, mean2 = 0.0;
      for (int jt = 0; jt < nt; ++jt) {
        const auto& p = obs.points[ix * nt + jt];
        const double u = ground_truth(spec, p.x, p.t);
        mean += u;
        mean2 += u * u;
      }
      mean /= nt;
      mean2 /= nt;
      const double target = eta * std::sqrt(std::max(0.0, mean2 - mean * mean));
      if (target <= 0.0) continue;
      for (int jt = 0; jt < nt; ++jt) {
        const int i = ix * nt + jt;
        const double z = (obs.values[i] - ground_truth(spec, obs.points[i].x, obs.points[i].t)) / target;
        s2 += z * z;
        ++n;
      }
    }
    const double ratio = std::sqrt(s2 / n);
    REQUIRE(ratio > 0.85);
    REQUIRE(ratio < 1.15);
  }
  SECTION("same seed is bit-identical, different seeds differ on values only") {
    const auto a = make_observations(spec, 0.5, 20, 10, 21);
    const auto b = make_observations(spec, 0.5, 20, 10, 21);
    const auto c = make_observations(spec, 0.5, 20, 10, 22);
    REQUIRE(a.values == b.values);
    REQUIRE(a.values != c.values);
    for (int i = 0; i < a.size(); ++i) {
      REQUIRE(a.points[i].x == c.points[i].x);
      REQUIRE(a.points[i].t == c.points[i].t);
    }
  }
  SECTION("points lie strictly inside x, within (0, T] in t") {
    const auto obs = make_observations(spec, 0.2, 20, 10, 2);
    for (const auto& p : obs.points) {
      REQUIRE(p.x > spec.x_min);
      REQUIRE(p.x < spec.x_max);
      REQUIRE(p.t > 0.0);
      REQUIRE(p.t <= spec.t_max);
    }
  }
}

TEST_CASE("observation operator is exact pointwise evaluation", "[observations]") {
  const auto spec = ProblemSpec::tfmdwe(Mode::forward);
  const auto obs = make_observations(spec, 0.0, 10, 6, 3);
  SECTION("truth evaluator reproduces the stored noiseless values") {
    const auto v = observe([&](double x, double t) { return ground_truth(spec, x, t); }, obs);
    for (int i = 0; i < obs.size(); ++i) REQUIRE(v[i] == Catch::Approx(obs.values[i]).margin(1e-14));
  }
  SECTION("constant field maps to a constant vector") {
    const auto v = observe([](double, double) { return 3.25; }, obs);
    for (double x : v) REQUIRE(x == 3.25);
  }
  SECTION("a network evaluator matches pointwise evaluate calls") {
    const auto arch = NetworkArchitecture::mlp(2, 6);
    const auto p = init_parameters(arch, 8);
    NetworkField f(arch, p);
    const auto v = observe([&](double x, double t) { return f.value(x, t); }, obs);
    for (int i = 0; i < obs.size(); ++i) {
      const auto b = evaluate(arch, p, obs.points[i].x, obs.points[i].t, 0);
      REQUIRE(v[i] == b.u());
    }
  }
  SECTION("observe is linear in the evaluator") {
    Rng rng(17);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    auto f = [](double x, double t) { return std::sin(x) * t; };
    auto g = [](double x, double t) { return x * x - t; };
    const auto vf = observe(f, obs);
    const auto vg = observe(g, obs);
    const auto vc = observe([&](double x, double t) { return a * f(x, t) + b * g(x, t); }, obs);
    for (int i = 0; i < obs.size(); ++i)
      REQUIRE(vc[i] == Catch::Approx(a * vf[i] + b * vg[i]).margin(1e-12));
  }
}

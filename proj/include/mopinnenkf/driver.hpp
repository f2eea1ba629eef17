#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "enkf.hpp"
#include "nsga3.hpp"

namespace mopinnenkf {

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

struct DriverConfig {
  int outer_max = 5;
  double eps_iter = 1e-4;
  int generations_per_outer = 3;
  int epochs_per_gen = 1000;   // Burgers default; 2000 for TFMDWE
  int population = 24;
  int adam_epochs = 5000;      // ADAM-PINN baseline budget
  int nsga_generations = 4;    // NSGA-III-PINN baseline budget
  int res_batch = 0;           // 0 = full residual set per epoch
  int obj_batch = 2048;        // ranking-objective subsample per generation
  int caputo_steps = 50;
  int hidden_layers = 8;
  int hidden_width = 20;
  int obs_nx = 20, obs_nt = 10;
  int test_nx = 256, test_nt = 100;
  int enkf_min_ensemble = 10;
  int threads = 0;  // 0 = hardware concurrency

  static DriverConfig defaults(ProblemKind kind) {
    DriverConfig c;
    if (kind == ProblemKind::tfmdwe) {
      c.epochs_per_gen = 2000;
      c.res_batch = 2000;
      c.hidden_layers = 2;
      c.hidden_width = 50;
    }
    return c;
  }

  int resolved_threads() const { return threads > 0 ? threads : default_thread_count(); }
  NetworkArchitecture architecture() const { return NetworkArchitecture::mlp(hidden_layers, hidden_width); }
};

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// MSE/MAE against the ground truth on a dense uniform test grid.
template <class FieldValue>
Metrics evaluate_metrics(FieldValue&& field, const ProblemSpec& spec, int nx = 256, int nt = 100) {
  Metrics m;
  long count = 0;
  for (int i = 0; i < nx; ++i) {
    const double x = spec.x_min + (spec.x_max - spec.x_min) * i / (nx - 1);
    for (int j = 0; j < nt; ++j) {
      const double t = spec.t_max * j / (nt - 1);
      const double d = field(x, t) - ground_truth(spec, x, t);
      m.mse += d * d;
      m.mae += std::fabs(d);
      ++count;
    }
  }
  m.mse /= static_cast<double>(count);
  m.mae /= static_cast<double>(count);
  return m;
}

struct OuterRow {
  int iteration = 0;
  ObjectiveVector best_objectives;
  double analysis_truth_mse = std::numeric_limits<double>::quiet_NaN();
  double convergence = std::numeric_limits<double>::quiet_NaN();
  double physics_value = std::numeric_limits<double>::quiet_NaN();
  int front_size = 0;
};

struct RunReport {
  std::string problem, mode, variant;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::vector<OuterRow> outer;
  Metrics metrics;
  std::optional<double> physics_estimate;
  std::optional<double> physics_error;  // |estimate - true value|
  int outer_iterations = 0;
  bool converged = false;
  std::vector<ObjectiveVector> front;  // final rank-1 objective vectors
  std::vector<GenerationRow> generation_history;
  int elitism_violations = 0;
  std::vector<TrainTraceRow> loss_trace;
  ParameterVector solution;
  NetworkArchitecture arch;
  std::vector<Point> observation_points;
  std::vector<double> observation_values;
  std::vector<double> last_analysis_mean;
  KalmanDiagnostics last_enkf_diagnostics;
};

namespace detail {

inline std::string kind_name(ProblemKind k) { return k == ProblemKind::burgers ? "burgers" : "tfmdwe"; }
inline std::string mode_name(Mode m) { return m == Mode::forward ? "forward" : "inverse"; }

/// Index of the unit-weight scalar-best member of the non-dominated front.
inline int best_individual(const Population& pop) {
  int best = -1;
  double best_scalar = std::numeric_limits<double>::infinity();
  for (int i = 0; i < pop.size(); ++i) {
    const auto& m = pop.members[static_cast<std::size_t>(i)];
    if (m.rank != 1) continue;
    const double s = weighted_scalar(m.objectives, LossWeights{});
    if (s < best_scalar) {
      best_scalar = s;
      best = i;
    }
  }
  if (best < 0) throw DivergenceError("population has no rank-1 member with finite loss");
  return best;
}

/// Ensemble membership: the rank-1 front, padded to a minimum size with
/// rank-2+ members in (rank, niche distance) order.
inline std::vector<int> ensemble_members(const Population& pop, int min_size) {
  std::vector<int> order(static_cast<std::size_t>(pop.size()));
  for (int i = 0; i < pop.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ia = pop.members[static_cast<std::size_t>(a)];
    const auto& ib = pop.members[static_cast<std::size_t>(b)];
    if (ia.rank != ib.rank) return ia.rank < ib.rank;
    if (ia.ref_distance != ib.ref_distance) return ia.ref_distance < ib.ref_distance;
    return a < b;
  });
  std::vector<int> members;
  for (int idx : order) {
    if (pop.members[static_cast<std::size_t>(idx)].rank == 1 ||
        static_cast<int>(members.size()) < min_size)
      members.push_back(idx);
  }
  return members;
}

inline void check_population_alive(const Population& pop) {
  for (const auto& m : pop.members)
    if (m.objectives.finite()) return;
  throw DivergenceError("training diverged: no finite objectives in the population");
}

}  // namespace detail

/// The full iterative scheme: NSGA-III-trained PINN population, Pareto-front
/// ensemble evaluated at the observation points, EnKF analysis, data-loss
/// refresh, repeat until the prediction change at the observation points
/// drops below eps_iter. The population warm-starts across outer iterations.
inline RunReport run_mopinnenkf(const ProblemSpec& spec, const DriverConfig& cfg, double eta,
                                std::uint64_t seed) {
  const NetworkArchitecture arch = cfg.architecture();
  const CollocationSets coll = sample_collocation(spec, Rng::derive(seed, 11));
  const ObservationSet obs = make_observations(spec, eta, cfg.obs_nx, cfg.obs_nt, Rng::derive(seed, 12));
  const ObservationErrorModel err = ObservationErrorModel::from(obs);

  RunReport rep;
  rep.problem = detail::kind_name(spec.kind);
  rep.mode = detail::mode_name(spec.mode);
  rep.variant = "mopinnenkf";
  rep.eta = eta;
  rep.seed = seed;
  rep.arch = arch;
  rep.observation_points = obs.points;
  rep.observation_values = obs.values;

  DataSet data = DataSet::from_observations(obs);
  Nsga3Options opt;
  opt.population_size = cfg.population;
  opt.epochs_per_gen = cfg.epochs_per_gen;
  opt.res_batch = cfg.res_batch;
  opt.obj_batch = cfg.obj_batch;
  opt.threads = cfg.resolved_threads();

  Population pop;
  bool warm = false;
  std::vector<double> prev_pred;
  for (int outer = 1; outer <= cfg.outer_max; ++outer) {
    LossSetup setup{&spec, &arch, &coll, &data, cfg.caputo_steps, 256, 1};
    std::vector<GenerationRow> history;
    pop = train_nsga3(setup, cfg.generations_per_outer, opt, Rng::derive(seed, 100 + static_cast<std::uint64_t>(outer)),
                      warm ? &pop : nullptr, &history, &rep.elitism_violations);
    for (auto row : history) {
      row.generation += (outer - 1) * cfg.generations_per_outer;
      rep.generation_history.push_back(row);
    }
    warm = true;
    detail::check_population_alive(pop);

    const int best = detail::best_individual(pop);
    const auto& champion = pop.members[static_cast<std::size_t>(best)];
    NetworkField field(arch, champion.genome);
    const std::vector<double> pred = observe([&](double x, double t) { return field.value(x, t); }, obs);

    OuterRow row;
    row.iteration = outer;
    row.best_objectives = champion.objectives;
    if (spec.has_physics_slot()) row.physics_value = spec.physics.constrain(champion.genome.back());
    if (!prev_pred.empty()) {
      double s = 0.0;
      for (std::size_t k = 0; k < pred.size(); ++k) {
        const double d = pred[k] - prev_pred[k];
        s += d * d;
      }
      row.convergence = s / static_cast<double>(pred.size());
    }

    const std::vector<int> members = detail::ensemble_members(pop, std::min(cfg.enkf_min_ensemble, pop.size()));
    EnsembleMatrix ens = EnsembleMatrix::zeros(static_cast<int>(members.size()), obs.size());
    ens.member_ids = members;
    for (std::size_t i = 0; i < members.size(); ++i) {
      NetworkField mf(arch, pop.members[static_cast<std::size_t>(members[i])].genome);
      for (int j = 0; j < obs.size(); ++j)
        ens.at(static_cast<int>(i), j) = mf.value(obs.points[static_cast<std::size_t>(j)].x,
                                                  obs.points[static_cast<std::size_t>(j)].t);
    }
    const AnalysisData analysis = analyze(ens, obs.values, err, Rng::derive(seed, 200 + static_cast<std::uint64_t>(outer)));
    data = DataSet::from_analysis(obs, analysis.mean);
    rep.last_analysis_mean = analysis.mean;
    rep.last_enkf_diagnostics = analysis.diagnostics;

    double truth_err = 0.0;
    for (int j = 0; j < obs.size(); ++j) {
      const double d = analysis.mean[static_cast<std::size_t>(j)] - obs.truth[static_cast<std::size_t>(j)];
      truth_err += d * d;
    }
    row.analysis_truth_mse = truth_err / obs.size();
    row.front_size = static_cast<int>(members.size());
    rep.outer.push_back(row);
    rep.outer_iterations = outer;

    prev_pred = pred;
    if (!rep.outer.empty() && std::isfinite(row.convergence) && row.convergence < cfg.eps_iter) {
      rep.converged = true;
      break;
    }
  }

  const int best = detail::best_individual(pop);
  const auto& champion = pop.members[static_cast<std::size_t>(best)];
  rep.solution = champion.genome;
  for (const auto& m : pop.members)
    if (m.rank == 1) rep.front.push_back(m.objectives);
  NetworkField field(arch, champion.genome);
  rep.metrics = evaluate_metrics([&](double x, double t) { return field.value(x, t); }, spec,
                                 cfg.test_nx, cfg.test_nt);
  if (spec.has_physics_slot()) {
    rep.physics_estimate = spec.physics.constrain(champion.genome.back());
    rep.physics_error = std::fabs(*rep.physics_estimate - spec.physics.true_value);
  }
  return rep;
}

/// Baselines trained directly on the raw (noisy) observations: the plain
/// scalar-loss ADAM trainer and the evolutionary trainer without the filter.
/// eta == 0 means the no-data regime.
inline RunReport run_baseline(const ProblemSpec& spec, const std::string& variant,
                              const DriverConfig& cfg, double eta, std::uint64_t seed) {
  if (variant != "adam" && variant != "nsga3")
    throw std::invalid_argument("run_baseline: variant must be adam or nsga3");
  const NetworkArchitecture arch = cfg.architecture();
  const CollocationSets coll = sample_collocation(spec, Rng::derive(seed, 11));
  const bool no_data = eta == 0.0;
  ObservationSet obs;
  DataSet data;
  if (!no_data) {
    obs = make_observations(spec, eta, cfg.obs_nx, cfg.obs_nt, Rng::derive(seed, 12));
    data = DataSet::from_observations(obs);
  }

  RunReport rep;
  rep.problem = detail::kind_name(spec.kind);
  rep.mode = detail::mode_name(spec.mode);
  rep.variant = variant;
  rep.eta = eta;
  rep.seed = seed;
  rep.arch = arch;
  rep.observation_points = obs.points;
  rep.observation_values = obs.values;

  LossSetup setup{&spec, &arch, &coll, &data, cfg.caputo_steps, 256, 1};
  ParameterVector solution;
  if (variant == "adam") {
    setup.threads = cfg.resolved_threads();
    TrainOptions to;
    to.epochs = cfg.adam_epochs;
    to.res_batch = cfg.res_batch;
    to.seed = Rng::derive(seed, 21);
    to.trace_every = std::max(1, cfg.adam_epochs / 200);
    ParameterVector params = init_parameters(arch, Rng::derive(seed, 10), spec.physics_slot_init());
    TrainResult tr;
    try {
      tr = train_adam(setup, std::move(params), to);
    } catch (const std::invalid_argument& e) {
      throw DivergenceError(std::string("adam training diverged: ") + e.what());
    }
    if (!tr.trace.empty() && !tr.trace.back().obj.finite())
      throw DivergenceError("adam training diverged: non-finite objectives");
    rep.loss_trace = std::move(tr.trace);
    solution = std::move(tr.params);
  } else {
    Nsga3Options opt;
    opt.population_size = cfg.population;
    opt.epochs_per_gen = cfg.epochs_per_gen;
    opt.res_batch = cfg.res_batch;
    opt.obj_batch = cfg.obj_batch;
    opt.threads = cfg.resolved_threads();
    const Population pop = train_nsga3(setup, cfg.nsga_generations, opt, Rng::derive(seed, 30),
                                       nullptr, &rep.generation_history, &rep.elitism_violations);
    detail::check_population_alive(pop);
    const int best = detail::best_individual(pop);
    solution = pop.members[static_cast<std::size_t>(best)].genome;
    for (const auto& m : pop.members)
      if (m.rank == 1) rep.front.push_back(m.objectives);
  }

  rep.solution = solution;
  NetworkField field(arch, rep.solution);
  rep.metrics = evaluate_metrics([&](double x, double t) { return field.value(x, t); }, spec,
                                 cfg.test_nx, cfg.test_nt);
  if (spec.has_physics_slot()) {
    rep.physics_estimate = spec.physics.constrain(rep.solution.back());
    rep.physics_error = std::fabs(*rep.physics_estimate - spec.physics.true_value);
  }
  return rep;
}

}  // namespace mopinnenkf

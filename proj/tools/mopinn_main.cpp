// Command-line harness: data generation, experiment execution, sweeps and
// report aggregation for the MoPINNEnKF study.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "mopinnenkf/csv.hpp"
#include "mopinnenkf/driver.hpp"
#include "mopinnenkf/experiment_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mopinnenkf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct CliOptions {
  std::string config_path;
  ExperimentConfig cfg;
  // which flags were set explicitly (to override a config file)
  std::map<std::string, bool> given;
};

void add_experiment_flags(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--problem", cfg.problem, "burgers | tfmdwe");
  cmd->add_option("--mode", cfg.mode, "forward | inverse");
  cmd->add_option("--variant", cfg.variant, "adam | nsga3 | mopinnenkf");
  cmd->add_option("--eta", cfg.eta, "observation noise level (0.0, 0.2, 0.5, 0.8)");
  cmd->add_option("--seed", cfg.seed, "experiment seed");
  cmd->add_option("--out", cfg.out, "output directory");
  cmd->add_option("--misspecified", cfg.misspecified, "forward-problem model error on/off");
  cmd->add_option("--threads", cfg.threads, "worker threads (0 = hardware)");
  cmd->add_option("--population", cfg.population, "NSGA-III population size");
  cmd->add_option("--generations-per-outer", cfg.generations_per_outer, "generations per outer iteration");
  cmd->add_option("--epochs-per-gen", cfg.epochs_per_gen, "memetic epochs per generation");
  cmd->add_option("--adam-epochs", cfg.adam_epochs, "ADAM baseline epochs");
  cmd->add_option("--nsga-generations", cfg.nsga_generations, "NSGA-III baseline generations");
  cmd->add_option("--outer-max", cfg.outer_max, "outer iteration cap");
  cmd->add_option("--eps-iter", cfg.eps_iter, "outer convergence threshold");
  cmd->add_option("--res-batch", cfg.res_batch, "residual points per epoch (-1 default, 0 full)");
  cmd->add_option("--obj-batch", cfg.obj_batch, "residual points per objective evaluation");
  cmd->add_option("--caputo-steps", cfg.caputo_steps, "Caputo history steps");
  cmd->add_option("--hidden-layers", cfg.hidden_layers, "hidden layer count");
  cmd->add_option("--hidden-width", cfg.hidden_width, "hidden layer width");
  cmd->add_option("--obs-nx", cfg.obs_nx, "observation grid points in x");
  cmd->add_option("--obs-nt", cfg.obs_nt, "observation grid points in t");
  cmd->add_option("--test-nx", cfg.test_nx, "test grid points in x");
  cmd->add_option("--test-nt", cfg.test_nt, "test grid points in t");
}

/// Loads --config (if given) and lets explicitly-passed flags override it.
ExperimentConfig resolve_config(CLI::App* cmd, const std::string& config_path,
                                const ExperimentConfig& flag_cfg) {
  if (config_path.empty()) return flag_cfg;
  std::ifstream in(config_path);
  if (!in) throw IoError("cannot open config file: " + config_path);
  ExperimentConfig cfg = ExperimentConfig::parse(in);
  const ExperimentConfig defaults;
  auto overridden = [&](const std::string& flag) { return cmd->count(flag) > 0; };
  if (overridden("--problem")) cfg.problem = flag_cfg.problem;
  if (overridden("--mode")) cfg.mode = flag_cfg.mode;
  if (overridden("--variant")) cfg.variant = flag_cfg.variant;
  if (overridden("--eta")) cfg.eta = flag_cfg.eta;
  if (overridden("--seed")) cfg.seed = flag_cfg.seed;
  if (overridden("--out")) cfg.out = flag_cfg.out;
  if (overridden("--misspecified")) cfg.misspecified = flag_cfg.misspecified;
  if (overridden("--threads")) cfg.threads = flag_cfg.threads;
  if (overridden("--population")) cfg.population = flag_cfg.population;
  if (overridden("--generations-per-outer")) cfg.generations_per_outer = flag_cfg.generations_per_outer;
  if (overridden("--epochs-per-gen")) cfg.epochs_per_gen = flag_cfg.epochs_per_gen;
  if (overridden("--adam-epochs")) cfg.adam_epochs = flag_cfg.adam_epochs;
  if (overridden("--nsga-generations")) cfg.nsga_generations = flag_cfg.nsga_generations;
  if (overridden("--outer-max")) cfg.outer_max = flag_cfg.outer_max;
  if (overridden("--eps-iter")) cfg.eps_iter = flag_cfg.eps_iter;
  if (overridden("--res-batch")) cfg.res_batch = flag_cfg.res_batch;
  if (overridden("--obj-batch")) cfg.obj_batch = flag_cfg.obj_batch;
  if (overridden("--caputo-steps")) cfg.caputo_steps = flag_cfg.caputo_steps;
  if (overridden("--hidden-layers")) cfg.hidden_layers = flag_cfg.hidden_layers;
  if (overridden("--hidden-width")) cfg.hidden_width = flag_cfg.hidden_width;
  if (overridden("--obs-nx")) cfg.obs_nx = flag_cfg.obs_nx;
  if (overridden("--obs-nt")) cfg.obs_nt = flag_cfg.obs_nt;
  if (overridden("--test-nx")) cfg.test_nx = flag_cfg.test_nx;
  if (overridden("--test-nt")) cfg.test_nt = flag_cfg.test_nt;
  (void)defaults;
  return cfg;
}

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

void write_metrics_csv(const ExperimentConfig& cfg, const RunReport& rep, const std::string& path) {
  CsvWriter w(path, {"problem", "mode", "variant", "eta", "seed", "mse", "mae", "param_estimate",
                     "param_l1_error", "outer_iterations", "converged"});
  w.row({rep.problem, rep.mode, rep.variant, format_double(rep.eta), std::to_string(rep.seed),
         format_double(rep.metrics.mse), format_double(rep.metrics.mae),
         opt_str(rep.physics_estimate), opt_str(rep.physics_error),
         std::to_string(rep.outer_iterations), rep.converged ? "1" : "0"});
  (void)cfg;
  w.close();
}

void write_report_json(const ExperimentConfig& cfg, const RunReport& rep, const std::string& path) {
  json j;
  j["problem"] = rep.problem;
  j["mode"] = rep.mode;
  j["variant"] = rep.variant;
  j["eta"] = rep.eta;
  j["seed"] = rep.seed;
  j["mse"] = rep.metrics.mse;
  j["mae"] = rep.metrics.mae;
  if (rep.physics_estimate) {
    j["param_estimate"] = *rep.physics_estimate;
    j["param_l1_error"] = *rep.physics_error;
  }
  j["outer_iterations"] = rep.outer_iterations;
  j["converged"] = rep.converged;
  j["elitism_violations"] = rep.elitism_violations;
  j["config"] = cfg.serialize();
  json outer = json::array();
  for (const auto& row : rep.outer) {
    json r;
    r["iteration"] = row.iteration;
    r["l_res"] = row.best_objectives.res;
    r["l_ic"] = row.best_objectives.ic;
    r["l_bc"] = row.best_objectives.bc;
    r["l_data"] = row.best_objectives.data;
    r["analysis_truth_mse"] = row.analysis_truth_mse;
    r["convergence"] = row.convergence;
    r["physics_value"] = row.physics_value;
    r["front_size"] = row.front_size;
    outer.push_back(r);
  }
  j["outer"] = outer;
  json front = json::array();
  for (const auto& o : rep.front)
    front.push_back({{"l_res", o.res}, {"l_ic", o.ic}, {"l_bc", o.bc}, {"l_data", o.data}});
  j["front"] = front;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

void write_solution_grid(const RunReport& rep, const ProblemSpec& spec, const std::string& path,
                         int nx, int nt) {
  NetworkField field(rep.arch, rep.solution);
  CsvWriter w(path, {"x", "t", "u_pred", "u_true", "abs_err"});
  for (int i = 0; i < nx; ++i) {
    const double x = spec.x_min + (spec.x_max - spec.x_min) * i / (nx - 1);
    for (int j = 0; j < nt; ++j) {
      const double t = spec.t_max * j / (nt - 1);
      const double up = field.value(x, t);
      const double ut = ground_truth(spec, x, t);
      w.row(std::vector<double>{x, t, up, ut, std::fabs(up - ut)});
    }
  }
  w.close();
}

int cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  const ProblemSpec spec = cfg.make_spec();
  const DriverConfig dc = cfg.make_driver_config();
  const fs::path out(cfg.out);
  fs::create_directories(out);

  const CollocationSets coll = sample_collocation(spec, Rng::derive(cfg.seed, 11));
  save_collocation_csv(coll, (out / "collocation.csv").string());
  const ObservationSet obs = make_observations(spec, cfg.eta, dc.obs_nx, dc.obs_nt, Rng::derive(cfg.seed, 12));
  save_observations_csv(obs, (out / "observations.csv").string());
  std::vector<std::string> files = {(out / "collocation.csv").string(),
                                    (out / "observations.csv").string()};
  if (cfg.problem == "burgers") {
    const auto& oracle = BurgersOracle::shared(spec.physics.true_value);
    const std::string cache = (out / "burgers_oracle.csv").string();
    oracle.save_csv(cache);
    files.push_back(cache);
  }
  for (const auto& f : files)
    std::printf("%016llx  %s\n", static_cast<unsigned long long>(file_checksum(f)), f.c_str());
  return kExitOk;
}

int cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  const ProblemSpec spec = cfg.make_spec();
  const DriverConfig dc = cfg.make_driver_config();
  const fs::path dir = fs::path(cfg.out) / cfg.run_name();
  fs::create_directories(dir);

  RunReport rep;
  bool diverged = false;
  std::string divergence_what;
  try {
    if (cfg.variant == "mopinnenkf")
      rep = run_mopinnenkf(spec, dc, cfg.eta, cfg.seed);
    else
      rep = run_baseline(spec, cfg.variant, dc, cfg.eta, cfg.seed);
  } catch (const DivergenceError& e) {
    diverged = true;
    divergence_what = e.what();
    rep.problem = cfg.problem;
    rep.mode = cfg.mode;
    rep.variant = cfg.variant;
    rep.eta = cfg.eta;
    rep.seed = cfg.seed;
    rep.metrics = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }

  std::vector<std::string> files;
  {
    std::ofstream c((dir / "config.txt").string(), std::ios::binary | std::ios::trunc);
    c << cfg.serialize();
    files.push_back((dir / "config.txt").string());
  }
  write_metrics_csv(cfg, rep, (dir / "metrics.csv").string());
  files.push_back((dir / "metrics.csv").string());
  write_report_json(cfg, rep, (dir / "report.json").string());
  files.push_back((dir / "report.json").string());
  if (diverged) {
    std::ofstream d((dir / "divergence.txt").string(), std::ios::binary | std::ios::trunc);
    d << divergence_what << '\n';
    files.push_back((dir / "divergence.txt").string());
  } else {
    if (cfg.eta > 0.0) {
      const ObservationSet obs =
          make_observations(spec, cfg.eta, dc.obs_nx, dc.obs_nt, Rng::derive(cfg.seed, 12));
      save_observations_csv(obs, (dir / "observations.csv").string());
      files.push_back((dir / "observations.csv").string());
    }
    if (!rep.loss_trace.empty()) {
      CsvWriter w((dir / "loss_trajectory.csv").string(),
                  {"epoch", "l_res", "l_ic", "l_bc", "l_data", "scalar"});
      for (const auto& r : rep.loss_trace)
        w.row(std::vector<double>{static_cast<double>(r.epoch), r.obj.res, r.obj.ic, r.obj.bc,
                                  r.obj.data, r.scalar});
      w.close();
      files.push_back((dir / "loss_trajectory.csv").string());
    }
    if (!rep.outer.empty()) {
      CsvWriter w((dir / "outer_iterations.csv").string(),
                  {"iteration", "l_res", "l_ic", "l_bc", "l_data", "analysis_truth_mse",
                   "convergence", "physics_value", "front_size"});
      for (const auto& r : rep.outer)
        w.row(std::vector<double>{static_cast<double>(r.iteration), r.best_objectives.res,
                                  r.best_objectives.ic, r.best_objectives.bc, r.best_objectives.data,
                                  r.analysis_truth_mse, r.convergence, r.physics_value,
                                  static_cast<double>(r.front_size)});
      w.close();
      files.push_back((dir / "outer_iterations.csv").string());
    }
    if (!rep.generation_history.empty()) {
      CsvWriter w((dir / "front_summary.csv").string(),
                  {"generation", "individual", "l_res", "l_ic", "l_bc", "l_data", "rank"});
      for (const auto& r : rep.generation_history)
        w.row(std::vector<double>{static_cast<double>(r.generation),
                                  static_cast<double>(r.individual), r.objectives.res,
                                  r.objectives.ic, r.objectives.bc, r.objectives.data,
                                  static_cast<double>(r.rank)});
      w.close();
      files.push_back((dir / "front_summary.csv").string());
    }
    if (!rep.front.empty()) {
      CsvWriter w((dir / "pareto_front.csv").string(),
                  {"individual", "l_res", "l_ic", "l_bc", "l_data"});
      for (std::size_t i = 0; i < rep.front.size(); ++i)
        w.row(std::vector<double>{static_cast<double>(i), rep.front[i].res, rep.front[i].ic,
                                  rep.front[i].bc, rep.front[i].data});
      w.close();
      files.push_back((dir / "pareto_front.csv").string());
    }
    if (!rep.last_analysis_mean.empty()) {
      const ObservationSet obs =
          make_observations(spec, cfg.eta, dc.obs_nx, dc.obs_nt, Rng::derive(cfg.seed, 12));
      save_analysis_csv(obs, rep.last_analysis_mean, (dir / "analysis_mean.csv").string());
      files.push_back((dir / "analysis_mean.csv").string());
    }
    write_solution_grid(rep, spec, (dir / "solution_grid.csv").string(), dc.test_nx, dc.test_nt);
    files.push_back((dir / "solution_grid.csv").string());
  }
  {
    std::ofstream m((dir / "manifest.txt").string(), std::ios::binary | std::ios::trunc);
    for (const auto& f : files) m << fs::path(f).filename().string() << '\n';
    m << "manifest.txt" << '\n';
  }
  if (!diverged)
    std::printf("%s: mse=%.6g mae=%.6g%s\n", cfg.run_name().c_str(), rep.metrics.mse, rep.metrics.mae,
                rep.physics_estimate ? ("  param=" + format_double(*rep.physics_estimate)).c_str() : "");
  else
    std::fprintf(stderr, "%s: diverged (%s)\n", cfg.run_name().c_str(), divergence_what.c_str());
  return diverged ? kExitDivergence : kExitOk;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_sweep(const ExperimentConfig& base, const std::string& variants, const std::string& etas,
              const std::string& seeds) {
  int failures = 0;
  std::vector<std::vector<std::string>> rows;
  for (const auto& v : split_list(variants)) {
    for (const auto& e : split_list(etas)) {
      for (const auto& s : split_list(seeds)) {
        ExperimentConfig cfg = base;
        cfg.variant = v;
        cfg.eta = std::stod(e);
        cfg.seed = std::stoull(s);
        if (cfg.eta == 0.0 && v == "mopinnenkf") continue;
        cfg.validate();
        const int rc = cmd_run(cfg);
        if (rc != kExitOk) ++failures;
        const fs::path metrics = fs::path(cfg.out) / cfg.run_name() / "metrics.csv";
        const CsvTable t = read_csv(metrics.string());
        if (!t.rows.empty()) {
          rows.push_back({cfg.problem, cfg.mode, v, e, s,
                          format_double(t.rows[0][5]), format_double(t.rows[0][6])});
        }
      }
    }
  }
  CsvWriter w((fs::path(base.out) / "sweep_summary.csv").string(),
              {"problem", "mode", "variant", "eta", "seed", "mse", "mae"});
  for (const auto& r : rows) w.row(r);
  w.close();
  std::printf("sweep complete: %zu runs, %d failed\n", rows.size(), failures);
  return failures == 0 ? kExitOk : kExitDivergence;
}

int cmd_report(const std::string& dir) {
  struct Key {
    std::string problem, mode, variant;
    double eta;
    bool operator<(const Key& o) const {
      return std::tie(problem, mode, variant, eta) < std::tie(o.problem, o.mode, o.variant, o.eta);
    }
  };
  struct Acc {
    std::vector<double> mse, mae, param_err;
  };
  std::map<Key, Acc> groups;
  int skipped = 0, loaded = 0;
  if (!fs::exists(dir)) throw IoError("no such directory: " + dir);
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().filename() != "report.json") continue;
    try {
      std::ifstream in(entry.path());
      const json j = json::parse(in);
      Key k{j.at("problem").get<std::string>(), j.at("mode").get<std::string>(),
            j.at("variant").get<std::string>(), j.at("eta").get<double>()};
      Acc& a = groups[k];
      a.mse.push_back(j.at("mse").get<double>());
      a.mae.push_back(j.at("mae").get<double>());
      if (j.contains("param_l1_error")) a.param_err.push_back(j.at("param_l1_error").get<double>());
      ++loaded;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: skipping %s (%s)\n", entry.path().string().c_str(), e.what());
      ++skipped;
    }
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(s2 / (static_cast<double>(v.size()) - 1.0)) : 0.0;
    return std::pair<double, double>{m, sd};
  };
  CsvWriter w((fs::path(dir) / "aggregate.csv").string(),
              {"problem", "mode", "variant", "eta", "runs", "mse_mean", "mse_std", "mae_mean",
               "mae_std", "param_err_mean", "param_err_std"});
  std::printf("%-8s %-8s %-11s %-5s %-5s %-12s %-12s\n", "problem", "mode", "variant", "eta", "runs",
              "mse", "mae");
  for (const auto& [k, a] : groups) {
    const auto [mm, ms] = mean_std(a.mse);
    const auto [am, as] = mean_std(a.mae);
    std::pair<double, double> pe{std::nan(""), std::nan("")};
    if (!a.param_err.empty()) pe = mean_std(a.param_err);
    w.row({k.problem, k.mode, k.variant, format_double(k.eta), std::to_string(a.mse.size()),
           format_double(mm), format_double(ms), format_double(am), format_double(as),
           a.param_err.empty() ? "" : format_double(pe.first),
           a.param_err.empty() ? "" : format_double(pe.second)});
    std::printf("%-8s %-8s %-11s %-5g %-5zu %-12.5g %-12.5g\n", k.problem.c_str(), k.mode.c_str(),
                k.variant.c_str(), k.eta, a.mse.size(), mm, am);
  }
  w.close();
  std::printf("aggregated %d runs, skipped %d\n", loaded, skipped);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoPINNEnKF experiments: multi-objective PINN training with ensemble Kalman filtering"};
  app.require_subcommand(1);

  ExperimentConfig gen_cfg, run_cfg, sweep_cfg;
  std::string gen_config_path, run_config_path, sweep_config_path;
  std::string sweep_variants = "adam,nsga3,mopinnenkf", sweep_etas = "0.2,0.5,0.8", sweep_seeds = "1";
  std::string report_dir;

  auto* gen = app.add_subcommand("generate", "write observation/collocation/oracle data files");
  gen->add_option("--config", gen_config_path, "config file (key = value)");
  add_experiment_flags(gen, gen_cfg);

  auto* run = app.add_subcommand("run", "execute one experiment");
  run->add_option("--config", run_config_path, "config file (key = value)");
  add_experiment_flags(run, run_cfg);

  auto* sweep = app.add_subcommand("sweep", "run a variant x eta x seed grid");
  sweep->add_option("--config", sweep_config_path, "config file (key = value)");
  add_experiment_flags(sweep, sweep_cfg);
  sweep->add_option("--variants", sweep_variants, "comma-separated variants");
  sweep->add_option("--etas", sweep_etas, "comma-separated noise levels");
  sweep->add_option("--seeds", sweep_seeds, "comma-separated seeds");

  auto* report = app.add_subcommand("report", "aggregate run reports into tables");
  report->add_option("dir", report_dir, "directory containing run outputs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(resolve_config(gen, gen_config_path, gen_cfg));
    if (run->parsed()) return cmd_run(resolve_config(run, run_config_path, run_cfg));
    if (sweep->parsed())
      return cmd_sweep(resolve_config(sweep, sweep_config_path, sweep_cfg), sweep_variants,
                       sweep_etas, sweep_seeds);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return kExitDivergence;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}

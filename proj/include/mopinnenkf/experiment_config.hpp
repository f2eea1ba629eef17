#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "driver.hpp"

namespace mopinnenkf {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// One experiment: problem, mode, trainer variant, noise level, seed, output
/// directory, and budget overrides (0 keeps the per-problem default).
/// Serializes to diffable `key = value` text that parses back exactly.
struct ExperimentConfig {
  std::string problem = "burgers";     // burgers | tfmdwe
  std::string mode = "forward";        // forward | inverse
  std::string variant = "mopinnenkf";  // adam | nsga3 | mopinnenkf
  double eta = 0.2;                    // 0.0 | 0.2 | 0.5 | 0.8
  std::uint64_t seed = 1;
  std::string out = "runs";
  bool misspecified = true;  // forward-problem model error on/off
  int threads = 0;

  // budget overrides; 0 = problem default
  int population = 0;
  int generations_per_outer = 0;
  int epochs_per_gen = 0;
  int adam_epochs = 0;
  int nsga_generations = 0;
  int outer_max = 0;
  double eps_iter = 0.0;
  int res_batch = -1;  // -1 = default, 0 = full set
  int obj_batch = 0;
  int caputo_steps = 0;
  int hidden_layers = 0;
  int hidden_width = 0;
  int obs_nx = 0;
  int obs_nt = 0;
  int test_nx = 0;
  int test_nt = 0;

  bool operator==(const ExperimentConfig&) const = default;

  void validate() const {
    if (problem != "burgers" && problem != "tfmdwe")
      throw ConfigError("problem must be burgers or tfmdwe");
    if (mode != "forward" && mode != "inverse") throw ConfigError("mode must be forward or inverse");
    if (variant != "adam" && variant != "nsga3" && variant != "mopinnenkf")
      throw ConfigError("variant must be adam, nsga3 or mopinnenkf");
    if (eta != 0.0 && eta != 0.2 && eta != 0.5 && eta != 0.8)
      throw ConfigError("eta must be one of 0.0, 0.2, 0.5, 0.8");
    if (eta == 0.0 && variant == "mopinnenkf")
      throw ConfigError("mopinnenkf requires observations; eta = 0.0 is the no-data regime");
    if (eps_iter < 0.0) throw ConfigError("eps_iter must be non-negative");
    for (int v : {population, generations_per_outer, epochs_per_gen, adam_epochs, nsga_generations,
                  outer_max, obj_batch, caputo_steps, hidden_layers, hidden_width, obs_nx, obs_nt,
                  test_nx, test_nt})
      if (v < 0) throw ConfigError("budget overrides must be non-negative");
    if (res_batch < -1) throw ConfigError("res_batch must be -1 (default), 0 (full) or positive");
  }

  ProblemSpec make_spec() const {
    const Mode m = mode == "forward" ? Mode::forward : Mode::inverse;
    ProblemSpec s = problem == "burgers" ? ProblemSpec::burgers(m, misspecified)
                                         : ProblemSpec::tfmdwe(m, misspecified);
    return s;
  }

  DriverConfig make_driver_config() const {
    DriverConfig c = DriverConfig::defaults(problem == "burgers" ? ProblemKind::burgers
                                                                 : ProblemKind::tfmdwe);
    if (population > 0) c.population = population;
    if (generations_per_outer > 0) c.generations_per_outer = generations_per_outer;
    if (epochs_per_gen > 0) c.epochs_per_gen = epochs_per_gen;
    if (adam_epochs > 0) c.adam_epochs = adam_epochs;
    if (nsga_generations > 0) c.nsga_generations = nsga_generations;
    if (outer_max > 0) c.outer_max = outer_max;
    if (eps_iter > 0.0) c.eps_iter = eps_iter;
    if (res_batch >= 0) c.res_batch = res_batch;
    if (obj_batch > 0) c.obj_batch = obj_batch;
    if (caputo_steps > 0) c.caputo_steps = caputo_steps;
    if (hidden_layers > 0) c.hidden_layers = hidden_layers;
    if (hidden_width > 0) c.hidden_width = hidden_width;
    if (obs_nx > 0) c.obs_nx = obs_nx;
    if (obs_nt > 0) c.obs_nt = obs_nt;
    if (test_nx > 0) c.test_nx = test_nx;
    if (test_nt > 0) c.test_nt = test_nt;
    c.threads = threads;
    return c;
  }

  std::string run_name() const {
    char eta_buf[16];
    std::snprintf(eta_buf, sizeof(eta_buf), "%g", eta);
    return problem + "_" + mode + "_" + variant + "_eta" + eta_buf + "_seed" + std::to_string(seed);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "problem = " << problem << '\n';
    os << "mode = " << mode << '\n';
    os << "variant = " << variant << '\n';
    os << "eta = " << format_double(eta) << '\n';
    os << "seed = " << seed << '\n';
    os << "out = " << out << '\n';
    os << "misspecified = " << (misspecified ? "true" : "false") << '\n';
    os << "threads = " << threads << '\n';
    os << "population = " << population << '\n';
    os << "generations_per_outer = " << generations_per_outer << '\n';
    os << "epochs_per_gen = " << epochs_per_gen << '\n';
    os << "adam_epochs = " << adam_epochs << '\n';
    os << "nsga_generations = " << nsga_generations << '\n';
    os << "outer_max = " << outer_max << '\n';
    os << "eps_iter = " << format_double(eps_iter) << '\n';
    os << "res_batch = " << res_batch << '\n';
    os << "obj_batch = " << obj_batch << '\n';
    os << "caputo_steps = " << caputo_steps << '\n';
    os << "hidden_layers = " << hidden_layers << '\n';
    os << "hidden_width = " << hidden_width << '\n';
    os << "obs_nx = " << obs_nx << '\n';
    os << "obs_nt = " << obs_nt << '\n';
    os << "test_nx = " << test_nx << '\n';
    os << "test_nt = " << test_nt << '\n';
    return os.str();
  }

  static ExperimentConfig parse(std::istream& in) {
    ExperimentConfig c;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      try {
        if (key == "problem") c.problem = val;
        else if (key == "mode") c.mode = val;
        else if (key == "variant") c.variant = val;
        else if (key == "eta") c.eta = std::stod(val);
        else if (key == "seed") c.seed = std::stoull(val);
        else if (key == "out") c.out = val;
        else if (key == "misspecified") c.misspecified = (val == "true" || val == "1");
        else if (key == "threads") c.threads = std::stoi(val);
        else if (key == "population") c.population = std::stoi(val);
        else if (key == "generations_per_outer") c.generations_per_outer = std::stoi(val);
        else if (key == "epochs_per_gen") c.epochs_per_gen = std::stoi(val);
        else if (key == "adam_epochs") c.adam_epochs = std::stoi(val);
        else if (key == "nsga_generations") c.nsga_generations = std::stoi(val);
        else if (key == "outer_max") c.outer_max = std::stoi(val);
        else if (key == "eps_iter") c.eps_iter = std::stod(val);
        else if (key == "res_batch") c.res_batch = std::stoi(val);
        else if (key == "obj_batch") c.obj_batch = std::stoi(val);
        else if (key == "caputo_steps") c.caputo_steps = std::stoi(val);
        else if (key == "hidden_layers") c.hidden_layers = std::stoi(val);
        else if (key == "hidden_width") c.hidden_width = std::stoi(val);
        else if (key == "obs_nx") c.obs_nx = std::stoi(val);
        else if (key == "obs_nt") c.obs_nt = std::stoi(val);
        else if (key == "test_nx") c.test_nx = std::stoi(val);
        else if (key == "test_nt") c.test_nt = std::stoi(val);
        else throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      } catch (const std::invalid_argument&) {
        throw ConfigError("line " + std::to_string(line_no) + ": cannot parse value for '" + key + "'");
      } catch (const std::out_of_range&) {
        throw ConfigError("line " + std::to_string(line_no) + ": value out of range for '" + key + "'");
      }
    }
    return c;
  }
};

}  // namespace mopinnenkf

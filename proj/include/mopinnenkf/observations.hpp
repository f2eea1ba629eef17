#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csv.hpp"
#include "problems.hpp"
#include "rng.hpp"

namespace mopinnenkf {

struct Point {
  double x = 0.0, t = 0.0;
};

/// Training point sets: initial/boundary condition points on uniform grids
/// ("evenly"), interior residual points by seeded Latin hypercube sampling.
struct CollocationSets {
  std::vector<Point> ic, bc, res;
  std::vector<double> ic_target, bc_target;
  std::vector<double> res_forcing_noise;  // TFMDWE: standard normal draw per point

  int total() const { return static_cast<int>(ic.size() + bc.size() + res.size()); }
};

inline CollocationSets sample_collocation(const ProblemSpec& spec, std::uint64_t seed,
                                          int n_icbc = 100, int n_res = 10000) {
  CollocationSets c;
  const int n_ic = n_icbc / 2;
  const int n_bc = n_icbc - n_ic;
  c.ic.reserve(n_ic);
  for (int i = 0; i < n_ic; ++i) {
    const double x = spec.x_min + (spec.x_max - spec.x_min) * i / (n_ic - 1);
    c.ic.push_back({x, 0.0});
    c.ic_target.push_back(spec.kind == ProblemKind::burgers ? -std::sin(std::numbers::pi * x) : 0.0);
  }
  const int per_side = n_bc / 2;
  for (int i = 0; i < per_side; ++i) {
    const double t = spec.t_max * i / (per_side - 1);
    c.bc.push_back({spec.x_min, t});
    c.bc.push_back({spec.x_max, t});
    c.bc_target.push_back(0.0);
    c.bc_target.push_back(0.0);
  }
  Rng rng(seed);
  std::vector<int> px(n_res), pt(n_res);
  for (int i = 0; i < n_res; ++i) px[i] = pt[i] = i;
  shuffle(px, rng);
  shuffle(pt, rng);
  c.res.reserve(n_res);
  for (int i = 0; i < n_res; ++i) {
    const double ux = (px[i] + rng.uniform()) / n_res;
    const double ut = (pt[i] + rng.uniform()) / n_res;
    c.res.push_back({spec.x_min + (spec.x_max - spec.x_min) * ux, spec.t_max * ut});
  }
  if (spec.kind == ProblemKind::tfmdwe) {
    c.res_forcing_noise.reserve(n_res);
    for (int i = 0; i < n_res; ++i) c.res_forcing_noise.push_back(rng.normal());
  }
  return c;
}

/// Noisy samples of the true solution on a regular sparse grid. The noise
/// standard deviation is eta times the standard deviation of the true
/// solution over the time slice at each grid x.
struct ObservationSet {
  std::vector<Point> points;   // fixed order: x-major, t within
  std::vector<double> values;  // noisy samples
  std::vector<double> truth;   // noiseless reference (kept for diagnostics)
  std::vector<double> sigma;   // per-point observation std (eta * per-x std)
  double eta = 0.0;
  std::uint64_t seed = 0;
  int nx = 0, nt = 0;

  int size() const { return static_cast<int>(points.size()); }
};

inline ObservationSet make_observations(const ProblemSpec& spec, double eta, int nx, int nt,
                                        std::uint64_t seed) {
  if (eta < 0.0) throw std::invalid_argument("make_observations: eta must be non-negative");
  ObservationSet obs;
  obs.eta = eta;
  obs.seed = seed;
  obs.nx = nx;
  obs.nt = nt;
  std::vector<double> xs(nx), ts(nt);
  for (int i = 0; i < nx; ++i)
    xs[i] = spec.x_min + (spec.x_max - spec.x_min) * (i + 1) / (nx + 1);
  for (int j = 0; j < nt; ++j) ts[j] = spec.t_max * (j + 1) / nt;
  Rng rng(seed);
  for (int i = 0; i < nx; ++i) {
    double mean = 0.0, mean2 = 0.0;
    std::vector<double> slice(nt);
    for (int j = 0; j < nt; ++j) {
      slice[j] = ground_truth(spec, xs[i], ts[j]);
      mean += slice[j];
      mean2 += slice[j] * slice[j];
    }
    mean /= nt;
    mean2 /= nt;
    const double sd = std::sqrt(std::max(0.0, mean2 - mean * mean));
    const double sig = eta * sd;
    for (int j = 0; j < nt; ++j) {
      obs.points.push_back({xs[i], ts[j]});
      obs.truth.push_back(slice[j]);
      obs.sigma.push_back(sig);
      obs.values.push_back(slice[j] + sig * rng.normal());
    }
  }
  return obs;
}

/// Observation operator H: exact evaluation at the stored points, in the
/// stored order (no interpolation).
template <class FieldValue>
std::vector<double> observe(FieldValue&& field, const ObservationSet& obs) {
  std::vector<double> out;
  out.reserve(obs.points.size());
  for (const auto& p : obs.points) out.push_back(field(p.x, p.t));
  return out;
}

inline void save_observations_csv(const ObservationSet& obs, const std::string& path) {
  CsvWriter w(path, {"x", "t", "value", "sigma"});
  for (int i = 0; i < obs.size(); ++i)
    w.row(std::vector<double>{obs.points[i].x, obs.points[i].t, obs.values[i], obs.sigma[i]});
  w.close();
}

inline void save_collocation_csv(const CollocationSets& c, const std::string& path) {
  CsvWriter w(path, {"set", "x", "t", "target"});
  for (std::size_t i = 0; i < c.ic.size(); ++i)
    w.row({"ic", format_double(c.ic[i].x), format_double(c.ic[i].t), format_double(c.ic_target[i])});
  for (std::size_t i = 0; i < c.bc.size(); ++i)
    w.row({"bc", format_double(c.bc[i].x), format_double(c.bc[i].t), format_double(c.bc_target[i])});
  for (std::size_t i = 0; i < c.res.size(); ++i)
    w.row({"res", format_double(c.res[i].x), format_double(c.res[i].t), ""});
  w.close();
}

}  // namespace mopinnenkf

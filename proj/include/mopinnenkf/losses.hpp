#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "network.hpp"
#include "observations.hpp"
#include "parallel.hpp"
#include "problems.hpp"

namespace mopinnenkf {

/// The four PINN loss components, each a mean-squared term.
struct ObjectiveVector {
  double res = 0.0, ic = 0.0, bc = 0.0, data = 0.0;

  bool finite() const {
    return std::isfinite(res) && std::isfinite(ic) && std::isfinite(bc) && std::isfinite(data);
  }
  std::array<double, 4> as_array() const { return {res, ic, bc, data}; }
};

struct LossWeights {
  double res = 1.0, ic = 1.0, bc = 1.0, data = 1.0;
};

inline double weighted_scalar(const ObjectiveVector& o, const LossWeights& w) {
  return w.res * o.res + w.ic * o.ic + w.bc * o.bc + w.data * o.data;
}

/// Data-misfit targets: raw observations on the first outer iteration, the
/// EnKF analysis mean afterwards. Empty set means no data term.
struct DataSet {
  std::vector<Point> points;
  std::vector<double> values;

  bool empty() const { return points.empty(); }
  int size() const { return static_cast<int>(points.size()); }

  static DataSet from_observations(const ObservationSet& obs) {
    return {obs.points, obs.values};
  }
  static DataSet from_analysis(const ObservationSet& obs, std::span<const double> mean) {
    return {obs.points, {mean.begin(), mean.end()}};
  }
};

struct FieldPoint {
  double u = 0.0, u_x = 0.0, u_xx = 0.0, u_t = 0.0;
};

/// Network-backed field evaluator; copies are independent, so chunk workers
/// each own one.
class NetworkField {
 public:
  NetworkField(const NetworkArchitecture& arch, std::span<const double> params)
      : arch_(&arch), params_(params) {
    ws_.resize(arch);
  }

  FieldPoint eval(double x, double t, unsigned mask) {
    forward_tracked(*arch_, params_, x, t, mask, ws_);
    const int last = arch_->neuron_count() - 1;
    return {ws_.av[last], ws_.ax[last], ws_.axx[last], ws_.at[last]};
  }

  double value(double x, double t) { return eval(x, t, 0).u; }

 private:
  const NetworkArchitecture* arch_;
  std::span<const double> params_;
  NetWorkspace ws_;
};

struct LossSetup {
  const ProblemSpec* spec = nullptr;
  const NetworkArchitecture* arch = nullptr;
  const CollocationSets* coll = nullptr;
  const DataSet* data = nullptr;
  int caputo_steps = 50;
  int chunk_size = 256;
  int threads = 1;
};

namespace detail {

inline double forcing_noise_at(const LossSetup& s, int res_index) {
  if (!s.spec->forcing_noise_level || s.coll->res_forcing_noise.empty()) return 0.0;
  return *s.spec->forcing_noise_level * s.coll->res_forcing_noise[static_cast<std::size_t>(res_index)];
}

inline std::span<const int> full_subset(const LossSetup& s, std::span<const int> subset,
                                        std::vector<int>& storage) {
  if (!subset.empty()) return subset;
  storage.resize(s.coll->res.size());
  for (std::size_t i = 0; i < storage.size(); ++i) storage[i] = static_cast<int>(i);
  return storage;
}

}  // namespace detail

/// Objective values for any field evaluator (analytic oracle in tests, the
/// network in training). `res_subset` indexes into coll->res; empty means the
/// full set. `physics` is the coefficient the residual sees (viscosity, or the
/// fractional order used by the Caputo operator); defaults to the problem's
/// fixed forward value. Residual points are processed in fixed-size chunks
/// combined in chunk order, so results do not depend on the worker count.
template <class Field>
ObjectiveVector objectives_of_field(const LossSetup& s, const Field& proto,
                                    std::span<const int> res_subset = {},
                                    std::optional<double> physics = {}) {
  const ProblemSpec& spec = *s.spec;
  const double phys = physics ? *physics : spec.forward_physics_value();
  ObjectiveVector out;

  Field f = proto;
  const auto& coll = *s.coll;
  for (std::size_t i = 0; i < coll.ic.size(); ++i) {
    const double d = f.eval(coll.ic[i].x, coll.ic[i].t, 0).u - coll.ic_target[i];
    out.ic += d * d;
  }
  if (!coll.ic.empty()) out.ic /= static_cast<double>(coll.ic.size());
  for (std::size_t i = 0; i < coll.bc.size(); ++i) {
    const double d = f.eval(coll.bc[i].x, coll.bc[i].t, 0).u - coll.bc_target[i];
    out.bc += d * d;
  }
  if (!coll.bc.empty()) out.bc /= static_cast<double>(coll.bc.size());
  if (s.data && !s.data->empty()) {
    for (int i = 0; i < s.data->size(); ++i) {
      const double d = f.eval(s.data->points[i].x, s.data->points[i].t, 0).u - s.data->values[i];
      out.data += d * d;
    }
    out.data /= static_cast<double>(s.data->size());
  }

  std::vector<int> all;
  res_subset = detail::full_subset(s, res_subset, all);
  const int n_res = static_cast<int>(res_subset.size());
  if (n_res == 0) return out;
  const int chunk = std::max(1, s.chunk_size);
  const int n_chunks = (n_res + chunk - 1) / chunk;
  std::vector<double> partial(static_cast<std::size_t>(n_chunks), 0.0);
  parallel_chunks(n_res, chunk, s.threads, [&](int c, int b, int e) {
    Field local = proto;
    double acc = 0.0;
    std::vector<double> hist(static_cast<std::size_t>(s.caputo_steps) + 1);
    for (int k = b; k < e; ++k) {
      const int j = res_subset[k];
      const Point p = coll.res[static_cast<std::size_t>(j)];
      double r;
      if (spec.kind == ProblemKind::burgers) {
        const FieldPoint fp = local.eval(p.x, p.t, kDerivAll);
        r = residual_burgers(fp.u, fp.u_t, fp.u_x, fp.u_xx, phys);
      } else {
        const int M = s.caputo_steps;
        for (int m = 0; m < M; ++m) hist[static_cast<std::size_t>(m)] = local.eval(p.x, p.t * m / M, 0).u;
        const FieldPoint fp = local.eval(p.x, p.t, kDerivX | kDerivXX);
        hist[static_cast<std::size_t>(M)] = fp.u;
        r = residual_tfmdwe(hist, fp.u_xx, phys, p.x, p.t, spec.physics.true_value,
                            detail::forcing_noise_at(s, j));
      }
      acc += r * r;
    }
    partial[static_cast<std::size_t>(c)] = acc;
  });
  for (double v : partial) out.res += v;
  out.res /= static_cast<double>(n_res);
  return out;
}

inline ObjectiveVector objectives(const LossSetup& s, std::span<const double> params,
                                  std::span<const int> res_subset = {}) {
  std::optional<double> physics;
  if (s.spec->has_physics_slot()) physics = s.spec->physics.constrain(params.back());
  NetworkField field(*s.arch, params);
  return objectives_of_field(s, field, res_subset, physics);
}

/// Objectives plus the exact gradient of the weighted scalar loss with respect
/// to every parameter (including the raw physics slot, chained through its
/// constraint map). `grad` must match params in length and is overwritten.
/// Summation runs over the same fixed chunk partition as objectives(), with
/// per-chunk gradient buffers combined in chunk order.
inline ObjectiveVector objectives_and_gradient(const LossSetup& s, std::span<const double> params,
                                               std::span<const int> res_subset,
                                               const LossWeights& w, std::span<double> grad) {
  const ProblemSpec& spec = *s.spec;
  const NetworkArchitecture& arch = *s.arch;
  const auto& coll = *s.coll;
  if (grad.size() != params.size()) throw std::invalid_argument("gradient length mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);

  const bool slot = spec.has_physics_slot();
  const double raw = slot ? params.back() : 0.0;
  const double phys = slot ? spec.physics.constrain(raw) : spec.forward_physics_value();
  const double dphys_draw = slot ? spec.physics.constrain_derivative(raw) : 0.0;

  ObjectiveVector out;

  std::vector<int> all;
  res_subset = detail::full_subset(s, res_subset, all);
  const int n_res = static_cast<int>(res_subset.size());
  const int chunk = std::max(1, s.chunk_size);
  const int n_chunks = n_res == 0 ? 0 : (n_res + chunk - 1) / chunk;
  std::vector<double> partial_res(static_cast<std::size_t>(std::max(1, n_chunks)), 0.0);
  std::vector<std::vector<double>> partial_grad(static_cast<std::size_t>(std::max(1, n_chunks)));

  parallel_chunks(n_res, chunk, s.threads, [&](int c, int b, int e) {
    auto& g = partial_grad[static_cast<std::size_t>(c)];
    g.assign(params.size(), 0.0);
    double acc = 0.0;
    NetWorkspace ws;
    ws.resize(arch);
    const int nt_neurons = arch.neuron_count();
    const int M = s.caputo_steps;
    std::vector<double> hist_acts;
    std::vector<double> hist(static_cast<std::size_t>(M) + 1);
    std::vector<double> scratch(static_cast<std::size_t>(nt_neurons));
    if (spec.kind == ProblemKind::tfmdwe)
      hist_acts.resize(static_cast<std::size_t>(M) * nt_neurons);
    const double lam_scale = 2.0 * w.res / static_cast<double>(std::max(1, n_res));
    for (int k = b; k < e; ++k) {
      const int j = res_subset[k];
      const Point p = coll.res[static_cast<std::size_t>(j)];
      if (spec.kind == ProblemKind::burgers) {
        forward_tracked(arch, params, p.x, p.t, kDerivAll, ws);
        const int last = nt_neurons - 1;
        const double u = ws.av[last], ux = ws.ax[last], uxx = ws.axx[last], ut = ws.at[last];
        const double r = residual_burgers(u, ut, ux, uxx, phys);
        acc += r * r;
        const double lam = lam_scale * r;
        backward_tracked(arch, params, ws, kDerivAll, lam * ux, lam * u, -lam * phys, lam, g);
        if (slot) g.back() += lam * (-uxx) * dphys_draw;
      } else {
        double r, uxx;
        CaputoWeights cw;
        if (p.t > 0.0) {
          const double dt = p.t / M;
          cw = caputo_l1_weights(phys, M, dt);
          for (int m = 0; m < M; ++m) {
            auto row = std::span<double>(hist_acts.data() + static_cast<std::size_t>(m) * nt_neurons,
                                         static_cast<std::size_t>(nt_neurons));
            hist[static_cast<std::size_t>(m)] = forward_values(arch, params, p.x, p.t * m / M, row);
          }
        }
        forward_tracked(arch, params, p.x, p.t, kDerivX | kDerivXX, ws);
        const int last = nt_neurons - 1;
        uxx = ws.axx[last];
        hist[static_cast<std::size_t>(M)] = ws.av[last];
        double cap = 0.0, dcap_dalpha = 0.0;
        if (p.t > 0.0) {
          for (int m = 0; m <= M; ++m) {
            cap += cw.coeff[static_cast<std::size_t>(m)] * hist[static_cast<std::size_t>(m)];
            dcap_dalpha += cw.dcoeff[static_cast<std::size_t>(m)] * hist[static_cast<std::size_t>(m)];
          }
        }
        const double f = tfmdwe_forcing(p.x, p.t, spec.physics.true_value) *
                         (1.0 + detail::forcing_noise_at(s, j));
        r = cap - uxx - f;
        acc += r * r;
        const double lam = lam_scale * r;
        const double terminal_seed = p.t > 0.0 ? lam * cw.coeff[static_cast<std::size_t>(M)] : 0.0;
        backward_tracked(arch, params, ws, kDerivX | kDerivXX, terminal_seed, 0.0, -lam, 0.0, g);
        if (p.t > 0.0) {
          for (int m = 0; m < M; ++m) {
            const double seed = lam * cw.coeff[static_cast<std::size_t>(m)];
            if (seed == 0.0) continue;
            auto row = std::span<const double>(hist_acts.data() + static_cast<std::size_t>(m) * nt_neurons,
                                               static_cast<std::size_t>(nt_neurons));
            backward_values(arch, params, row, seed, g, scratch);
          }
          if (slot) g.back() += lam * dcap_dalpha * dphys_draw;
        }
      }
    }
    partial_res[static_cast<std::size_t>(c)] = acc;
  });
  for (int c = 0; c < n_chunks; ++c) {
    out.res += partial_res[static_cast<std::size_t>(c)];
    const auto& g = partial_grad[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
  }
  if (n_res > 0) out.res /= static_cast<double>(n_res);

  // condition and data terms: value track only, serial (they are cheap)
  NetWorkspace ws;
  ws.resize(arch);
  std::vector<double> scratch(static_cast<std::size_t>(arch.neuron_count()));
  auto value_term = [&](const Point& p, double target, double weight, int count) {
    const double u = forward_values(arch, params, p.x, p.t, ws.av);
    const double d = u - target;
    const double seed = 2.0 * weight * d / static_cast<double>(count);
    if (seed != 0.0) backward_values(arch, params, ws.av, seed, grad, scratch);
    return d * d;
  };
  for (std::size_t i = 0; i < coll.ic.size(); ++i)
    out.ic += value_term(coll.ic[i], coll.ic_target[i], w.ic, static_cast<int>(coll.ic.size()));
  if (!coll.ic.empty()) out.ic /= static_cast<double>(coll.ic.size());
  for (std::size_t i = 0; i < coll.bc.size(); ++i)
    out.bc += value_term(coll.bc[i], coll.bc_target[i], w.bc, static_cast<int>(coll.bc.size()));
  if (!coll.bc.empty()) out.bc /= static_cast<double>(coll.bc.size());
  if (s.data && !s.data->empty()) {
    for (int i = 0; i < s.data->size(); ++i)
      out.data += value_term(s.data->points[static_cast<std::size_t>(i)],
                             s.data->values[static_cast<std::size_t>(i)], w.data, s.data->size());
    out.data /= static_cast<double>(s.data->size());
  }
  return out;
}

}  // namespace mopinnenkf

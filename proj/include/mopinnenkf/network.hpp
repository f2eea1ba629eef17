#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace mopinnenkf {

/// Dense feed-forward architecture: inputs (x, t), scalar output,
/// tanh on hidden layers, identity on the output layer.
struct NetworkArchitecture {
  std::vector<int> widths;  // e.g. {2, 20, ..., 20, 1}

  static NetworkArchitecture mlp(int hidden_layers, int hidden_width) {
    NetworkArchitecture a;
    a.widths.push_back(2);
    for (int i = 0; i < hidden_layers; ++i) a.widths.push_back(hidden_width);
    a.widths.push_back(1);
    a.validate();
    return a;
  }

  void validate() const {
    if (widths.size() < 3) throw std::invalid_argument("architecture needs at least 3 layer widths");
    if (widths.front() != 2) throw std::invalid_argument("input width must be 2 for (x, t)");
    if (widths.back() != 1) throw std::invalid_argument("output width must be 1");
    for (int w : widths)
      if (w <= 0) throw std::invalid_argument("layer widths must be positive");
  }

  int layer_count() const { return static_cast<int>(widths.size()) - 1; }

  int parameter_count() const {
    int n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      n += widths[l] * widths[l + 1] + widths[l + 1];
    return n;
  }

  int neuron_count() const {
    int n = 0;
    for (int w : widths) n += w;
    return n;
  }
};

/// Flat parameter storage. Layout is fixed so genomes of equal architecture
/// align coordinate-wise: for each layer, row-major weights (out x in) then
/// biases, concatenated in layer order; an optional trailing slot holds one
/// trainable physics scalar in raw (unconstrained) space.
using ParameterVector = std::vector<double>;

struct PhysicsSlotInit {
  double lo = 0.0;
  double hi = 1.0;                               // uniform range in constrained space
  std::function<double(double)> value_to_raw;    // constrained value -> raw slot
};

/// Xavier/Glorot uniform weights, zero biases; bit-identical for a given seed.
inline ParameterVector init_parameters(const NetworkArchitecture& arch, std::uint64_t seed,
                                       const std::optional<PhysicsSlotInit>& physics = {}) {
  arch.validate();
  ParameterVector p;
  p.reserve(static_cast<std::size_t>(arch.parameter_count()) + (physics ? 1 : 0));
  Rng rng(seed);
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int ni = arch.widths[l], no = arch.widths[l + 1];
    const double limit = std::sqrt(6.0 / (ni + no));
    for (int k = 0; k < ni * no; ++k) p.push_back(rng.uniform(-limit, limit));
    for (int k = 0; k < no; ++k) p.push_back(0.0);
  }
  if (physics) {
    const double v = rng.uniform(physics->lo, physics->hi);
    p.push_back(physics->value_to_raw(v));
  }
  return p;
}

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(int layer, const std::string& what) : std::runtime_error(what), layer(layer) {}
  int layer;  // 1-based layer whose output first went non-finite
};

inline constexpr unsigned kDerivX = 1u;
inline constexpr unsigned kDerivXX = 2u;
inline constexpr unsigned kDerivT = 4u;
inline constexpr unsigned kDerivAll = kDerivX | kDerivXX | kDerivT;

inline unsigned normalize_mask(unsigned mask) {
  if (mask & kDerivXX) mask |= kDerivX;  // second x-derivative needs the first
  return mask & kDerivAll;
}

/// Scratch for one evaluation: post-activation tracks at every neuron plus the
/// pre-activation tangent tracks the reverse sweep needs.
struct NetWorkspace {
  std::vector<double> av, ax, axx, at;  // activations per track
  std::vector<double> zx, zxx, zt;      // pre-activation tangents
  std::vector<double> bv, bx, bxx, bt;  // adjoint scratch

  void resize(const NetworkArchitecture& arch) {
    const std::size_t n = static_cast<std::size_t>(arch.neuron_count());
    if (av.size() == n) return;
    av.assign(n, 0.0);
    ax.assign(n, 0.0);
    axx.assign(n, 0.0);
    at.assign(n, 0.0);
    zx.assign(n, 0.0);
    zxx.assign(n, 0.0);
    zt.assign(n, 0.0);
    bv.assign(n, 0.0);
    bx.assign(n, 0.0);
    bxx.assign(n, 0.0);
    bt.assign(n, 0.0);
  }
};

namespace detail {

// Forward pass with second-order tangent propagation: every neuron carries
// (value, d/dx, d2/dx2, d/dt) triples pushed through each layer.
template <bool DX, bool DXX, bool DT>
inline void forward_impl(const NetworkArchitecture& arch, std::span<const double> params,
                         double x, double t, NetWorkspace& ws) {
  static_assert(!DXX || DX, "second x-derivative requires the first");
  const auto& w = arch.widths;
  const int L = arch.layer_count();
  ws.resize(arch);
  ws.av[0] = x;
  ws.av[1] = t;
  if constexpr (DX) {
    ws.ax[0] = 1.0;
    ws.ax[1] = 0.0;
  }
  if constexpr (DXX) {
    ws.axx[0] = 0.0;
    ws.axx[1] = 0.0;
  }
  if constexpr (DT) {
    ws.at[0] = 0.0;
    ws.at[1] = 1.0;
  }
  int in_off = 0, p_off = 0;
  for (int l = 0; l < L; ++l) {
    const int ni = w[l], no = w[l + 1];
    const int out_off = in_off + ni;
    const double* W = params.data() + p_off;
    const double* b = W + ni * no;
    const bool hidden = (l + 1 < L);
    for (int i = 0; i < no; ++i) {
      const double* row = W + i * ni;
      double sv = b[i], sx = 0.0, sxx = 0.0, st = 0.0;
      for (int j = 0; j < ni; ++j) {
        sv += row[j] * ws.av[in_off + j];
        if constexpr (DX) sx += row[j] * ws.ax[in_off + j];
        if constexpr (DXX) sxx += row[j] * ws.axx[in_off + j];
        if constexpr (DT) st += row[j] * ws.at[in_off + j];
      }
      if constexpr (DX) ws.zx[out_off + i] = sx;
      if constexpr (DXX) ws.zxx[out_off + i] = sxx;
      if constexpr (DT) ws.zt[out_off + i] = st;
      if (hidden) {
        const double h = std::tanh(sv);
        const double h1 = 1.0 - h * h;
        ws.av[out_off + i] = h;
        if constexpr (DX) ws.ax[out_off + i] = h1 * sx;
        if constexpr (DXX) ws.axx[out_off + i] = -2.0 * h * h1 * sx * sx + h1 * sxx;
        if constexpr (DT) ws.at[out_off + i] = h1 * st;
      } else {
        ws.av[out_off + i] = sv;
        if constexpr (DX) ws.ax[out_off + i] = sx;
        if constexpr (DXX) ws.axx[out_off + i] = sxx;
        if constexpr (DT) ws.at[out_off + i] = st;
      }
    }
    in_off = out_off;
    p_off += ni * no + no;
  }
}

// Reverse sweep through the tangent-augmented forward computation. Seeds are
// the adjoints of (u, u_x, u_xx, u_t); contributions accumulate into `grad`,
// which must be at least parameter_count() long (a trailing physics slot, if
// present, is never touched here).
template <bool DX, bool DXX, bool DT>
inline void backward_impl(const NetworkArchitecture& arch, std::span<const double> params,
                          NetWorkspace& ws, double seed_v, double seed_x, double seed_xx,
                          double seed_t, std::span<double> grad) {
  const auto& w = arch.widths;
  const int L = arch.layer_count();
  const int nt = arch.neuron_count();
  std::fill(ws.bv.begin(), ws.bv.end(), 0.0);
  if constexpr (DX) std::fill(ws.bx.begin(), ws.bx.end(), 0.0);
  if constexpr (DXX) std::fill(ws.bxx.begin(), ws.bxx.end(), 0.0);
  if constexpr (DT) std::fill(ws.bt.begin(), ws.bt.end(), 0.0);
  ws.bv[nt - 1] = seed_v;
  if constexpr (DX) ws.bx[nt - 1] = seed_x;
  if constexpr (DXX) ws.bxx[nt - 1] = seed_xx;
  if constexpr (DT) ws.bt[nt - 1] = seed_t;

  int out_off = nt - w[L];
  int p_end = arch.parameter_count();
  for (int l = L - 1; l >= 0; --l) {
    const int ni = w[l], no = w[l + 1];
    const int in_off = out_off - ni;
    const int p_off = p_end - (ni * no + no);
    const double* W = params.data() + p_off;
    double* gW = grad.data() + p_off;
    double* gb = gW + ni * no;
    const bool hidden = (l + 1 < L);
    for (int i = 0; i < no; ++i) {
      const int oi = out_off + i;
      double gv = ws.bv[oi], gx = 0.0, gxx = 0.0, gt = 0.0;
      if constexpr (DX) gx = ws.bx[oi];
      if constexpr (DXX) gxx = ws.bxx[oi];
      if constexpr (DT) gt = ws.bt[oi];
      if (hidden) {
        const double h = ws.av[oi];
        const double h1 = 1.0 - h * h;
        const double h2 = -2.0 * h * h1;
        double zv_bar = gv * h1;
        double zx_bar = 0.0, zxx_bar = 0.0, zt_bar = 0.0;
        if constexpr (DX) {
          zv_bar += gx * h2 * ws.zx[oi];
          zx_bar = gx * h1;
        }
        if constexpr (DXX) {
          const double h3 = -2.0 * h1 * (1.0 - 3.0 * h * h);
          const double zxv = ws.zx[oi];
          zv_bar += gxx * (h3 * zxv * zxv + h2 * ws.zxx[oi]);
          zx_bar += gxx * 2.0 * h2 * zxv;
          zxx_bar = gxx * h1;
        }
        if constexpr (DT) {
          zv_bar += gt * h2 * ws.zt[oi];
          zt_bar = gt * h1;
        }
        gv = zv_bar;
        gx = zx_bar;
        gxx = zxx_bar;
        gt = zt_bar;
      }
      const double* row = W + i * ni;
      double* grow = gW + i * ni;
      gb[i] += gv;
      for (int j = 0; j < ni; ++j) {
        double acc = gv * ws.av[in_off + j];
        if constexpr (DX) acc += gx * ws.ax[in_off + j];
        if constexpr (DXX) acc += gxx * ws.axx[in_off + j];
        if constexpr (DT) acc += gt * ws.at[in_off + j];
        grow[j] += acc;
        ws.bv[in_off + j] += row[j] * gv;
        if constexpr (DX) ws.bx[in_off + j] += row[j] * gx;
        if constexpr (DXX) ws.bxx[in_off + j] += row[j] * gxx;
        if constexpr (DT) ws.bt[in_off + j] += row[j] * gt;
      }
    }
    out_off = in_off;
    p_end = p_off;
  }
}

}  // namespace detail

inline void forward_tracked(const NetworkArchitecture& arch, std::span<const double> params,
                            double x, double t, unsigned mask, NetWorkspace& ws) {
  switch (normalize_mask(mask)) {
    case 0: detail::forward_impl<false, false, false>(arch, params, x, t, ws); break;
    case 1: detail::forward_impl<true, false, false>(arch, params, x, t, ws); break;
    case 3: detail::forward_impl<true, true, false>(arch, params, x, t, ws); break;
    case 4: detail::forward_impl<false, false, true>(arch, params, x, t, ws); break;
    case 5: detail::forward_impl<true, false, true>(arch, params, x, t, ws); break;
    default: detail::forward_impl<true, true, true>(arch, params, x, t, ws); break;
  }
}

inline void backward_tracked(const NetworkArchitecture& arch, std::span<const double> params,
                             NetWorkspace& ws, unsigned mask, double seed_v, double seed_x,
                             double seed_xx, double seed_t, std::span<double> grad) {
  switch (normalize_mask(mask)) {
    case 0: detail::backward_impl<false, false, false>(arch, params, ws, seed_v, 0, 0, 0, grad); break;
    case 1: detail::backward_impl<true, false, false>(arch, params, ws, seed_v, seed_x, 0, 0, grad); break;
    case 3: detail::backward_impl<true, true, false>(arch, params, ws, seed_v, seed_x, seed_xx, 0, grad); break;
    case 4: detail::backward_impl<false, false, true>(arch, params, ws, seed_v, 0, 0, seed_t, grad); break;
    case 5: detail::backward_impl<true, false, true>(arch, params, ws, seed_v, seed_x, 0, seed_t, grad); break;
    default: detail::backward_impl<true, true, true>(arch, params, ws, seed_v, seed_x, seed_xx, seed_t, grad); break;
  }
}

/// Value-track forward with external activation storage (`acts` must hold
/// neuron_count() doubles); returns the network output. Used for points that
/// need no input derivatives: conditions, data misfits, Caputo histories.
inline double forward_values(const NetworkArchitecture& arch, std::span<const double> params,
                             double x, double t, std::span<double> acts) {
  const auto& w = arch.widths;
  const int L = arch.layer_count();
  acts[0] = x;
  acts[1] = t;
  int in_off = 0, p_off = 0;
  for (int l = 0; l < L; ++l) {
    const int ni = w[l], no = w[l + 1];
    const int out_off = in_off + ni;
    const double* W = params.data() + p_off;
    const double* b = W + ni * no;
    const bool hidden = (l + 1 < L);
    for (int i = 0; i < no; ++i) {
      const double* row = W + i * ni;
      double sv = b[i];
      for (int j = 0; j < ni; ++j) sv += row[j] * acts[in_off + j];
      acts[out_off + i] = hidden ? std::tanh(sv) : sv;
    }
    in_off = out_off;
    p_off += ni * no + no;
  }
  return acts[in_off];
}

/// Reverse sweep matching forward_values; `scratch` holds neuron_count() adjoints.
inline void backward_values(const NetworkArchitecture& arch, std::span<const double> params,
                            std::span<const double> acts, double seed,
                            std::span<double> grad, std::span<double> scratch) {
  const auto& w = arch.widths;
  const int L = arch.layer_count();
  const int nt = arch.neuron_count();
  std::fill(scratch.begin(), scratch.begin() + nt, 0.0);
  scratch[nt - 1] = seed;
  int out_off = nt - w[L];
  int p_end = arch.parameter_count();
  for (int l = L - 1; l >= 0; --l) {
    const int ni = w[l], no = w[l + 1];
    const int in_off = out_off - ni;
    const int p_off = p_end - (ni * no + no);
    const double* W = params.data() + p_off;
    double* gW = grad.data() + p_off;
    double* gb = gW + ni * no;
    const bool hidden = (l + 1 < L);
    for (int i = 0; i < no; ++i) {
      const int oi = out_off + i;
      double gv = scratch[oi];
      if (hidden) {
        const double h = acts[oi];
        gv *= 1.0 - h * h;
      }
      const double* row = W + i * ni;
      double* grow = gW + i * ni;
      gb[i] += gv;
      for (int j = 0; j < ni; ++j) {
        grow[j] += gv * acts[in_off + j];
        scratch[in_off + j] += row[j] * gv;
      }
    }
    out_off = in_off;
    p_end = p_off;
  }
}

enum class Field { u = 0, u_x = 1, u_xx = 2, u_t = 3 };

inline unsigned field_mask(Field f) {
  switch (f) {
    case Field::u: return 0;
    case Field::u_x: return kDerivX;
    case Field::u_xx: return kDerivX | kDerivXX;
    case Field::u_t: return kDerivT;
  }
  return 0;
}

/// One network evaluation at (x, t): the field value with the requested input
/// derivatives, plus on-demand parameter gradients of each. The bundle
/// snapshots the parameters, so it stays valid after the caller moves on.
class EvaluationBundle {
 public:
  EvaluationBundle(const NetworkArchitecture& arch, std::span<const double> params,
                   double x, double t, unsigned mask)
      : arch_(&arch), params_(params.begin(), params.end()), x_(x), t_(t),
        mask_(normalize_mask(mask)) {
    if (!std::isfinite(x) || !std::isfinite(t))
      throw std::invalid_argument("evaluate: non-finite input point");
    NetWorkspace ws;
    forward_tracked(arch, params_, x_, t_, mask_, ws);
    check_finite(ws);
    const int last = arch.neuron_count() - 1;
    u_ = ws.av[last];
    ux_ = ws.ax[last];
    uxx_ = ws.axx[last];
    ut_ = ws.at[last];
  }

  double u() const { return u_; }
  double u_x() const { return require(kDerivX), ux_; }
  double u_xx() const { return require(kDerivXX), uxx_; }
  double u_t() const { return require(kDerivT), ut_; }
  unsigned mask() const { return mask_; }

  double value(Field f) const {
    switch (f) {
      case Field::u: return u();
      case Field::u_x: return u_x();
      case Field::u_xx: return u_xx();
      case Field::u_t: return u_t();
    }
    return 0.0;
  }

  /// Parameter gradient of the given field; computed lazily, cached.
  const std::vector<double>& grad(Field f) const {
    const int k = static_cast<int>(f);
    if (f != Field::u && !(mask_ & field_mask(f)))
      throw std::invalid_argument("derivative was not requested in the evaluation mask");
    if (!grads_[k]) {
      NetWorkspace ws;
      forward_tracked(*arch_, params_, x_, t_, mask_, ws);
      std::vector<double> g(params_.size(), 0.0);
      const double sv = (f == Field::u) ? 1.0 : 0.0;
      const double sx = (f == Field::u_x) ? 1.0 : 0.0;
      const double sxx = (f == Field::u_xx) ? 1.0 : 0.0;
      const double st = (f == Field::u_t) ? 1.0 : 0.0;
      backward_tracked(*arch_, params_, ws, mask_, sv, sx, sxx, st, g);
      grads_[k] = std::move(g);
    }
    return *grads_[k];
  }

  double x() const { return x_; }
  double t() const { return t_; }

 private:
  void require(unsigned bit) const {
    if (!(mask_ & bit)) throw std::invalid_argument("derivative was not requested in the evaluation mask");
  }

  void check_finite(const NetWorkspace& ws) const {
    int off = 0;
    for (std::size_t l = 0; l < arch_->widths.size(); ++l) {
      for (int i = 0; i < arch_->widths[l]; ++i) {
        if (!std::isfinite(ws.av[off + i]))
          throw NonFiniteError(static_cast<int>(l),
                               "non-finite activation in layer " + std::to_string(l));
      }
      off += arch_->widths[l];
    }
  }

  const NetworkArchitecture* arch_;
  std::vector<double> params_;
  double x_, t_;
  unsigned mask_;
  double u_ = 0, ux_ = 0, uxx_ = 0, ut_ = 0;
  mutable std::optional<std::vector<double>> grads_[4];
};

inline EvaluationBundle evaluate(const NetworkArchitecture& arch, std::span<const double> params,
                                 double x, double t, unsigned mask = kDerivAll) {
  return EvaluationBundle(arch, params, x, t, mask);
}

}  // namespace mopinnenkf

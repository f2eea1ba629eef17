#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "burgers_oracle.hpp"
#include "loss_graph.hpp"
#include "network.hpp"

namespace mopinnenkf {

// ---------------------------------------------------------------------------
// Smooth bijections for trainable physics scalars. Training and crossover act
// on the raw coordinate; the constrained value always lands in the admissible
// set.

inline double softplus(double r) {
  const double v = r > 30.0 ? r : std::log1p(std::exp(r));
  return std::max(v, 1e-300);  // strictly positive even deep in the left tail
}
inline double softplus_derivative(double r) { return 1.0 / (1.0 + std::exp(-r)); }
inline double softplus_inverse(double v) {
  if (v <= 0.0) throw std::domain_error("softplus_inverse: value must be positive");
  return v > 30.0 ? v : std::log(std::expm1(v));
}

inline double sigmoid(double r) {
  const double s = 1.0 / (1.0 + std::exp(-r));
  // keep the image strictly inside (0,1) where the plain formula would round out
  return std::min(std::max(s, 1e-300), 1.0 - 1e-16);
}
inline double sigmoid_derivative(double r) {
  const double s = sigmoid(r);
  return s * (1.0 - s);
}
inline double logit(double v) {
  if (v <= 0.0 || v >= 1.0) throw std::domain_error("logit: value must lie in (0,1)");
  return std::log(v / (1.0 - v));
}

/// Digamma via upward recurrence plus the asymptotic series; plenty accurate
/// for the arguments (1,4) used by the Caputo coefficient derivatives.
inline double digamma(double x) {
  if (x <= 0.0) throw std::domain_error("digamma: positive argument required");
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x, inv2 = inv * inv;
  r += std::log(x) - 0.5 * inv - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
  return r;
}

// ---------------------------------------------------------------------------

enum class ProblemKind { burgers, tfmdwe };
enum class Mode { forward, inverse };

struct PhysicsParameter {
  enum class Map { softplus, sigmoid };

  std::string name;  // "nu" or "alpha"
  double true_value = 0.0;
  bool trainable = false;
  Map map = Map::softplus;

  double constrain(double raw) const {
    return map == Map::softplus ? softplus(raw) : sigmoid(raw);
  }
  double constrain_derivative(double raw) const {
    return map == Map::softplus ? softplus_derivative(raw) : sigmoid_derivative(raw);
  }
  double to_raw(double value) const {
    return map == Map::softplus ? softplus_inverse(value) : logit(value);
  }
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::burgers;
  Mode mode = Mode::forward;
  double x_min = -1.0, x_max = 1.0, t_max = 1.0;
  PhysicsParameter physics;
  std::optional<double> model_viscosity;      // Burgers forward-problem model error
  std::optional<double> forcing_noise_level;  // TFMDWE forward-problem model error

  static ProblemSpec burgers(Mode mode, bool misspecified = true) {
    ProblemSpec s;
    s.kind = ProblemKind::burgers;
    s.mode = mode;
    s.x_min = -1.0;
    s.x_max = 1.0;
    s.physics = {"nu", 0.01 / std::numbers::pi, mode == Mode::inverse,
                 PhysicsParameter::Map::softplus};
    if (mode == Mode::forward && misspecified) s.model_viscosity = 0.02 / std::numbers::pi;
    return s;
  }

  static ProblemSpec tfmdwe(Mode mode, bool misspecified = true) {
    ProblemSpec s;
    s.kind = ProblemKind::tfmdwe;
    s.mode = mode;
    s.x_min = 0.0;
    s.x_max = std::numbers::pi;
    s.physics = {"alpha", 0.5, mode == Mode::inverse, PhysicsParameter::Map::sigmoid};
    if (mode == Mode::forward && misspecified) s.forcing_noise_level = 0.5;
    return s;
  }

  bool in_domain(double x, double t) const {
    const double ex = 1e-12 * (x_max - x_min), et = 1e-12 * t_max;
    return x >= x_min - ex && x <= x_max + ex && t >= -et && t <= t_max + et;
  }

  bool has_physics_slot() const { return physics.trainable; }

  /// Coefficient the residual uses when the parameter is not trainable.
  double forward_physics_value() const {
    if (kind == ProblemKind::burgers) return model_viscosity.value_or(physics.true_value);
    return physics.true_value;  // TFMDWE model error perturbs the forcing, not alpha
  }

  std::optional<PhysicsSlotInit> physics_slot_init() const {
    if (!physics.trainable) return std::nullopt;
    PhysicsSlotInit init;
    if (kind == ProblemKind::burgers) {
      // initial viscosity guess uniform over (0, 1]
      init.lo = 1e-3;
      init.hi = 1.0;
      init.value_to_raw = [](double v) { return softplus_inverse(v); };
    } else {
      init.lo = 0.05;
      init.hi = 0.95;
      init.value_to_raw = [](double v) { return logit(v); };
    }
    return init;
  }
};

// ---------------------------------------------------------------------------
// Burgers residual: u_t - nu u_xx + u u_x.

inline double residual_burgers(double u, double u_t, double u_x, double u_xx, double nu) {
  return u_t - nu * u_xx + u * u_x;
}

inline double residual_burgers(const EvaluationBundle& b, double nu) {
  return residual_burgers(b.u(), b.u_t(), b.u_x(), b.u_xx(), nu);
}

/// Differentiable composition of the same residual on a loss graph.
inline LossGraph::Node residual_burgers(LossGraph& g, int eval_id, LossGraph::Node nu) {
  const auto u = g.field(eval_id, Field::u);
  const auto ux = g.field(eval_id, Field::u_x);
  const auto uxx = g.field(eval_id, Field::u_xx);
  const auto ut = g.field(eval_id, Field::u_t);
  return g.add(g.sub(ut, g.mul(nu, uxx)), g.mul(u, ux));
}

// ---------------------------------------------------------------------------
// Caputo derivative, L1 scheme on a uniform grid t_0 = 0 < ... < t_M:
//   D_t^a u(t_M) ~= dt^{-a}/Gamma(2-a) * sum_k b_k (u_{M-k} - u_{M-k-1}),
//   b_k = (k+1)^{1-a} - k^{1-a}.

inline double caputo_l1(std::span<const double> u, double alpha, double dt) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("caputo_l1: alpha must lie in (0,1)");
  if (u.size() < 2) throw std::invalid_argument("caputo_l1: need at least two history values");
  if (!(dt > 0.0)) throw std::invalid_argument("caputo_l1: dt must be positive");
  const int M = static_cast<int>(u.size()) - 1;
  const double scale = std::pow(dt, -alpha) / std::tgamma(2.0 - alpha);
  const double e = 1.0 - alpha;
  double sum = 0.0;
  for (int k = 0; k < M; ++k) {
    const double b = std::pow(k + 1.0, e) - std::pow(static_cast<double>(k), e);
    sum += b * (u[M - k] - u[M - k - 1]);
  }
  return scale * sum;
}

/// Per-history-value L1 coefficients and their alpha-derivatives:
/// caputo = sum_i coeff[i] * u_i, d(caputo)/d(alpha) = sum_i dcoeff[i] * u_i.
/// Coefficients depend on dt only through the common scale factor.
struct CaputoWeights {
  std::vector<double> coeff;
  std::vector<double> dcoeff;
};

inline CaputoWeights caputo_l1_weights(double alpha, int steps, double dt) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("caputo_l1: alpha must lie in (0,1)");
  if (steps < 1) throw std::invalid_argument("caputo_l1: need at least one step");
  const int M = steps;
  const double e = 1.0 - alpha;
  const double scale = std::pow(dt, -alpha) / std::tgamma(2.0 - alpha);
  const double dscale = scale * (-std::log(dt) + digamma(2.0 - alpha));
  std::vector<double> b(M), db(M);
  for (int k = 0; k < M; ++k) {
    const double kp = k + 1.0;
    b[k] = std::pow(kp, e) - std::pow(static_cast<double>(k), e);
    db[k] = -std::log(kp) * std::pow(kp, e) + (k > 0 ? std::log(static_cast<double>(k)) * std::pow(static_cast<double>(k), e) : 0.0);
  }
  CaputoWeights w;
  w.coeff.assign(M + 1, 0.0);
  w.dcoeff.assign(M + 1, 0.0);
  auto raw = [&](int i) { return i == M ? b[0] : (i == 0 ? -b[M - 1] : b[M - i] - b[M - i - 1]); };
  auto draw = [&](int i) { return i == M ? db[0] : (i == 0 ? -db[M - 1] : db[M - i] - db[M - i - 1]); };
  for (int i = 0; i <= M; ++i) {
    w.coeff[i] = scale * raw(i);
    w.dcoeff[i] = dscale * raw(i) + scale * draw(i);
  }
  return w;
}

// ---------------------------------------------------------------------------
// TFMDWE: D_t^a u = u_xx + f on [0, pi] x [0, 1], u = 0 on the boundary and at
// t = 0. The forcing is fixed by the known fractional order of the data; in
// the inverse problem only the Caputo operator sees the trainable alpha.

inline double tfmdwe_forcing(double x, double t, double alpha_true) {
  if (t <= 0.0) return 0.0;
  const double g = std::tgamma(4.0) / std::tgamma(4.0 - alpha_true);
  return (g * std::pow(t, 3.0 - alpha_true) + t * t * t) * std::sin(x);
}

/// Residual at (x, t) given the network history on the uniform Caputo grid
/// ending at t. `forcing_noise` is the stored per-point multiplicative
/// perturbation (fraction * standard normal draw) of the misspecified
/// forward problem, zero otherwise.
inline double residual_tfmdwe(std::span<const double> u_history, double u_xx, double alpha,
                              double x, double t, double alpha_true, double forcing_noise = 0.0) {
  double cap = 0.0;
  if (t > 0.0) {
    const int M = static_cast<int>(u_history.size()) - 1;
    cap = caputo_l1(u_history, alpha, t / M);
  }
  const double f = tfmdwe_forcing(x, t, alpha_true) * (1.0 + forcing_noise);
  return cap - u_xx - f;
}

// ---------------------------------------------------------------------------

/// Exact/reference solution: analytic for TFMDWE, Cole-Hopf oracle with the
/// true viscosity for Burgers.
inline double ground_truth(const ProblemSpec& spec, double x, double t) {
  if (!spec.in_domain(x, t)) throw std::domain_error("ground_truth: point outside the domain");
  if (spec.kind == ProblemKind::tfmdwe) return t * t * t * std::sin(x);
  return BurgersOracle::shared(spec.physics.true_value)(x, t);
}

}  // namespace mopinnenkf

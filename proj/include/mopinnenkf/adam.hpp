#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "losses.hpp"
#include "rng.hpp"

namespace mopinnenkf {

struct AdamState {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<double> m, v;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Standard bias-corrected update, in place. The state is left untouched when
/// the gradient is non-finite.
inline void adam_step(AdamState& st, std::vector<double>& params, std::span<const double> grad) {
  if (params.size() != grad.size() || st.m.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::invalid_argument("adam_step: non-finite gradient");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    params[i] -= st.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps);
  }
}

struct TrainTraceRow {
  int epoch = 0;
  ObjectiveVector obj;
  double scalar = 0.0;
};

struct TrainOptions {
  int epochs = 1;
  LossWeights weights;
  int res_batch = 0;        // 0 = full residual set each epoch
  std::uint64_t seed = 0;   // epoch subsample stream
  int trace_every = 1;      // record every k-th epoch (first and last always)
};

struct TrainResult {
  ParameterVector params;
  std::vector<TrainTraceRow> trace;
};

/// Scalar-loss gradient descent: per epoch, one ADAM step on the weighted
/// objective over a seeded residual subsample (reshuffled each epoch).
inline TrainResult train_adam(const LossSetup& setup, ParameterVector params,
                              const TrainOptions& opt) {
  if (opt.epochs < 1) throw std::invalid_argument("train_adam: epochs must be >= 1");
  AdamState st(params.size());
  std::vector<double> grad(params.size(), 0.0);
  Rng rng(opt.seed);
  const int n_res = static_cast<int>(setup.coll->res.size());
  std::vector<int> pool(static_cast<std::size_t>(n_res));
  for (int i = 0; i < n_res; ++i) pool[static_cast<std::size_t>(i)] = i;
  const int batch = (opt.res_batch > 0 && opt.res_batch < n_res) ? opt.res_batch : 0;
  TrainResult result;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::span<const int> subset;
    std::vector<int> picked;
    if (batch > 0) {
      picked = sample_front(pool, batch, rng);
      subset = picked;
    }
    const ObjectiveVector obj = objectives_and_gradient(setup, params, subset, opt.weights, grad);
    adam_step(st, params, grad);
    if (epoch % std::max(1, opt.trace_every) == 0 || epoch == opt.epochs - 1)
      result.trace.push_back({epoch, obj, weighted_scalar(obj, opt.weights)});
  }
  result.params = std::move(params);
  return result;
}

}  // namespace mopinnenkf

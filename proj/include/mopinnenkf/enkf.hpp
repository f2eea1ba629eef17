#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "linalg.hpp"
#include "observations.hpp"
#include "rng.hpp"

namespace mopinnenkf {

/// Ensemble-member predictions at the observation points; row i is member i.
struct EnsembleMatrix {
  int n_ens = 0, n_obs = 0;
  std::vector<double> values;      // n_ens x n_obs, row-major
  std::vector<int> member_ids;     // provenance: population indices

  static EnsembleMatrix zeros(int n_ens, int n_obs) {
    EnsembleMatrix e;
    e.n_ens = n_ens;
    e.n_obs = n_obs;
    e.values.assign(static_cast<std::size_t>(n_ens) * n_obs, 0.0);
    return e;
  }

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * n_obs + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n_obs + j]; }
  std::span<const double> row(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * n_obs, static_cast<std::size_t>(n_obs)};
  }
};

struct ForecastStats {
  std::vector<double> mean;       // length n_obs
  std::vector<double> anomalies;  // n_ens x n_obs, centered; P = A^T A / (n_ens - 1)
};

inline ForecastStats forecast_statistics(const EnsembleMatrix& ens) {
  if (ens.n_ens < 2) throw std::invalid_argument("forecast_statistics: need at least two members");
  ForecastStats st;
  st.mean.assign(static_cast<std::size_t>(ens.n_obs), 0.0);
  for (int i = 0; i < ens.n_ens; ++i)
    for (int j = 0; j < ens.n_obs; ++j) st.mean[static_cast<std::size_t>(j)] += ens.at(i, j);
  for (double& v : st.mean) v /= ens.n_ens;
  st.anomalies.resize(static_cast<std::size_t>(ens.n_ens) * ens.n_obs);
  for (int i = 0; i < ens.n_ens; ++i)
    for (int j = 0; j < ens.n_obs; ++j)
      st.anomalies[static_cast<std::size_t>(i) * ens.n_obs + j] = ens.at(i, j) - st.mean[static_cast<std::size_t>(j)];
  return st;
}

/// Diagonal observation-error covariance R built from the per-point sigma of
/// an observation set; sigmas are floored so R stays strictly positive.
struct ObservationErrorModel {
  std::vector<double> r_diag;

  static ObservationErrorModel from(const ObservationSet& obs, double sigma_floor = 1e-6) {
    ObservationErrorModel m;
    m.r_diag.reserve(obs.sigma.size());
    for (double s : obs.sigma) {
      const double sf = std::max(s, sigma_floor);
      m.r_diag.push_back(sf * sf);
    }
    return m;
  }

  static ObservationErrorModel diagonal(std::vector<double> r) {
    for (double v : r)
      if (!(v > 0.0)) throw std::invalid_argument("observation covariance must be strictly positive");
    return {std::move(r)};
  }
};

struct KalmanDiagnostics {
  double innovation_rms = 0.0;       // |y - forecast mean| / sqrt(n_obs)
  double update_rms = 0.0;           // |analysis mean - forecast mean| / sqrt(n_obs)
  double max_offdiag_correlation = 0.0;  // of the forecast sample covariance
};

struct AnalysisData {
  EnsembleMatrix analysis;
  std::vector<double> mean;  // row-mean of the analysis matrix
  KalmanDiagnostics diagnostics;
};

/// Perturbed-observation (stochastic) EnKF update with H = identity on the
/// prediction vector: each member is assimilated against an independently
/// perturbed copy of the observations,
///   x_i^a = x_i^f + K (y + e_i - x_i^f),  K = P (P + R)^{-1},
/// applied through the ensemble-space form
///   K d = A^T [(m-1) I + A R^{-1} A^T]^{-1} A R^{-1} d,
/// which involves one SPD solve per member, never forms an n_obs x n_obs
/// matrix, and stays stable in both the zero-gain and full-trust limits.
inline AnalysisData analyze(const EnsembleMatrix& ens, std::span<const double> y,
                            const ObservationErrorModel& err, std::uint64_t seed) {
  const int m = ens.n_ens, n = ens.n_obs;
  if (static_cast<int>(y.size()) != n || static_cast<int>(err.r_diag.size()) != n)
    throw std::invalid_argument("analyze: dimension mismatch");
  if (m < 2) throw std::invalid_argument("analyze: need at least two members");
  for (double v : err.r_diag)
    if (!(v > 0.0)) throw std::runtime_error("analyze: observation covariance must be strictly positive");

  const ForecastStats st = forecast_statistics(ens);
  const auto A = [&](int i, int j) { return st.anomalies[static_cast<std::size_t>(i) * n + j]; };

  // M = (m-1) I + A R^{-1} A^T  (m x m, SPD)
  std::vector<double> Mfac(static_cast<std::size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k <= i; ++k) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += A(i, j) * A(k, j) / err.r_diag[static_cast<std::size_t>(j)];
      Mfac[static_cast<std::size_t>(i) * m + k] = s;
      Mfac[static_cast<std::size_t>(k) * m + i] = s;
    }
  for (int i = 0; i < m; ++i) Mfac[static_cast<std::size_t>(i) * m + i] += m - 1.0;
  cholesky(Mfac, m);

  Rng rng(seed);
  AnalysisData out;
  out.analysis = ens;
  std::vector<double> d(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double e = std::sqrt(err.r_diag[static_cast<std::size_t>(j)]) * rng.normal();
      d[static_cast<std::size_t>(j)] = y[static_cast<std::size_t>(j)] + e - ens.at(i, j);
    }
    for (int k = 0; k < m; ++k) {
      double s = 0.0;
      for (int j = 0; j < n; ++j)
        s += A(k, j) * d[static_cast<std::size_t>(j)] / err.r_diag[static_cast<std::size_t>(j)];
      w[static_cast<std::size_t>(k)] = s;
    }
    cholesky_solve(Mfac, m, w);
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += A(k, j) * w[static_cast<std::size_t>(k)];
      out.analysis.at(i, j) += s;
    }
  }

  out.mean.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.mean[static_cast<std::size_t>(j)] += out.analysis.at(i, j);
  for (double& v : out.mean) v /= m;

  double inn = 0.0, upd = 0.0;
  for (int j = 0; j < n; ++j) {
    const double a = y[static_cast<std::size_t>(j)] - st.mean[static_cast<std::size_t>(j)];
    const double b = out.mean[static_cast<std::size_t>(j)] - st.mean[static_cast<std::size_t>(j)];
    inn += a * a;
    upd += b * b;
  }
  out.diagnostics.innovation_rms = std::sqrt(inn / n);
  out.diagnostics.update_rms = std::sqrt(upd / n);
  // largest off-diagonal forecast correlation, a localization health check
  double max_corr = 0.0;
  std::vector<double> var(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += A(i, j) * A(i, j);
    var[static_cast<std::size_t>(j)] = s / (m - 1.0);
  }
  for (int j = 0; j < n; ++j) {
    if (var[static_cast<std::size_t>(j)] <= 0.0) continue;
    for (int k = j + 1; k < n; ++k) {
      if (var[static_cast<std::size_t>(k)] <= 0.0) continue;
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += A(i, j) * A(i, k);
      const double c = std::fabs(s / (m - 1.0)) /
                       std::sqrt(var[static_cast<std::size_t>(j)] * var[static_cast<std::size_t>(k)]);
      max_corr = std::max(max_corr, c);
    }
  }
  out.diagnostics.max_offdiag_correlation = max_corr;
  return out;
}

inline void save_analysis_csv(const ObservationSet& obs, std::span<const double> mean,
                              const std::string& path) {
  CsvWriter w(path, {"x", "t", "value"});
  for (std::size_t i = 0; i < obs.points.size(); ++i)
    w.row(std::vector<double>{obs.points[i].x, obs.points[i].t, mean[i]});
  w.close();
}

}  // namespace mopinnenkf

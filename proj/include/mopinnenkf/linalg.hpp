#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mopinnenkf {

/// In-place lower Cholesky factor of a dense symmetric positive-definite
/// matrix (row-major n x n). Throws when the matrix is not SPD.
inline void cholesky(std::vector<double>& a, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
      if (i == j) {
        if (!(s > 0.0)) throw std::runtime_error("cholesky: matrix not positive definite");
        a[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
      } else {
        a[static_cast<std::size_t>(i) * n + j] = s / a[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
}

/// Solves L L^T x = b in place given the Cholesky factor from cholesky().
inline void cholesky_solve(const std::vector<double>& chol, int n, std::span<double> b) {
  for (int i = 0; i < n; ++i) {
    double s = b[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) s -= chol[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = s / chol[static_cast<std::size_t>(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < n; ++k) s -= chol[static_cast<std::size_t>(k) * n + i] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = s / chol[static_cast<std::size_t>(i) * n + i];
  }
}

/// Dense Gaussian elimination with partial pivoting for small systems.
/// Returns false when the matrix is numerically singular.
inline bool solve_linear(std::vector<double> a, std::vector<double> b, int n,
                         std::vector<double>& out) {
  for (int c = 0; c < n; ++c) {
    int pivot = c;
    for (int r = c + 1; r < n; ++r)
      if (std::fabs(a[static_cast<std::size_t>(r) * n + c]) >
          std::fabs(a[static_cast<std::size_t>(pivot) * n + c]))
        pivot = r;
    if (std::fabs(a[static_cast<std::size_t>(pivot) * n + c]) < 1e-14) return false;
    if (pivot != c) {
      for (int k = 0; k < n; ++k)
        std::swap(a[static_cast<std::size_t>(pivot) * n + k], a[static_cast<std::size_t>(c) * n + k]);
      std::swap(b[static_cast<std::size_t>(pivot)], b[static_cast<std::size_t>(c)]);
    }
    for (int r = c + 1; r < n; ++r) {
      const double f = a[static_cast<std::size_t>(r) * n + c] / a[static_cast<std::size_t>(c) * n + c];
      if (f == 0.0) continue;
      for (int k = c; k < n; ++k)
        a[static_cast<std::size_t>(r) * n + k] -= f * a[static_cast<std::size_t>(c) * n + k];
      b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(c)];
    }
  }
  out.assign(static_cast<std::size_t>(n), 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[static_cast<std::size_t>(r)];
    for (int k = r + 1; k < n; ++k) s -= a[static_cast<std::size_t>(r) * n + k] * out[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(r)] = s / a[static_cast<std::size_t>(r) * n + r];
  }
  return true;
}

}  // namespace mopinnenkf

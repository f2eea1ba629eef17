#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csv.hpp"
#include "parallel.hpp"

namespace mopinnenkf {

/// Reference solution of the viscous Burgers equation on [-1,1] x [0,1] with
/// u(x,0) = -sin(pi x) and homogeneous Dirichlet boundaries, via the
/// Cole-Hopf quadrature
///   u(x,t) = -I1 / I0,
///   Ik = integral of sin(pi(x-e))^k * F(x-e) * exp(-e^2/(4 nu t)) de,
///   F(y) = exp(-cos(pi y) / (2 pi nu)).
/// Values are tabulated once on a regular grid and served through bicubic
/// interpolation; each grid entry comes from an independent trapezoid
/// quadrature, so refining the quadrature grid is the convergence knob.
class BurgersOracle {
 public:
  struct Options {
    int nx = 512;
    int nt = 201;
    int quadrature_points = 3001;
    int threads = 0;  // 0 = hardware
  };

  explicit BurgersOracle(double nu) : BurgersOracle(nu, Options()) {}

  BurgersOracle(double nu, Options opt) : nu_(nu), nx_(opt.nx), nt_(opt.nt) {
    if (nu <= 0) throw std::invalid_argument("viscosity must be positive");
    if (nx_ < 4 || nt_ < 4) throw std::invalid_argument("oracle grid too small");
    u_.assign(static_cast<std::size_t>(nx_) * nt_, 0.0);
    const int threads = opt.threads > 0 ? opt.threads : default_thread_count();
    const int q = opt.quadrature_points;
    parallel_for(nx_, threads, [&](int ix) {
      const double x = grid_x(ix);
      u_[idx(ix, 0)] = -std::sin(std::numbers::pi * x);
      for (int it = 1; it < nt_; ++it)
        u_[idx(ix, it)] = pointwise(nu_, x, grid_t(it), q);
    });
  }

  double nu() const { return nu_; }
  int nx() const { return nx_; }
  int nt() const { return nt_; }
  double grid_x(int ix) const { return -1.0 + 2.0 * ix / (nx_ - 1); }
  double grid_t(int it) const { return static_cast<double>(it) / (nt_ - 1); }
  double value_at_node(int ix, int it) const { return u_[idx(ix, it)]; }

  /// Direct quadrature at one point (t > 0), independent of the cached table.
  static double pointwise(double nu, double x, double t, int quadrature_points) {
    if (t <= 0.0) return -std::sin(std::numbers::pi * x);
    const double pi = std::numbers::pi;
    const double inv2pinu = 1.0 / (2.0 * pi * nu);
    const double inv4nut = 1.0 / (4.0 * nu * t);
    const double half_width = 9.0 * std::sqrt(2.0 * nu * t);
    const int q = quadrature_points | 1;  // odd count keeps the node set symmetric
    const double h = 2.0 * half_width / (q - 1);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < q; ++i) {
      const double e = -half_width + i * h;
      const double y = x - e;
      // exponent is bounded above by inv2pinu; shift it out so terms stay <= 1
      const double expo = -std::cos(pi * y) * inv2pinu - e * e * inv4nut - inv2pinu;
      const double wt = (i == 0 || i == q - 1) ? 0.5 : 1.0;
      const double g = wt * std::exp(expo);
      num += g * std::sin(pi * y);
      den += g;
    }
    return -num / den;
  }

  /// Bicubic (Catmull-Rom) interpolation on the cached grid.
  double operator()(double x, double t) const {
    if (x < -1.0 - 1e-12 || x > 1.0 + 1e-12 || t < -1e-12 || t > 1.0 + 1e-12)
      throw std::domain_error("burgers oracle: point outside [-1,1] x [0,1]");
    const double fx = std::clamp((x + 1.0) / 2.0 * (nx_ - 1), 0.0, static_cast<double>(nx_ - 1));
    const double ft = std::clamp(t * (nt_ - 1), 0.0, static_cast<double>(nt_ - 1));
    const int ix = std::min(static_cast<int>(fx), nx_ - 2);
    const int it = std::min(static_cast<int>(ft), nt_ - 2);
    const double sx = fx - ix;
    const double st = ft - it;
    double col[4];
    for (int k = 0; k < 4; ++k) {
      const int jt = std::clamp(it - 1 + k, 0, nt_ - 1);
      double p[4];
      for (int m = 0; m < 4; ++m) p[m] = u_[idx(std::clamp(ix - 1 + m, 0, nx_ - 1), jt)];
      col[k] = catmull_rom(p, sx);
    }
    return catmull_rom(col, st);
  }

  void save_csv(const std::string& path) const {
    CsvWriter w(path, {"x", "t", "u"});
    for (int ix = 0; ix < nx_; ++ix)
      for (int it = 0; it < nt_; ++it)
        w.row(std::vector<double>{grid_x(ix), grid_t(it), u_[idx(ix, it)]});
    w.close();
  }

  static std::optional<BurgersOracle> load_csv(const std::string& path, double nu,
                                               int nx = 512, int nt = 201) {
    if (!std::filesystem::exists(path)) return std::nullopt;
    CsvTable table;
    try {
      table = read_csv(path);
    } catch (const IoError&) {
      return std::nullopt;
    }
    if (table.rows.size() != static_cast<std::size_t>(nx) * nt) return std::nullopt;
    BurgersOracle o(Unloaded{}, nu, nx, nt);
    for (int ix = 0; ix < nx; ++ix)
      for (int it = 0; it < nt; ++it) {
        const auto& row = table.rows[static_cast<std::size_t>(ix) * nt + it];
        if (row.size() != 3) return std::nullopt;
        o.u_[o.idx(ix, it)] = row[2];
      }
    return o;
  }

  /// Process-wide instance per viscosity, loaded from the cache file when one
  /// exists (MOPINNENKF_CACHE_DIR or the working directory), built and saved
  /// otherwise.
  static const BurgersOracle& shared(double nu) {
    static std::mutex mu;
    static std::map<long long, std::unique_ptr<BurgersOracle>> cache;
    std::lock_guard<std::mutex> lock(mu);
    const long long key = static_cast<long long>(nu * 1e12);
    auto it = cache.find(key);
    if (it != cache.end()) return *it->second;
    const std::string path = default_cache_path(nu);
    if (auto loaded = load_csv(path, nu)) {
      auto& slot = cache[key];
      slot = std::make_unique<BurgersOracle>(std::move(*loaded));
      return *slot;
    }
    auto& slot = cache[key];
    slot = std::make_unique<BurgersOracle>(nu);
    try {
      slot->save_csv(path);
    } catch (const IoError&) {
      // cache write is best effort; the in-memory table is what matters
    }
    return *slot;
  }

  static std::string default_cache_path(double nu) {
    const char* dir = std::getenv("MOPINNENKF_CACHE_DIR");
    char name[96];
    std::snprintf(name, sizeof(name), "burgers_oracle_nu%.9g_512x201.csv", nu);
    return dir ? (std::filesystem::path(dir) / name).string() : std::string(name);
  }

 private:
  struct Unloaded {};
  BurgersOracle(Unloaded, double nu, int nx, int nt) : nu_(nu), nx_(nx), nt_(nt) {
    u_.assign(static_cast<std::size_t>(nx_) * nt_, 0.0);
  }

  static double catmull_rom(const double p[4], double s) {
    return 0.5 * (2.0 * p[1] + s * (p[2] - p[0] +
                  s * (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3] +
                  s * (3.0 * (p[1] - p[2]) + p[3] - p[0]))));
  }

  std::size_t idx(int ix, int it) const { return static_cast<std::size_t>(ix) * nt_ + it; }

  double nu_;
  int nx_, nt_;
  std::vector<double> u_;
};

}  // namespace mopinnenkf

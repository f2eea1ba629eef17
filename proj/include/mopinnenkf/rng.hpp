#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mopinnenkf {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// xoshiro256++ with hand-rolled double mappings so that sequences are
/// bit-identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t st = seed;
    for (auto& w : s_) w = splitmix64(st);
  }

  /// Derives an independent stream seed from a master seed.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t st = master ^ (0x9e3779b97f4a7c15ull * (stream + 0x632be59bd9b4e019ull));
    const std::uint64_t a = splitmix64(st);
    const std::uint64_t b = splitmix64(st);
    return a ^ (b << 1);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  /// Uniform integer in [0, n). Modulo bias is negligible for the small n used here.
  std::uint32_t below(std::uint32_t n) {
    return static_cast<std::uint32_t>((next_u64() >> 32) % n);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(static_cast<std::uint32_t>(i))]);
}

/// Moves k uniformly chosen elements to the front of `pool` and returns them.
/// `pool` persists between calls; repeated partial shuffles stay uniform.
inline std::vector<int> sample_front(std::vector<int>& pool, int k, Rng& rng) {
  const int n = static_cast<int>(pool.size());
  if (k >= n) return pool;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint32_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  return std::vector<int>(pool.begin(), pool.begin() + k);
}

}  // namespace mopinnenkf

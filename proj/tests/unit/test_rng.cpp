#include <catch2/catch_amalgamated.hpp>

#include "mopinnenkf/rng.hpp"

using namespace mopinnenkf;

TEST_CASE("rng streams are deterministic and independent", "[rng]") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  bool differ = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) differ |= (a2.next_u64() != c.next_u64());
  REQUIRE(differ);
  REQUIRE(Rng::derive(42, 0) != Rng::derive(42, 1));
  REQUIRE(Rng::derive(42, 0) == Rng::derive(42, 0));
}

TEST_CASE("uniform stays in [0,1) and normal has sane moments", "[rng]") {
  Rng r(7);
  double mean = 0.0, var = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    mean += z;
    var += z * z;
  }
  mean /= n;
  var = var / n - mean * mean;
  REQUIRE(std::fabs(mean) < 0.03);
  REQUIRE(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("sample_front draws distinct indices", "[rng]") {
  Rng r(3);
  std::vector<int> pool(50);
  for (int i = 0; i < 50; ++i) pool[i] = i;
  const auto picked = sample_front(pool, 10, r);
  REQUIRE(picked.size() == 10);
  std::vector<int> sorted = picked;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  for (int v : sorted) {
    REQUIRE(v >= 0);
    REQUIRE(v < 50);
  }
}

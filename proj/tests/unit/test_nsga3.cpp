#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "mopinnenkf/nsga3.hpp"

using namespace mopinnenkf;

namespace {

/// Independent oracle: recursive peeling by direct strict-domination scans.
FrontPartition peel_fronts(const std::vector<std::vector<double>>& objs) {
  std::vector<int> remaining(objs.size());
  for (std::size_t i = 0; i < objs.size(); ++i) remaining[i] = static_cast<int>(i);
  FrontPartition fronts;
  while (!remaining.empty()) {
    std::vector<int> front, rest;
    for (int i : remaining) {
      bool dominated = false;
      for (int j : remaining) {
        if (i == j) continue;
        if (dominates(objs[static_cast<std::size_t>(j)], objs[static_cast<std::size_t>(i)]) ==
            Dominance::strict) {
          dominated = true;
          break;
        }
      }
      (dominated ? rest : front).push_back(i);
    }
    fronts.push_back(std::move(front));
    remaining = std::move(rest);
  }
  return fronts;
}

std::vector<std::vector<double>> random_objectives(int n, int m, Rng& rng, bool quantize) {
  std::vector<std::vector<double>> objs(static_cast<std::size_t>(n),
                                        std::vector<double>(static_cast<std::size_t>(m)));
  for (auto& row : objs)
    for (auto& v : row) {
      v = rng.uniform();
      if (quantize) v = std::round(v * 4.0) / 4.0;  // provoke ties and duplicates
    }
  return objs;
}

}  // namespace

TEST_CASE("dominance relation", "[nsga3]") {
  const std::vector<double> a = {1, 1, 1, 1}, b = {2, 2, 2, 2}, c = {1, 3, 1, 1};
  REQUIRE(dominates(a, b) == Dominance::strict);
  REQUIRE(dominates(a, a) == Dominance::weak);
  REQUIRE(dominates(c, b) == Dominance::none);
  REQUIRE(dominates(b, a) == Dominance::none);
}

TEST_CASE("sorting basics", "[nsga3]") {
  SECTION("identical objectives collapse to one front") {
    std::vector<std::vector<double>> objs(7, {1.0, 2.0, 3.0, 4.0});
    const auto fronts = fast_nondominated_sort(objs);
    REQUIRE(fronts.size() == 1);
    REQUIRE(fronts[0].size() == 7);
  }
  SECTION("a strict chain gives singleton fronts") {
    std::vector<std::vector<double>> objs = {{3, 3}, {1, 1}, {2, 2}};
    const auto fronts = fast_nondominated_sort(objs);
    REQUIRE(fronts.size() == 3);
    REQUIRE(fronts[0] == std::vector<int>{1});
    REQUIRE(fronts[1] == std::vector<int>{2});
    REQUIRE(fronts[2] == std::vector<int>{0});
  }
}

TEST_CASE("sorting matches the brute-force peeling oracle", "[nsga3]") {
  Rng rng(1234);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(46));
    const auto objs = random_objectives(n, 4, rng, trial % 2 == 0);
    auto got = fast_nondominated_sort(objs);
    auto expect = peel_fronts(objs);
    REQUIRE(got.size() == expect.size());
    for (std::size_t f = 0; f < got.size(); ++f) {
      std::sort(got[f].begin(), got[f].end());
      std::sort(expect[f].begin(), expect[f].end());
      REQUIRE(got[f] == expect[f]);
    }
  }
}

TEST_CASE("das-dennis reference points", "[nsga3]") {
  const auto rs = ReferencePointSet::das_dennis(4, 4);
  REQUIRE(rs.points.size() == 35);  // C(7,3)
  for (const auto& p : rs.points) {
    double s = 0.0;
    for (double v : p) {
      REQUIRE(v >= 0.0);
      s += v;
    }
    REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
  }
  std::set<std::vector<double>> unique(rs.points.begin(), rs.points.end());
  REQUIRE(unique.size() == rs.points.size());
  REQUIRE(ReferencePointSet::das_dennis(2, 4).points.size() == 5);
}

TEST_CASE("survival keeps a front of exactly N unchanged", "[nsga3]") {
  // 4 non-dominated + 4 dominated individuals, N = 4
  std::vector<std::vector<double>> objs = {
      {0.0, 1.0}, {0.25, 0.75}, {0.75, 0.25}, {1.0, 0.0},
      {2.0, 2.0}, {2.5, 2.5}, {3.0, 3.0}, {2.0, 3.0},
  };
  const auto refs = ReferencePointSet::das_dennis(2, 4);
  Rng rng(5);
  const auto sr = survival_select(objs, refs, 4, rng);
  std::vector<int> got = sr.selected;
  std::sort(got.begin(), got.end());
  REQUIRE(got == std::vector<int>{0, 1, 2, 3});
  for (int i = 0; i < 4; ++i) REQUIRE(sr.rank[static_cast<std::size_t>(i)] == 1);
}

TEST_CASE("a single survivor is pareto-optimal", "[nsga3]") {
  Rng data_rng(8), rng(9);
  const auto objs = random_objectives(12, 4, data_rng, false);
  const auto refs = ReferencePointSet::das_dennis(4, 4);
  const auto sr = survival_select(objs, refs, 1, rng);
  REQUIRE(sr.selected.size() == 1);
  for (std::size_t j = 0; j < objs.size(); ++j)
    REQUIRE(dominates(objs[j], objs[static_cast<std::size_t>(sr.selected[0])]) != Dominance::strict);
}

TEST_CASE("niching on a hand-traced 8-individual 2-objective instance", "[nsga3]") {
  // Hand trace. Front 1 = {0,1}. Front 2 = {2,3,4,5}. With divisions = 2 the
  // reference directions are (0,1), (.5,.5), (1,0). Ideal point (0.05, 0.05);
  // extremes are members 1 and 0, giving intercepts (0.05, 0.05); normalized
  // coordinates associate 0 -> (0,1), 1 -> (1,0), 2 -> (0,1) at distance 0.2,
  // 3 -> (1,0) at 0.2, 4 -> (.5,.5) at 2.83, 5 -> (.5,.5) at 0.71. Retained
  // niche counts are 1/0/1, so the single last-front pick must come from the
  // empty middle niche, and with count 0 it is the closest member: 5.
  std::vector<std::vector<double>> objs = {
      {0.05, 0.10}, {0.10, 0.05},  // front 1
      {0.06, 1.00},                // front 2, near the (0,1) axis
      {1.00, 0.06},                // front 2, near the (1,0) axis
      {0.40, 0.60},                // front 2, diagonal, farther out
      {0.55, 0.50},                // front 2, diagonal, closest to the ray
      {2.00, 2.00}, {3.00, 3.00},  // later fronts
  };
  const auto refs = ReferencePointSet::das_dennis(2, 2);
  for (std::uint64_t seed : {3ull, 17ull, 99ull}) {
    Rng rng(seed);
    const auto sr = survival_select(objs, refs, 3, rng);
    std::vector<int> got = sr.selected;
    std::sort(got.begin(), got.end());
    REQUIRE(got == std::vector<int>{0, 1, 5});
    REQUIRE(sr.ref_index[5] == 1);
  }
}

TEST_CASE("survival output has no duplicates and exact size", "[nsga3]") {
  Rng data_rng(77), rng(78);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 8 + 2 * static_cast<int>(data_rng.below(10));
    const auto objs = random_objectives(2 * n, 4, data_rng, trial % 2 == 1);
    const auto refs = ReferencePointSet::das_dennis(4, 4);
    const auto sr = survival_select(objs, refs, n, rng);
    REQUIRE(static_cast<int>(sr.selected.size()) == n);
    std::set<int> unique(sr.selected.begin(), sr.selected.end());
    REQUIRE(unique.size() == sr.selected.size());
  }
}

TEST_CASE("degenerate objectives fall back to range normalization", "[nsga3]") {
  // all individuals identical: intercept system is singular
  std::vector<std::vector<double>> objs(6, {1.0, 1.0, 1.0, 1.0});
  const auto refs = ReferencePointSet::das_dennis(4, 4);
  Rng rng(4);
  const auto sr = survival_select(objs, refs, 3, rng);
  REQUIRE(sr.fallback_normalization);
  REQUIRE(sr.selected.size() == 3);
}

TEST_CASE("objective permutation preserves the surviving set on a tie-free instance", "[nsga3]") {
  // the hand-traced instance resolves its niching without consulting the rng,
  // so swapping the two objectives must leave the surviving indices unchanged
  std::vector<std::vector<double>> objs = {
      {0.05, 0.10}, {0.10, 0.05}, {0.06, 1.00}, {1.00, 0.06},
      {0.40, 0.60}, {0.55, 0.50}, {2.00, 2.00}, {3.00, 3.00},
  };
  const auto refs = ReferencePointSet::das_dennis(2, 2);
  Rng rng1(11), rng2(11);
  const auto a = survival_select(objs, refs, 3, rng1);
  auto swapped = objs;
  for (auto& row : swapped) std::swap(row[0], row[1]);
  const auto b = survival_select(swapped, refs, 3, rng2);
  std::vector<int> sa = a.selected, sb = b.selected;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  REQUIRE(sa == sb);
  REQUIRE(sa == std::vector<int>{0, 1, 5});
}

namespace {

Population toy_population(int n, std::uint64_t seed) {
  Population pop;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    Individual ind;
    ind.genome = {rng.uniform(), rng.uniform(), rng.uniform()};
    ind.rank = 1 + static_cast<int>(rng.below(3));
    ind.ref_distance = rng.uniform();
    ind.stream = Rng::derive(seed, static_cast<std::uint64_t>(i));
    pop.members.push_back(std::move(ind));
  }
  return pop;
}

}  // namespace

TEST_CASE("offspring respect genome length and determinism", "[nsga3]") {
  const auto pop = toy_population(10, 42);
  Nsga3Options opt;
  const auto a = make_offspring(pop, opt, 99);
  const auto b = make_offspring(pop, opt, 99);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].genome.size() == 3);
    REQUIRE(a[i].genome == b[i].genome);
  }
}

TEST_CASE("offspring with variation disabled are tournament-winner copies", "[nsga3]") {
  const auto pop = toy_population(8, 7);
  Nsga3Options opt;
  opt.crossover_prob = 0.0;
  opt.mutation_scale = 0.0;
  const auto children = make_offspring(pop, opt, 5);
  for (const auto& c : children) {
    bool is_copy = false;
    for (const auto& m : pop.members) is_copy |= (c.genome == m.genome);
    REQUIRE(is_copy);
  }
}

namespace {

struct TinySetup {
  ProblemSpec spec = ProblemSpec::tfmdwe(Mode::forward, false);
  NetworkArchitecture arch = NetworkArchitecture::mlp(1, 5);
  CollocationSets coll;
  DataSet data;

  TinySetup() {
    coll = sample_collocation(spec, 2, 12, 30);
    const auto obs = make_observations(spec, 0.2, 5, 4, 3);
    data = DataSet::from_observations(obs);
  }

  LossSetup setup() const { return {&spec, &arch, &coll, &data, 8, 64, 1}; }
};

}  // namespace

TEST_CASE("zero generations returns the evaluated initial population", "[nsga3]") {
  TinySetup ts;
  Nsga3Options opt;
  opt.population_size = 6;
  opt.epochs_per_gen = 5;
  const auto pop = train_nsga3(ts.setup(), 0, opt, 11);
  REQUIRE(pop.size() == 6);
  for (const auto& m : pop.members) {
    REQUIRE(m.objectives_valid);
    REQUIRE(m.objectives.finite());
    REQUIRE(m.rank >= 1);
  }
}

TEST_CASE("rank-1 front never contains a dominated pair", "[nsga3]") {
  TinySetup ts;
  Nsga3Options opt;
  opt.population_size = 8;
  opt.epochs_per_gen = 10;
  opt.res_batch = 16;
  const auto pop = train_nsga3(ts.setup(), 2, opt, 21);
  REQUIRE(pop.size() == 8);
  std::vector<const Individual*> front;
  for (const auto& m : pop.members)
    if (m.rank == 1) front.push_back(&m);
  REQUIRE_FALSE(front.empty());
  for (const auto* a : front)
    for (const auto* b : front) {
      if (a == b) continue;
      const auto av = a->objectives.as_array(), bv = b->objectives.as_array();
      REQUIRE(dominates(std::span<const double>(av.data(), 4),
                        std::span<const double>(bv.data(), 4)) != Dominance::strict);
    }
}

TEST_CASE("population training is deterministic under any worker count", "[nsga3]") {
  TinySetup ts;
  Nsga3Options opt;
  opt.population_size = 6;
  opt.epochs_per_gen = 8;
  opt.res_batch = 12;
  opt.obj_batch = 16;
  opt.threads = 1;
  const auto a = train_nsga3(ts.setup(), 2, opt, 31);
  opt.threads = 4;
  const auto b = train_nsga3(ts.setup(), 2, opt, 31);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    REQUIRE(a.members[static_cast<std::size_t>(i)].genome == b.members[static_cast<std::size_t>(i)].genome);
    REQUIRE(a.members[static_cast<std::size_t>(i)].rank == b.members[static_cast<std::size_t>(i)].rank);
  }
}

TEST_CASE("warm start preserves population size and improves continuity", "[nsga3]") {
  TinySetup ts;
  Nsga3Options opt;
  opt.population_size = 6;
  opt.epochs_per_gen = 8;
  const auto first = train_nsga3(ts.setup(), 1, opt, 41);
  const auto second = train_nsga3(ts.setup(), 1, opt, 42, &first);
  REQUIRE(second.size() == 6);
  for (const auto& m : second.members) REQUIRE(m.objectives.finite());
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "adam.hpp"
#include "linalg.hpp"
#include "losses.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace mopinnenkf {

// ---------------------------------------------------------------------------
// Generic many-objective machinery (minimization throughout).

enum class Dominance { strict, weak, none };

inline Dominance dominates(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dominates: objective count mismatch");
  bool any_less = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return Dominance::none;
    if (a[i] < b[i]) any_less = true;
  }
  return any_less ? Dominance::strict : Dominance::weak;
}

using FrontPartition = std::vector<std::vector<int>>;

/// Deb's fast non-dominated sorting; O(P^2 m) is fine at the population sizes
/// used here.
inline FrontPartition fast_nondominated_sort(const std::vector<std::vector<double>>& objs) {
  const int n = static_cast<int>(objs.size());
  if (n == 0) throw std::invalid_argument("fast_nondominated_sort: empty population");
  std::vector<std::vector<int>> dominated(static_cast<std::size_t>(n));
  std::vector<int> count(static_cast<std::size_t>(n), 0);
  FrontPartition fronts(1);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(objs[static_cast<std::size_t>(p)], objs[static_cast<std::size_t>(q)]) == Dominance::strict)
        dominated[static_cast<std::size_t>(p)].push_back(q);
      else if (dominates(objs[static_cast<std::size_t>(q)], objs[static_cast<std::size_t>(p)]) == Dominance::strict)
        ++count[static_cast<std::size_t>(p)];
    }
    if (count[static_cast<std::size_t>(p)] == 0) fronts[0].push_back(p);
  }
  std::size_t f = 0;
  while (f < fronts.size() && !fronts[f].empty()) {
    std::vector<int> next;
    for (int p : fronts[f])
      for (int q : dominated[static_cast<std::size_t>(p)])
        if (--count[static_cast<std::size_t>(q)] == 0) next.push_back(q);
    if (!next.empty()) fronts.push_back(std::move(next));
    ++f;
  }
  return fronts;
}

/// Das-Dennis simplex lattice: all non-negative integer compositions of
/// `divisions` into m parts, scaled to the unit simplex, in lexicographic
/// order.
struct ReferencePointSet {
  int objectives = 0;
  std::vector<std::vector<double>> points;

  static ReferencePointSet das_dennis(int m, int divisions) {
    if (m < 2 || divisions < 1) throw std::invalid_argument("das_dennis: need m >= 2, divisions >= 1");
    ReferencePointSet rs;
    rs.objectives = m;
    std::vector<int> cur(static_cast<std::size_t>(m), 0);
    recurse(rs.points, cur, 0, divisions, m, divisions);
    return rs;
  }

 private:
  static void recurse(std::vector<std::vector<double>>& out, std::vector<int>& cur, int idx,
                      int left, int m, int p) {
    if (idx == m - 1) {
      cur[static_cast<std::size_t>(idx)] = left;
      std::vector<double> pt(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) pt[static_cast<std::size_t>(i)] = static_cast<double>(cur[static_cast<std::size_t>(i)]) / p;
      out.push_back(std::move(pt));
      return;
    }
    for (int v = 0; v <= left; ++v) {
      cur[static_cast<std::size_t>(idx)] = v;
      recurse(out, cur, idx + 1, left - v, m, p);
    }
  }
};

inline double perpendicular_distance(std::span<const double> f, std::span<const double> w) {
  double fw = 0.0, ww = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    fw += f[i] * w[i];
    ww += w[i] * w[i];
  }
  const double s = fw / ww;
  double d2 = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double r = f[i] - s * w[i];
    d2 += r * r;
  }
  return std::sqrt(d2);
}

struct SurvivalResult {
  std::vector<int> selected;        // indices into the input, exactly n_survivors
  std::vector<int> rank;            // per input individual, 1-based
  std::vector<int> ref_index;       // nearest reference direction (members of retained fronts)
  std::vector<double> ref_distance; // perpendicular distance to it
  bool fallback_normalization = false;
};

/// NSGA-III environmental selection: whole fronts below the cut, then
/// reference-point niching on the cut front. Normalization uses the ideal
/// point and extreme-point intercepts, falling back to objective ranges when
/// the intercept system is degenerate. Ties pick uniformly with the seeded rng.
inline SurvivalResult survival_select(const std::vector<std::vector<double>>& objs,
                                      const ReferencePointSet& refs, int n_survivors, Rng& rng) {
  const int n = static_cast<int>(objs.size());
  const int m = refs.objectives;
  if (n < n_survivors) throw std::invalid_argument("survival_select: not enough individuals");
  for (const auto& o : objs)
    if (static_cast<int>(o.size()) != m) throw std::invalid_argument("survival_select: objective count mismatch");

  SurvivalResult out;
  out.rank.assign(static_cast<std::size_t>(n), 0);
  out.ref_index.assign(static_cast<std::size_t>(n), -1);
  out.ref_distance.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

  const FrontPartition fronts = fast_nondominated_sort(objs);
  for (std::size_t f = 0; f < fronts.size(); ++f)
    for (int i : fronts[f]) out.rank[static_cast<std::size_t>(i)] = static_cast<int>(f) + 1;

  std::vector<int> retained;  // fronts strictly below the cut
  std::size_t cut = 0;
  while (cut < fronts.size() &&
         static_cast<int>(retained.size() + fronts[cut].size()) < n_survivors) {
    retained.insert(retained.end(), fronts[cut].begin(), fronts[cut].end());
    ++cut;
  }
  std::vector<int> last = fronts[cut];
  std::vector<int> considered = retained;
  considered.insert(considered.end(), last.begin(), last.end());

  // normalize over the considered set
  std::vector<double> ideal(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
  for (int i : considered)
    for (int j = 0; j < m; ++j)
      ideal[static_cast<std::size_t>(j)] =
          std::min(ideal[static_cast<std::size_t>(j)], objs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
  auto translated = [&](int i, int j) {
    return objs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - ideal[static_cast<std::size_t>(j)];
  };

  std::vector<double> intercepts(static_cast<std::size_t>(m), 1.0);
  bool fallback = false;
  {
    std::vector<int> extreme(static_cast<std::size_t>(m), -1);
    for (int j = 0; j < m; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (int i : considered) {
        double asf = 0.0;
        for (int k = 0; k < m; ++k) {
          const double wk = (k == j) ? 1.0 : 1e-6;
          asf = std::max(asf, translated(i, k) / wk);
        }
        if (asf < best) {
          best = asf;
          extreme[static_cast<std::size_t>(j)] = i;
        }
      }
    }
    std::vector<double> E(static_cast<std::size_t>(m) * m);
    std::vector<double> one(static_cast<std::size_t>(m), 1.0);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        E[static_cast<std::size_t>(r) * m + c] = translated(extreme[static_cast<std::size_t>(r)], c);
    std::vector<double> beta;
    if (solve_linear(E, one, m, beta)) {
      for (int j = 0; j < m; ++j) {
        if (!(beta[static_cast<std::size_t>(j)] > 1e-10) || !std::isfinite(beta[static_cast<std::size_t>(j)])) {
          fallback = true;
          break;
        }
        intercepts[static_cast<std::size_t>(j)] = 1.0 / beta[static_cast<std::size_t>(j)];
      }
    } else {
      fallback = true;
    }
    if (!fallback) {
      for (int j = 0; j < m; ++j)
        if (!(intercepts[static_cast<std::size_t>(j)] > 1e-12)) fallback = true;
    }
    if (fallback) {
      for (int j = 0; j < m; ++j) {
        double mx = 0.0;
        for (int i : considered) mx = std::max(mx, translated(i, j));
        intercepts[static_cast<std::size_t>(j)] = mx > 1e-12 ? mx : 1.0;
      }
    }
  }
  out.fallback_normalization = fallback;

  // associate every considered member with its nearest reference direction
  std::vector<double> fhat(static_cast<std::size_t>(m));
  for (int i : considered) {
    for (int j = 0; j < m; ++j)
      fhat[static_cast<std::size_t>(j)] = translated(i, j) / intercepts[static_cast<std::size_t>(j)];
    int best_ref = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < refs.points.size(); ++r) {
      const double d = perpendicular_distance(fhat, refs.points[r]);
      if (d < best_d) {
        best_d = d;
        best_ref = static_cast<int>(r);
      }
    }
    out.ref_index[static_cast<std::size_t>(i)] = best_ref;
    out.ref_distance[static_cast<std::size_t>(i)] = best_d;
  }

  out.selected = retained;
  if (static_cast<int>(retained.size() + last.size()) == n_survivors) {
    out.selected.insert(out.selected.end(), last.begin(), last.end());
    return out;
  }

  // niching on the cut front
  const int n_refs = static_cast<int>(refs.points.size());
  std::vector<int> niche_count(static_cast<std::size_t>(n_refs), 0);
  for (int i : retained) ++niche_count[static_cast<std::size_t>(out.ref_index[static_cast<std::size_t>(i)])];
  std::vector<std::vector<int>> candidates(static_cast<std::size_t>(n_refs));
  for (int i : last) candidates[static_cast<std::size_t>(out.ref_index[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<bool> active(static_cast<std::size_t>(n_refs), true);

  while (static_cast<int>(out.selected.size()) < n_survivors) {
    int min_count = std::numeric_limits<int>::max();
    for (int r = 0; r < n_refs; ++r)
      if (active[static_cast<std::size_t>(r)]) min_count = std::min(min_count, niche_count[static_cast<std::size_t>(r)]);
    std::vector<int> min_refs;
    for (int r = 0; r < n_refs; ++r)
      if (active[static_cast<std::size_t>(r)] && niche_count[static_cast<std::size_t>(r)] == min_count)
        min_refs.push_back(r);
    const int r = min_refs[rng.below(static_cast<std::uint32_t>(min_refs.size()))];
    auto& cand = candidates[static_cast<std::size_t>(r)];
    if (cand.empty()) {
      active[static_cast<std::size_t>(r)] = false;
      continue;
    }
    std::size_t pick;
    if (niche_count[static_cast<std::size_t>(r)] == 0) {
      pick = 0;
      for (std::size_t k = 1; k < cand.size(); ++k)
        if (out.ref_distance[static_cast<std::size_t>(cand[k])] <
            out.ref_distance[static_cast<std::size_t>(cand[pick])])
          pick = k;
    } else {
      pick = rng.below(static_cast<std::uint32_t>(cand.size()));
    }
    out.selected.push_back(cand[pick]);
    cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(pick));
    ++niche_count[static_cast<std::size_t>(r)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// PINN population layer: genomes are flat parameter vectors.

struct Individual {
  ParameterVector genome;
  ObjectiveVector objectives;
  bool objectives_valid = false;
  int rank = 0;
  int ref_index = -1;
  double ref_distance = std::numeric_limits<double>::infinity();
  std::uint64_t stream = 0;  // per-individual rng stream for memetic training
};

struct Population {
  std::vector<Individual> members;
  int generation = 0;

  int size() const { return static_cast<int>(members.size()); }
};

struct Nsga3Options {
  int population_size = 24;
  int ref_divisions = 4;  // C(7,3) = 35 reference points on the 4-simplex
  int epochs_per_gen = 1000;
  int res_batch = 0;  // memetic training subsample (0 = full residual set)
  int obj_batch = 0;  // ranking-objective subsample, shared per generation
  double crossover_prob = 0.9;
  double swap_prob = 0.5;
  double mutation_scale = 0.01;
  int threads = 1;
  LossWeights memetic_weights;
};

namespace detail {

inline int tournament(const Population& pop, Rng& rng) {
  const int n = pop.size();
  const int a = static_cast<int>(rng.below(static_cast<std::uint32_t>(n)));
  const int b = (a + 1 + static_cast<int>(rng.below(static_cast<std::uint32_t>(n - 1)))) % n;
  const auto& ia = pop.members[static_cast<std::size_t>(a)];
  const auto& ib = pop.members[static_cast<std::size_t>(b)];
  if (ia.rank != ib.rank) return ia.rank < ib.rank ? a : b;
  if (ia.ref_distance != ib.ref_distance) return ia.ref_distance < ib.ref_distance ? a : b;
  return std::min(a, b);
}

inline void mutate(ParameterVector& g, double scale, Rng& rng) {
  const double rate = 1.0 / static_cast<double>(g.size());
  for (double& v : g)
    if (rng.uniform() < rate) v += rng.normal() * scale * std::max(std::fabs(v), 0.1);
}

}  // namespace detail

/// Variation: binary tournament on (rank, niche distance), uniform crossover,
/// per-coordinate Gaussian mutation. Genome length is preserved.
inline std::vector<Individual> make_offspring(const Population& pop, const Nsga3Options& opt,
                                              std::uint64_t seed) {
  Rng rng(seed);
  const int n = pop.size();
  std::vector<Individual> children;
  children.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(children.size()) < n) {
    const int p1 = detail::tournament(pop, rng);
    const int p2 = detail::tournament(pop, rng);
    ParameterVector c1 = pop.members[static_cast<std::size_t>(p1)].genome;
    ParameterVector c2 = pop.members[static_cast<std::size_t>(p2)].genome;
    if (rng.uniform() < opt.crossover_prob)
      for (std::size_t k = 0; k < c1.size(); ++k)
        if (rng.uniform() < opt.swap_prob) std::swap(c1[k], c2[k]);
    detail::mutate(c1, opt.mutation_scale, rng);
    detail::mutate(c2, opt.mutation_scale, rng);
    Individual a, b;
    a.genome = std::move(c1);
    b.genome = std::move(c2);
    a.stream = Rng::derive(seed, 2 * children.size());
    b.stream = Rng::derive(seed, 2 * children.size() + 1);
    children.push_back(std::move(a));
    if (static_cast<int>(children.size()) < n) children.push_back(std::move(b));
  }
  return children;
}

struct GenerationRow {
  int generation = 0;
  int individual = 0;
  ObjectiveVector objectives;
  int rank = 0;
};

namespace detail {

inline void evaluate_population(const LossSetup& setup, std::vector<Individual>& members,
                                std::span<const int> subset, int threads) {
  parallel_for(static_cast<int>(members.size()), threads, [&](int i) {
    auto& ind = members[static_cast<std::size_t>(i)];
    try {
      ind.objectives = objectives(setup, ind.genome, subset);
    } catch (const std::exception&) {
      ind.objectives = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    }
    ind.objectives_valid = true;
  });
}

inline std::vector<std::vector<double>> objective_table(const std::vector<Individual>& members) {
  std::vector<std::vector<double>> objs;
  objs.reserve(members.size());
  for (const auto& m : members) {
    const auto a = m.objectives.as_array();
    // non-finite objectives rank behind everything finite
    std::vector<double> row(a.begin(), a.end());
    for (double& v : row)
      if (!std::isfinite(v)) v = std::numeric_limits<double>::max();
    objs.push_back(std::move(row));
  }
  return objs;
}

inline void apply_metadata(std::vector<Individual>& members, const SurvivalResult& sr) {
  for (std::size_t i = 0; i < members.size(); ++i) {
    members[i].rank = sr.rank[i];
    members[i].ref_index = sr.ref_index[i];
    members[i].ref_distance = sr.ref_distance[i];
  }
}

}  // namespace detail

/// Algorithm: per generation, memetic ADAM refinement of every individual on
/// the unit-weight scalar loss, then offspring by variation, then reference
/// point survival on the combined 2N set. Individuals train on their own rng
/// streams, so results do not depend on the worker count.
inline Population train_nsga3(const LossSetup& setup, int generations, const Nsga3Options& opt,
                              std::uint64_t seed, const Population* warm_start = nullptr,
                              std::vector<GenerationRow>* history = nullptr,
                              int* elitism_violations = nullptr) {
  if (generations < 0) throw std::invalid_argument("train_nsga3: negative generation count");
  const int n = opt.population_size;
  const ReferencePointSet refs = ReferencePointSet::das_dennis(4, opt.ref_divisions);
  const int n_res = static_cast<int>(setup.coll->res.size());

  Population pop;
  if (warm_start && warm_start->size() == n) {
    pop = *warm_start;
    pop.generation = 0;
  } else {
    pop.members.resize(static_cast<std::size_t>(n));
    const auto slot = setup.spec->physics_slot_init();
    for (int i = 0; i < n; ++i) {
      auto& ind = pop.members[static_cast<std::size_t>(i)];
      ind.genome = init_parameters(*setup.arch, Rng::derive(seed, 10 + static_cast<std::uint64_t>(i)), slot);
    }
  }
  for (int i = 0; i < n; ++i)
    pop.members[static_cast<std::size_t>(i)].stream = Rng::derive(seed, 500 + static_cast<std::uint64_t>(i));

  auto generation_subset = [&](int g, std::vector<int>& storage) -> std::span<const int> {
    if (opt.obj_batch <= 0 || opt.obj_batch >= n_res) return {};
    Rng r(Rng::derive(seed, 900 + static_cast<std::uint64_t>(g)));
    std::vector<int> pool(static_cast<std::size_t>(n_res));
    for (int i = 0; i < n_res; ++i) pool[static_cast<std::size_t>(i)] = i;
    storage = sample_front(pool, opt.obj_batch, r);
    return storage;
  };

  std::vector<int> subset_storage;
  std::span<const int> subset = generation_subset(0, subset_storage);
  detail::evaluate_population(setup, pop.members, subset, opt.threads);
  {
    Rng r(Rng::derive(seed, 600));
    const SurvivalResult sr = survival_select(detail::objective_table(pop.members), refs, n, r);
    detail::apply_metadata(pop.members, sr);
  }

  double prev_best = std::numeric_limits<double>::infinity();
  for (const auto& m : pop.members)
    prev_best = std::min(prev_best, weighted_scalar(m.objectives, LossWeights{}));

  for (int g = 1; g <= generations; ++g) {
    // memetic local search
    parallel_for(n, opt.threads, [&](int i) {
      auto& ind = pop.members[static_cast<std::size_t>(i)];
      TrainOptions to;
      to.epochs = opt.epochs_per_gen;
      to.weights = opt.memetic_weights;
      to.res_batch = opt.res_batch;
      to.seed = Rng::derive(ind.stream, static_cast<std::uint64_t>(g));
      to.trace_every = std::max(1, opt.epochs_per_gen);
      try {
        ind.genome = train_adam(setup, ind.genome, to).params;
      } catch (const std::exception&) {
        // a diverged individual keeps its pre-refinement genome and is left
        // to the selection pressure
      }
      ind.objectives_valid = false;
    });

    subset = generation_subset(g, subset_storage);
    detail::evaluate_population(setup, pop.members, subset, opt.threads);
    {
      Rng r(Rng::derive(seed, 650 + static_cast<std::uint64_t>(g)));
      const SurvivalResult sr = survival_select(detail::objective_table(pop.members), refs, n, r);
      detail::apply_metadata(pop.members, sr);
    }

    std::vector<Individual> children =
        make_offspring(pop, opt, Rng::derive(seed, 700 + static_cast<std::uint64_t>(g)));
    detail::evaluate_population(setup, children, subset, opt.threads);

    std::vector<Individual> combined = pop.members;
    combined.insert(combined.end(), std::make_move_iterator(children.begin()),
                    std::make_move_iterator(children.end()));
    Rng r(Rng::derive(seed, 800 + static_cast<std::uint64_t>(g)));
    const SurvivalResult sr = survival_select(detail::objective_table(combined), refs, n, r);
    Population next;
    next.generation = g;
    next.members.reserve(static_cast<std::size_t>(n));
    for (int idx : sr.selected) {
      Individual ind = std::move(combined[static_cast<std::size_t>(idx)]);
      ind.rank = sr.rank[static_cast<std::size_t>(idx)];
      ind.ref_index = sr.ref_index[static_cast<std::size_t>(idx)];
      ind.ref_distance = sr.ref_distance[static_cast<std::size_t>(idx)];
      next.members.push_back(std::move(ind));
    }
    pop = std::move(next);

    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : pop.members) best = std::min(best, weighted_scalar(m.objectives, LossWeights{}));
    if (elitism_violations && best > prev_best * (1.0 + 1e-12)) ++(*elitism_violations);
    prev_best = best;

    if (history)
      for (int i = 0; i < pop.size(); ++i)
        history->push_back({g, i, pop.members[static_cast<std::size_t>(i)].objectives,
                            pop.members[static_cast<std::size_t>(i)].rank});
  }
  return pop;
}

}  // namespace mopinnenkf

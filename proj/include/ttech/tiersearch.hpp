#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ttech/core.hpp"
#include "ttech/dynsys.hpp"
#include "ttech/solvers.hpp"

namespace ttech::tier {

struct Solution {
  Vec point;
  double value = 0;
  int tier = 0;
  Index id = 0;          // insertion order, stable under sorting
  Index parent = -1;     // id of the solution it was reached from; -1 for the root
  Index direction = -1;  // direction index at the parent
  int iterations = 0;    // local-solver iterations spent refining it
};

using Metric = std::function<double(const Vec&, const Vec&)>;

/// |a - b| / max(|b|, 1)
double relative_distance(const Vec& a, const Vec& b);

class SolutionSet {
 public:
  explicit SolutionSet(double dedup_tol = 1e-3, Metric metric = relative_distance);

  /// Index of a stored solution within dedup_tol of x.
  std::optional<size_t> find(const Vec& x) const;
  /// Stores s unless a duplicate exists; assigns s.id. Returns false for duplicates.
  bool insert(Solution s);

  const Solution& best() const;
  const std::vector<Solution>& solutions() const { return solutions_; }
  size_t size() const { return solutions_.size(); }
  double dedup_tol() const { return dedup_tol_; }
  const Metric& metric() const { return metric_; }

  /// Value ascending, then lexicographic on the point.
  void canonical_sort();
  /// [{id, tier, value, parent, direction_index, point}]
  std::string to_json() const;

 private:
  std::vector<Solution> solutions_;
  double dedup_tol_;
  Metric metric_;
  Index next_id_ = 0;
};

enum class DirectionStrategy { random, hessian_eigenvectors };

using HessianFn = std::function<Mat(const Vec&)>;

struct TierConfig {
  double step = 1e-2;
  double eps = 0;  // 0 selects 2 * step
  int max_evals = 500;
  int max_tiers = 2;
  DirectionStrategy strategy = DirectionStrategy::random;
  int n_directions = 0;  // 0 selects the dimension (random strategy only)
  /// Solutions of tier >= 1 are expanded only if value <= v0 + (c - 1)|v0|.
  double prune_factor = 1.2;
  double dedup_tol = 1e-3;
  bool scale_steps = true;  // step along coordinate i is step * max(|x_i|, 0.1)
  /// When positive, refinements needing more than factor x the best solution's
  /// iterations are discarded.
  double iteration_cap_factor = 0;
  std::uint64_t seed = 0;

  double effective_eps() const { return eps > 0 ? eps : 2 * step; }
  void validate() const;
};

/// Unit search directions at x. The random strategy draws n points uniformly on
/// the sphere; the eigenvector strategy returns each eigenvector of the Hessian
/// (or of `hessian` when given) in both orientations.
std::vector<Vec> generate_directions(const Objective& obj, const Vec& x, DirectionStrategy strategy, int n,
                                     std::mt19937_64& rng, const HessianFn& hessian = {});

struct ExitHit {
  Vec exit;
  Vec ray;  // per-step displacement divided by step
  int evals = 0;
};

/// Scans x + k * step * ray for k = 1, 2, ... and returns the last sample before the
/// first decrease that follows an increase.
std::optional<ExitHit> exit_along(const Objective& obj, const Vec& x, const Vec& d, double step, int max_evals,
                                  bool scale_steps = true);

/// Local refinement from exit + eps * ray. Returns nullopt (with a reason) when the
/// solver fails, does not converge, or lands back on `origin`.
std::optional<Solution> escape_refine(const Objective& obj, const Vec& exit, const Vec& ray, double eps,
                                      const LocalSolver& solver, const Solution& origin, const SolutionSet& seen,
                                      std::string* reason = nullptr);

struct Exploration {
  Index parent = 0;
  Index direction = 0;
  int tier = 0;
  int evals = 0;
  std::string outcome;  // "new", "duplicate", "no_exit", "pruned_iterations", or an error message
};

/// Refines x0, then expands tier by tier. Direction explorations within a tier run
/// in parallel and are merged in direction order, so the result does not depend
/// on the thread count. The returned set is canonically sorted.
SolutionSet tier_search(const Objective& obj, const Vec& x0, const LocalSolver& solver, const TierConfig& cfg,
                        const HessianFn& hessian = {}, std::vector<Exploration>* log = nullptr,
                        const Metric& metric = relative_distance);

}  // namespace ttech::tier

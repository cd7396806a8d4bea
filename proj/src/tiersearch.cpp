#include "ttech/tiersearch.hpp"

#include <fmt/core.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "ttech/parallel.hpp"

namespace ttech::tier {

double relative_distance(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1.0); }

SolutionSet::SolutionSet(double dedup_tol, Metric metric) : dedup_tol_(dedup_tol), metric_(std::move(metric)) {
  if (!(dedup_tol > 0)) throw ParameterError("SolutionSet: dedup_tol must be positive");
  if (!metric_) metric_ = relative_distance;
}

std::optional<size_t> SolutionSet::find(const Vec& x) const {
  for (size_t i = 0; i < solutions_.size(); ++i)
    if (solutions_[i].point.size() == x.size() && metric_(x, solutions_[i].point) <= dedup_tol_) return i;
  return std::nullopt;
}

bool SolutionSet::insert(Solution s) {
  if (find(s.point)) return false;
  s.id = next_id_++;
  solutions_.push_back(std::move(s));
  return true;
}

const Solution& SolutionSet::best() const {
  if (solutions_.empty()) throw ParameterError("SolutionSet::best on an empty set");
  return *std::min_element(solutions_.begin(), solutions_.end(),
                           [](const Solution& a, const Solution& b) { return a.value < b.value; });
}

void SolutionSet::canonical_sort() {
  std::stable_sort(solutions_.begin(), solutions_.end(), [](const Solution& a, const Solution& b) {
    if (a.value != b.value) return a.value < b.value;
    return std::lexicographical_compare(a.point.begin(), a.point.end(), b.point.begin(), b.point.end());
  });
}

std::string SolutionSet::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const Solution& s : solutions_)
    arr.push_back({{"id", s.id},
                   {"tier", s.tier},
                   {"value", s.value},
                   {"parent", s.parent},
                   {"direction_index", s.direction},
                   {"point", std::vector<double>(s.point.begin(), s.point.end())}});
  return arr.dump(2);
}

void TierConfig::validate() const {
  if (!(step > 0) || eps < 0 || max_evals < 1 || max_tiers < 1 || n_directions < 0 || !(prune_factor > 0) ||
      !(dedup_tol > 0) || iteration_cap_factor < 0)
    throw ParameterError("TierConfig: step, max_evals, max_tiers, prune_factor and dedup_tol must be positive");
}

std::vector<Vec> generate_directions(const Objective& obj, const Vec& x, DirectionStrategy strategy, int n,
                                     std::mt19937_64& rng, const HessianFn& hessian) {
  const Index d = x.size();
  std::vector<Vec> out;
  if (strategy == DirectionStrategy::random) {
    std::normal_distribution<double> normal(0.0, 1.0);
    while (static_cast<int>(out.size()) < n) {
      Vec v(d);
      for (Index i = 0; i < d; ++i) v[i] = normal(rng);
      const double len = v.norm();
      if (len > 1e-12) out.push_back(v / len);
    }
    return out;
  }
  Mat H;
  if (hessian) {
    H = hessian(x);
  } else if (obj.has_hessian()) {
    H = obj.hessian(x);
  } else {
    throw StrategyError("eigenvector directions need a Hessian");
  }
  if (H.rows() != d || H.cols() != d || !H.allFinite()) throw StrategyError("eigenvector directions: bad Hessian");
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (H + H.transpose()));
  for (Index i = 0; i < d; ++i) {
    const Vec v = eig.eigenvectors().col(i);
    out.push_back(v);
    out.push_back(-v);
  }
  return out;
}

std::optional<ExitHit> exit_along(const Objective& obj, const Vec& x, const Vec& d, double step, int max_evals,
                                  bool scale_steps) {
  Vec ray = d;
  if (scale_steps)
    for (Index i = 0; i < x.size(); ++i) ray[i] *= std::max(std::abs(x[i]), 0.1);
  double prev = obj.value(x);
  bool rising = false;
  for (int k = 1; k <= max_evals; ++k) {
    const double cur = obj.value(x + (k * step) * ray);
    if (cur > prev) rising = true;
    if (rising && cur < prev) return ExitHit{Vec(x + ((k - 1) * step) * ray), ray, k};
    prev = cur;
  }
  return std::nullopt;
}

std::optional<Solution> escape_refine(const Objective&, const Vec& exit, const Vec& ray, double eps,
                                      const LocalSolver& solver, const Solution& origin, const SolutionSet& seen,
                                      std::string* reason) {
  auto fail = [&](std::string why) -> std::optional<Solution> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  LocalResult r;
  try {
    r = solver(exit + eps * ray);
  } catch (const Error& e) {
    return fail(fmt::format("{}: {}", e.kind(), e.what()));
  }
  if (!r.converged) return fail("local solver did not converge");
  if (!r.x.allFinite() || !std::isfinite(r.value)) return fail("local solver returned a non-finite point");
  if (seen.metric()(r.x, origin.point) <= seen.dedup_tol()) return fail("duplicate");
  Solution s;
  s.point = r.x;
  s.value = r.value;
  s.tier = origin.tier + 1;
  s.parent = origin.id;
  s.iterations = r.iterations;
  return s;
}

SolutionSet tier_search(const Objective& obj, const Vec& x0, const LocalSolver& solver, const TierConfig& cfg,
                        const HessianFn& hessian, std::vector<Exploration>* log, const Metric& metric) {
  cfg.validate();
  SolutionSet set(cfg.dedup_tol, metric);
  const LocalResult r0 = solver(x0);
  if (!r0.converged) throw NoConvergenceError("tier_search: the starting point did not refine", r0.x);
  Solution root;
  root.point = r0.x;
  root.value = r0.value;
  root.iterations = r0.iterations;
  set.insert(root);
  const double v0 = root.value;
  const double thresh = v0 + (cfg.prune_factor - 1) * std::abs(v0);
  const int n = cfg.n_directions > 0 ? cfg.n_directions : static_cast<int>(x0.size());

  std::vector<size_t> frontier = {0};
  for (int t = 0; t < cfg.max_tiers && !frontier.empty(); ++t) {
    struct Task {
      size_t parent;
      Index dir_index;
      Vec dir;
    };
    std::vector<Task> tasks;
    for (size_t p : frontier) {
      const Solution& s = set.solutions()[p];
      if (t > 0 && s.value > thresh) continue;
      std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(s.id)};
      std::mt19937_64 rng(seq);
      const auto dirs = generate_directions(obj, s.point, cfg.strategy, n, rng, hessian);
      for (size_t k = 0; k < dirs.size(); ++k) tasks.push_back({p, static_cast<Index>(k), dirs[k]});
    }
    struct Outcome {
      std::optional<Solution> sol;
      Exploration rec;
    };
    std::vector<Outcome> results(tasks.size());
    parallel::for_each(static_cast<Index>(tasks.size()), [&](Index i) {
      const Task& task = tasks[static_cast<size_t>(i)];
      const Solution& origin = set.solutions()[task.parent];
      Outcome& out = results[static_cast<size_t>(i)];
      out.rec = {origin.id, task.dir_index, t + 1, 0, ""};
      std::optional<ExitHit> hit;
      try {
        hit = exit_along(obj, origin.point, task.dir, cfg.step, cfg.max_evals, cfg.scale_steps);
      } catch (const Error& e) {
        out.rec.outcome = fmt::format("{}: {}", e.kind(), e.what());
        return;
      }
      if (!hit) {
        out.rec.evals = cfg.max_evals;
        out.rec.outcome = "no_exit";
        return;
      }
      out.rec.evals = hit->evals;
      std::string why;
      out.sol = escape_refine(obj, hit->exit, hit->ray, cfg.effective_eps(), solver, origin, set, &why);
      if (out.sol) out.sol->direction = task.dir_index;
      out.rec.outcome = out.sol ? "new" : why;
    });
    std::vector<size_t> next;
    for (Outcome& o : results) {
      if (o.sol) {
        if (cfg.iteration_cap_factor > 0 && o.sol->iterations > cfg.iteration_cap_factor * set.best().iterations) {
          o.rec.outcome = "pruned_iterations";
        } else if (set.insert(*o.sol)) {
          next.push_back(set.size() - 1);
        } else {
          o.rec.outcome = "duplicate";
        }
      }
      if (log) log->push_back(std::move(o.rec));
    }
    frontier = std::move(next);
  }
  set.canonical_sort();
  return set;
}

}  // namespace ttech::tier

#include "ttech/smoothing.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "ttech/parallel.hpp"
#include "ttech/tiersearch.hpp"

namespace ttech::smoothing {

using gmm::CovKind;
using gmm::GmmParams;

void KernelSpec::validate() const {
  if (!(level >= 0) || !std::isfinite(level)) throw ParameterError("kernel level must be a nonnegative number");
}

Mat convolve_covariance(const Mat& cov, const KernelSpec& kernel) {
  kernel.validate();
  if (kernel.mode == KernelMode::multiplicative) return cov * (1 + kernel.level * kernel.level);
  return cov + kernel.level * kernel.level * Mat::Identity(cov.rows(), cov.cols());
}

GmmParams convolve(const GmmParams& p, const KernelSpec& kernel) {
  kernel.validate();
  if (kernel.level == 0) return p;
  GmmParams q = p;
  for (Mat& c : q.covs) c = convolve_covariance(c, kernel);
  return q;
}

GmmParams deconvolve(const GmmParams& smoothed, const KernelSpec& kernel, const Vec& floor, int* clamps) {
  kernel.validate();
  if (kernel.level == 0) return smoothed;
  const double l2 = kernel.level * kernel.level;
  int hits = 0;
  GmmParams p = smoothed;
  for (Mat& c : p.covs) {
    if (kernel.mode == KernelMode::multiplicative) c /= 1 + l2;
    else c -= l2 * Mat::Identity(c.rows(), c.cols());
    switch (p.kind) {
      case CovKind::spherical: {
        const double f = floor.mean();
        if (c(0, 0) < f) {
          c = f * Mat::Identity(c.rows(), c.cols());
          ++hits;
        }
        break;
      }
      case CovKind::diagonal:
        for (Index j = 0; j < c.rows(); ++j)
          if (c(j, j) < floor[j]) {
            c(j, j) = floor[j];
            ++hits;
          }
        break;
      case CovKind::full: {
        Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (c + c.transpose()));
        Vec ev = eig.eigenvalues();
        const double f = floor.minCoeff();
        bool hit = false;
        for (Index j = 0; j < ev.size(); ++j)
          if (ev[j] < f) {
            ev[j] = f;
            hit = true;
            ++hits;
          }
        if (hit) c = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
        break;
      }
    }
  }
  if (clamps) *clamps += hits;
  return p;
}

double smoothed_log_likelihood(const GmmParams& p, const gmm::Dataset& x, const KernelSpec& kernel) {
  return gmm::log_likelihood(convolve(p, kernel), x);
}

gmm::EmResult smoothed_em(const GmmParams& start, const gmm::Dataset& x, const KernelSpec& kernel,
                          const gmm::EmConfig& cfg) {
  kernel.validate();
  const Vec floor = gmm::variance_floor(x, cfg.floor_scale);
  int clamps = 0;
  const gmm::EmSpace space{
      [&](const GmmParams& p) { return convolve(p, kernel); },
      [&](const GmmParams& p) { return deconvolve(p, kernel, floor, &clamps); },
      [&](const Vec& f) {
        if (kernel.level == 0) return Vec(f);
        const double l2 = kernel.level * kernel.level;
        return Vec(kernel.mode == KernelMode::multiplicative ? Vec(f * (1 + l2)) : Vec(f.array() + l2));
      }};
  gmm::EmResult r = gmm::em_fit_in(start, x, cfg, space);
  r.floor_hits += clamps;
  return r;
}

void Hierarchy::validate() const {
  if (nl < 1 || ns < 1 || !(sfac >= 0)) throw ParameterError("Hierarchy: need nl >= 1, ns >= 1, sfac >= 0");
}

std::vector<double> Hierarchy::levels(const gmm::Dataset& x) const {
  validate();
  const double unit = mode == KernelMode::additive ? std::sqrt(gmm::variance_floor(x, 1.0).mean()) : 1.0;
  std::vector<double> out;
  for (int l = 0; l <= nl; ++l) out.push_back(sfac * unit * static_cast<double>(nl - l) / nl);
  return out;
}

HierarchyResult smooth_em_hierarchy(const GmmParams& start, const gmm::Dataset& x, const Hierarchy& h,
                                    const gmm::EmConfig& cfg, int global_starts, std::uint64_t seed) {
  h.validate();
  if (global_starts < 1) throw ParameterError("smooth_em_hierarchy: global_starts must be positive");
  HierarchyResult res;
  res.levels = h.levels(x);
  const KernelSpec top{h.mode, res.levels.front()};

  std::vector<GmmParams> starts{start};
  std::mt19937_64 rng(seed);
  for (int i = 1; i < global_starts; ++i)
    starts.push_back(gmm::random_start(x, start.k(), start.kind, rng, gmm::StartKind::data_points));

  std::vector<std::optional<gmm::EmResult>> fits(starts.size());
  parallel::for_each(static_cast<Index>(starts.size()), [&](Index i) {
    try {
      fits[static_cast<size_t>(i)] = smoothed_em(starts[static_cast<size_t>(i)], x, top, cfg);
    } catch (const EmptyComponentError&) {
    }
  });
  std::vector<size_t> order;
  for (size_t i = 0; i < fits.size(); ++i) {
    if (fits[i]) order.push_back(i);
    else ++res.failed_starts;
  }
  if (order.empty()) throw EmptyComponentError("smooth_em_hierarchy: every global start emptied a component", -1, -1);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return fits[a]->loglik.back() > fits[b]->loglik.back(); });
  order.resize(std::min(order.size(), static_cast<size_t>(h.ns)));

  res.traces.resize(order.size());
  parallel::for_each(static_cast<Index>(order.size()), [&](Index t) {
    Trace& tr = res.traces[static_cast<size_t>(t)];
    const gmm::EmResult& f = *fits[order[static_cast<size_t>(t)]];
    tr.params.push_back(f.params);
    tr.smoothed_loglik.push_back(f.loglik.back());
    for (size_t l = 1; l < res.levels.size(); ++l) {
      const gmm::EmResult r = smoothed_em(tr.params.back(), x, KernelSpec{h.mode, res.levels[l]}, cfg);
      tr.params.push_back(r.params);
      tr.smoothed_loglik.push_back(r.loglik.back());
    }
    tr.loglik = gmm::log_likelihood(tr.params.back(), x);
  });
  size_t best = 0;
  for (size_t t = 1; t < res.traces.size(); ++t)
    if (res.traces[t].loglik > res.traces[best].loglik) best = t;
  res.best = res.traces[best].params.back();
  res.loglik = res.traces[best].loglik;
  return res;
}

CensusCount count_local_maxima(const gmm::Dataset& x, Index k, CovKind kind, int n_starts, const KernelSpec& kernel,
                               double dedup_tol, std::uint64_t seed, const gmm::EmConfig& cfg) {
  if (n_starts < 1) throw ParameterError("count_local_maxima: n_starts must be positive");
  kernel.validate();
  std::mt19937_64 rng(seed);
  std::vector<GmmParams> starts;
  for (int i = 0; i < n_starts; ++i) starts.push_back(gmm::random_start(x, k, kind, rng, gmm::StartKind::data_points));
  std::vector<std::optional<gmm::EmResult>> fits(starts.size());
  parallel::for_each(static_cast<Index>(starts.size()), [&](Index i) {
    try {
      fits[static_cast<size_t>(i)] = smoothed_em(starts[static_cast<size_t>(i)], x, kernel, cfg);
    } catch (const EmptyComponentError&) {
    }
  });
  CensusCount out;
  tier::SolutionSet seen(dedup_tol);
  for (const auto& f : fits) {
    if (!f) {
      ++out.failed;
      continue;
    }
    tier::Solution s;
    s.point = gmm::to_free(f->params.canonical());
    s.value = -f->loglik.back();
    seen.insert(std::move(s));
  }
  out.unique = static_cast<int>(seen.size());
  return out;
}

std::vector<CensusRow> census(const gmm::Dataset& x, Index k, CovKind kind, const std::vector<double>& levels,
                              int n_starts, KernelMode mode, double dedup_tol, std::uint64_t seed,
                              const gmm::EmConfig& cfg) {
  std::vector<CensusRow> rows;
  for (double l : levels) rows.push_back({l, count_local_maxima(x, k, kind, n_starts, {mode, l}, dedup_tol, seed, cfg)});
  return rows;
}

std::string census_csv(const std::vector<CensusRow>& rows) {
  std::string out = "level,unique_maxima_count\n";
  for (const auto& r : rows) out += fmt::format("{:.17g},{}\n", r.level, r.count.unique);
  return out;
}

}  // namespace ttech::smoothing

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttech/gmm.hpp"

namespace ttech::smoothing {

enum class KernelMode { additive, multiplicative };

/// additive: every variance grows by level^2. multiplicative: variances scale by
/// (1 + level^2). Level 0 is no smoothing.
struct KernelSpec {
  KernelMode mode = KernelMode::additive;
  double level = 0;

  void validate() const;
};

/// Convolution of one component with a zero-mean Gaussian kernel. The mean is
/// unchanged and the covariance widens.
Mat convolve_covariance(const Mat& cov, const KernelSpec& kernel);
gmm::GmmParams convolve(const gmm::GmmParams& p, const KernelSpec& kernel);

/// Inverse of convolve. Variances that would fall below `floor` are clamped; the
/// number of clamped entries is added to *clamps.
gmm::GmmParams deconvolve(const gmm::GmmParams& smoothed, const KernelSpec& kernel, const Vec& floor,
                          int* clamps = nullptr);

double smoothed_log_likelihood(const gmm::GmmParams& p, const gmm::Dataset& x, const KernelSpec& kernel);

/// EM on the smoothed surface. Iterates live in smoothed space (loglik holds the
/// smoothed values); the returned params are de-smoothed. floor_hits counts both
/// smoothed-space floor activations and recovery clamps.
gmm::EmResult smoothed_em(const gmm::GmmParams& start, const gmm::Dataset& x, const KernelSpec& kernel,
                          const gmm::EmConfig& cfg = {});

struct Hierarchy {
  int nl = 4;         // levels below the top
  double sfac = 1.0;  // top-level kernel width, in units of the data standard deviation (additive)
  int ns = 3;         // solutions traced
  KernelMode mode = KernelMode::additive;

  void validate() const;
  /// Kernel levels from the top (sfac) down to 0, nl + 1 entries.
  std::vector<double> levels(const gmm::Dataset& x) const;
};

struct Trace {
  std::vector<gmm::GmmParams> params;  // one per level, top first
  std::vector<double> smoothed_loglik;
  double loglik = 0;  // on the original surface
};

struct HierarchyResult {
  gmm::GmmParams best;
  double loglik = 0;
  std::vector<double> levels;
  std::vector<Trace> traces;  // ns entries
  int failed_starts = 0;
};

/// Smooth-EM: global_starts starts (start first, the rest drawn from the data)
/// refined on the top surface, the ns best traced level by level down to the
/// original surface.
HierarchyResult smooth_em_hierarchy(const gmm::GmmParams& start, const gmm::Dataset& x, const Hierarchy& h,
                                    const gmm::EmConfig& cfg, int global_starts, std::uint64_t seed);

struct CensusCount {
  int unique = 0;
  int failed = 0;  // runs that raised (empty component)
};

/// Runs smoothed_em from n_starts seeded data-point starts and counts distinct
/// results under the relative parameter distance in free coordinates.
CensusCount count_local_maxima(const gmm::Dataset& x, Index k, gmm::CovKind kind, int n_starts,
                               const KernelSpec& kernel, double dedup_tol, std::uint64_t seed,
                               const gmm::EmConfig& cfg = {});

struct CensusRow {
  double level;
  CensusCount count;
};

std::vector<CensusRow> census(const gmm::Dataset& x, Index k, gmm::CovKind kind, const std::vector<double>& levels,
                              int n_starts, KernelMode mode, double dedup_tol, std::uint64_t seed,
                              const gmm::EmConfig& cfg = {});

/// level,unique_maxima_count
std::string census_csv(const std::vector<CensusRow>& rows);

}  // namespace ttech::smoothing

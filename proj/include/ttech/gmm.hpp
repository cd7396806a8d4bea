#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ttech/core.hpp"
#include "ttech/dynsys.hpp"
#include "ttech/tiersearch.hpp"

namespace ttech::gmm {

enum class CovKind { spherical, diagonal, full };

const char* to_string(CovKind k);
CovKind cov_kind_from_string(const std::string& s);

/// Mixture parameters. Every covariance is stored as a d x d matrix; spherical
/// ones are s2 * I and diagonal ones are diagonal.
struct GmmParams {
  Vec weights;           // k
  Mat means;             // k x d
  std::vector<Mat> covs;  // k matrices, d x d
  CovKind kind = CovKind::diagonal;

  Index k() const { return weights.size(); }
  Index d() const { return means.cols(); }

  /// Throws ParameterError unless weights lie on the simplex and covariances
  /// match the kind and are positive definite.
  void validate() const;

  /// Components reordered by mean (lexicographic); the order-independent form.
  GmmParams canonical() const;
};

GmmParams make_params(const Vec& weights, const Mat& means, const std::vector<Mat>& covs, CovKind kind);

using Dataset = Mat;  // n x d, one sample per row

// ---- likelihood -----------------------------------------------------------------

/// log N(x | mu_i, Sigma_i) for every sample and component, n x k.
Mat log_densities(const GmmParams& p, const Dataset& x);

double log_likelihood(const GmmParams& p, const Dataset& x);
double log_likelihood_serial(const GmmParams& p, const Dataset& x);

struct EStep {
  Mat resp;  // n x k, rows sum to one
  double loglik = 0;
};

EStep e_step(const GmmParams& p, const Dataset& x);
EStep e_step_serial(const GmmParams& p, const Dataset& x);

/// Per-dimension lower bound on variances (spherical uses the mean, full covariances
/// clamp eigenvalues at the minimum).
Vec variance_floor(const Dataset& x, double scale = 1e-6);

/// Closed-form updates. Throws EmptyComponentError (iteration -1) when a component's
/// total responsibility is below 1e-12.
GmmParams m_step(const Mat& resp, const Dataset& x, CovKind kind, const Vec& floor);
GmmParams m_step_serial(const Mat& resp, const Dataset& x, CovKind kind, const Vec& floor);

// ---- EM -------------------------------------------------------------------------

struct EmConfig {
  double tol = 1e-6;  // absolute change in log-likelihood
  int max_iter = 1000;
  double floor_scale = 1e-6;  // variance floor relative to the data variance
  bool reseed_empty = false;  // otherwise an empty component is an error
  std::uint64_t seed = 0;     // for reseeding

  void validate() const;
};

struct EmResult {
  GmmParams params;
  std::vector<double> loglik;  // L of the start and of every iterate
  int iterations = 0;
  bool converged = false;
  int floor_hits = 0;  // variance entries clamped to the floor
  int reseeds = 0;
};

EmResult em_fit(const GmmParams& start, const Dataset& x, const EmConfig& cfg = {});

/// EM on transformed parameters: the E-step uses to_work(theta), the M-step result
/// (with floors given in working space) is mapped back by from_work. The identity
/// maps give em_fit.
struct EmSpace {
  std::function<GmmParams(const GmmParams&)> to_work;
  std::function<GmmParams(const GmmParams&)> from_work;
  std::function<Vec(const Vec&)> work_floor;
};
EmResult em_fit_in(const GmmParams& start, const Dataset& x, const EmConfig& cfg, const EmSpace& space);

// ---- gradient ----------------------------------------------------------------------

/// Raw layout: means (component-major), then scales (sigma per component for
/// spherical, sigma per dimension for diagonal, lower Cholesky entries row by row
/// for full), then alpha_1 .. alpha_{k-1}; alpha_k = 1 - sum of the others.
Index raw_size(Index k, Index d, CovKind kind);
Vec pack_raw(const GmmParams& p);
GmmParams unpack_raw(const Vec& v, Index k, Index d, CovKind kind);

/// Gradient of -log_likelihood in the raw layout.
Vec nll_gradient(const GmmParams& p, const Dataset& x);

/// Unconstrained coordinates: means, log sigma (log of the Cholesky diagonal for
/// full, other Cholesky entries as is), additive log-ratio weights log(alpha_i/alpha_k).
Index free_size(Index k, Index d, CovKind kind);
Vec to_free(const GmmParams& p);
GmmParams from_free(const Vec& z, Index k, Index d, CovKind kind);

/// -log_likelihood as a function of the unconstrained coordinates.
Objective nll_objective(const Dataset& x, Index k, CovKind kind);

// ---- TRUST-TECH EM --------------------------------------------------------------

struct TtEmResult {
  GmmParams params;  // best of the solution set
  double loglik = 0;
  double em_loglik = 0;  // plain EM from the same start (the tier-0 solution)
  tier::SolutionSet solutions;
  std::vector<tier::Exploration> log;
};

tier::TierConfig default_tt_config();

TtEmResult tt_em(const GmmParams& start, const Dataset& x, const EmConfig& em = {},
                 const tier::TierConfig& tier_cfg = default_tt_config());

// ---- data --------------------------------------------------------------------------

struct Synthetic {
  Dataset data;
  GmmParams truth;
  std::vector<int> labels;
};

/// spherical5, elliptical3 or overlap4. n <= 0 selects the default size.
Synthetic gen_synthetic(const std::string& id, int n, std::uint64_t seed);
Dataset sample(const GmmParams& p, int n, std::mt19937_64& rng, std::vector<int>* labels = nullptr);

enum class StartKind { uniform_box, data_points };

/// Random initial parameters: means uniform in the data bounding box or drawn from
/// the samples, variances data variance x U(0.1, 1), uniform weights.
GmmParams random_start(const Dataset& x, Index k, CovKind kind, std::mt19937_64& rng,
                       StartKind how = StartKind::uniform_box);

// ---- I/O ----------------------------------------------------------------------------

std::string params_to_json(const GmmParams& p);
GmmParams params_from_json(const std::string& text);
std::string dataset_to_csv(const Dataset& x);
Dataset dataset_from_csv(const std::string& text);

}  // namespace ttech::gmm

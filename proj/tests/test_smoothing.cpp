#include <doctest.h>

#include "ttech/smoothing.hpp"

using namespace ttech;
using namespace ttech::smoothing;
using gmm::CovKind;
using gmm::GmmParams;

namespace {

constexpr double kPi = 3.14159265358979323846;

double normal1(double x, double mu, double s2) { return std::exp(-0.5 * (x - mu) * (x - mu) / s2) / std::sqrt(2 * kPi * s2); }

double normal2(const Vec& x, const Vec& mu, const Mat& c) {
  const Vec d = x - mu;
  return std::exp(-0.5 * d.dot(c.inverse() * d)) / (2 * kPi * std::sqrt(c.determinant()));
}

GmmParams one_d(double mu, double s2) {
  return gmm::make_params(Vec::Ones(1), Mat::Constant(1, 1, mu), {Mat::Constant(1, 1, s2)}, CovKind::spherical);
}

}  // namespace

TEST_CASE("convolve_component widens the covariance") {
  const GmmParams p = one_d(0.5, 1.0);
  CHECK(convolve(p, {KernelMode::additive, 0}).covs[0](0, 0) == 1.0);
  CHECK(convolve(p, {KernelMode::additive, 1}).covs[0](0, 0) == doctest::Approx(2.0));
  CHECK(convolve(p, {KernelMode::additive, 1}).means(0, 0) == 0.5);
  CHECK(convolve(p, {KernelMode::multiplicative, 0.5}).covs[0](0, 0) == doctest::Approx(1.25));
  const Mat full = (Mat(2, 2) << 2, 0.5, 0.5, 1).finished();
  CHECK((convolve_covariance(full, {KernelMode::additive, 0.3}) - (full + 0.09 * Mat::Identity(2, 2))).norm() < 1e-15);
  CHECK_THROWS_AS(convolve(p, {KernelMode::additive, -0.1}), ParameterError);
}

TEST_CASE("convolved density matches a numeric convolution") {
  SUBCASE("one dimension") {
    const double mu = 0.4, s2 = 0.3, s0 = 0.5;
    const double sm = convolve(one_d(mu, s2), {KernelMode::additive, s0}).covs[0](0, 0);
    const int m = 4000;
    const double lo = -10 * s0, h = 20 * s0 / m;
    double worst = 0;
    for (double x = -3; x <= 3; x += 0.05) {
      double acc = 0;
      for (int i = 0; i <= m; ++i) {
        const double t = lo + i * h;
        const double w = (i == 0 || i == m) ? 0.5 : 1.0;
        acc += w * normal1(x - t, mu, s2) * normal1(t, 0, s0 * s0);
      }
      worst = std::max(worst, std::abs(acc * h - normal1(x, mu, sm)));
    }
    CHECK(worst < 1e-4);
  }
  SUBCASE("two dimensions, full covariance") {
    const Vec mu = (Vec(2) << 0.2, -0.1).finished();
    const Mat c = (Mat(2, 2) << 0.6, 0.25, 0.25, 0.4).finished();
    const double s0 = 0.4;
    const Mat cs = convolve_covariance(c, {KernelMode::additive, s0});
    const int m = 160;
    const double lo = -6 * s0, h = 12 * s0 / m;
    double worst = 0;
    for (double a = -1.5; a <= 1.5; a += 0.5)
      for (double b = -1.5; b <= 1.5; b += 0.5) {
        const Vec x = (Vec(2) << a, b).finished();
        double acc = 0;
        for (int i = 0; i <= m; ++i)
          for (int j = 0; j <= m; ++j) {
            const Vec t = (Vec(2) << lo + i * h, lo + j * h).finished();
            const double w = ((i == 0 || i == m) ? 0.5 : 1.0) * ((j == 0 || j == m) ? 0.5 : 1.0);
            acc += w * normal2(x - t, mu, c) * normal2(t, Vec::Zero(2), s0 * s0 * Mat::Identity(2, 2));
          }
        worst = std::max(worst, std::abs(acc * h * h - normal2(x, mu, cs)));
      }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("smoothed log-likelihood") {
  const gmm::Synthetic s = gmm::gen_synthetic("spherical5", 0, 1);
  CHECK(smoothed_log_likelihood(s.truth, s.data, {KernelMode::additive, 0}) == gmm::log_likelihood(s.truth, s.data));
  const KernelSpec k{KernelMode::additive, 0.02};
  CHECK(smoothed_log_likelihood(s.truth, s.data, k) == gmm::log_likelihood(convolve(s.truth, k), s.data));
  double prev = gmm::log_likelihood(s.truth, s.data);
  for (double l : {0.005, 0.01, 0.02, 0.05}) {
    const double v = smoothed_log_likelihood(s.truth, s.data, {KernelMode::additive, l});
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("deconvolve inverts convolve and respects the floor") {
  const gmm::Synthetic s = gmm::gen_synthetic("overlap4", 0, 1);
  const Vec floor = gmm::variance_floor(s.data);
  for (KernelMode mode : {KernelMode::additive, KernelMode::multiplicative}) {
    const KernelSpec k{mode, 0.7};
    int clamps = 0;
    const GmmParams back = deconvolve(convolve(s.truth, k), k, floor, &clamps);
    CHECK(clamps == 0);
    for (Index i = 0; i < 4; ++i) CHECK((back.covs[i] - s.truth.covs[i]).norm() < 1e-12);
  }
  // A smoothed component narrower than the kernel clamps to the floor.
  const GmmParams narrow = one_d(0, 0.01);
  int clamps = 0;
  const GmmParams r = deconvolve(narrow, {KernelMode::additive, 0.2}, Vec::Constant(1, 1e-3), &clamps);
  CHECK(clamps == 1);
  CHECK(r.covs[0](0, 0) == 1e-3);
}

TEST_CASE("smoothed EM at level 0 is plain EM") {
  for (const char* id : {"spherical5", "elliptical3", "overlap4"}) {
    const gmm::Synthetic s = gmm::gen_synthetic(id, 0, 2);
    std::mt19937_64 rng(4);
    const GmmParams st = gmm::random_start(s.data, s.truth.k(), s.truth.kind, rng, gmm::StartKind::data_points);
    gmm::EmConfig cfg;
    cfg.reseed_empty = true;
    const gmm::EmResult a = smoothed_em(st, s.data, {KernelMode::additive, 0}, cfg);
    const gmm::EmResult b = gmm::em_fit(st, s.data, cfg);
    CHECK(a.loglik == b.loglik);
    CHECK(a.params.means == b.params.means);
    CHECK(a.params.weights == b.params.weights);
  }
}

TEST_CASE("smoothed EM never decreases the smoothed likelihood") {
  const gmm::Synthetic sph = gmm::gen_synthetic("spherical5", 0, 3);
  const gmm::Synthetic ell = gmm::gen_synthetic("elliptical3", 300, 3);
  std::mt19937_64 rng(12);
  const double levels[] = {0.005, 0.02, 0.1, 0.5};
  for (int t = 0; t < 200; ++t) {
    const bool small = t % 2 == 0;
    const gmm::Synthetic& s = small ? sph : ell;
    const KernelSpec k{t % 4 == 1 ? KernelMode::multiplicative : KernelMode::additive, levels[t % 4] * (small ? 1 : 10)};
    const GmmParams st = gmm::random_start(s.data, s.truth.k(), s.truth.kind, rng, gmm::StartKind::data_points);
    gmm::EmConfig cfg;
    cfg.reseed_empty = true;
    const gmm::EmResult r = smoothed_em(st, s.data, k, cfg);
    for (size_t i = 1; i < r.loglik.size(); ++i)
      REQUIRE(r.loglik[i] >= r.loglik[i - 1] - 1e-9 * std::abs(r.loglik[i - 1]));
    const Vec floor = gmm::variance_floor(s.data);
    for (const Mat& c : r.params.covs) REQUIRE(c.diagonal().minCoeff() >= floor.minCoeff() * (1 - 1e-12));
  }
}

TEST_CASE("lightly smoothed EM keeps the well-separated spherical5 means") {
  const gmm::Synthetic s = gmm::gen_synthetic("spherical5", 0, 5);
  const gmm::EmResult plain = gmm::em_fit(s.truth, s.data);
  const gmm::EmResult sm = smoothed_em(s.truth, s.data, {KernelMode::additive, 0.01});
  CHECK((plain.params.canonical().means - sm.params.canonical().means).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("hierarchy levels and contract") {
  const gmm::Synthetic s = gmm::gen_synthetic("elliptical3", 0, 148);
  Hierarchy h;
  h.nl = 4;
  h.sfac = 0.5;
  const std::vector<double> lv = h.levels(s.data);
  REQUIRE(lv.size() == 5);
  CHECK(lv.back() == 0);
  CHECK(lv.front() == doctest::Approx(0.5 * std::sqrt(gmm::variance_floor(s.data, 1.0).mean())));
  for (size_t i = 1; i < lv.size(); ++i) CHECK(lv[i] < lv[i - 1]);

  std::mt19937_64 rng(1);
  const GmmParams st = gmm::random_start(s.data, 3, CovKind::diagonal, rng);
  h.ns = 3;
  const HierarchyResult r = smooth_em_hierarchy(st, s.data, h, {}, 6, 9);
  CHECK(r.traces.size() == 3);
  for (const Trace& t : r.traces) {
    CHECK(t.params.size() == 5);
    CHECK(r.loglik >= t.loglik);
    for (const GmmParams& p : t.params) CHECK_NOTHROW(p.validate());
  }
  CHECK(r.loglik == doctest::Approx(gmm::log_likelihood(r.best, s.data)));

  Hierarchy bad;
  bad.ns = 0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("a degenerate hierarchy is multi-start EM") {
  const gmm::Synthetic s = gmm::gen_synthetic("elliptical3", 0, 148);
  std::mt19937_64 rng(2);
  const GmmParams st = gmm::random_start(s.data, 3, CovKind::diagonal, rng);
  Hierarchy h;
  h.nl = 1;
  h.sfac = 0;
  h.ns = 5;
  const HierarchyResult r = smooth_em_hierarchy(st, s.data, h, {}, 5, 21);

  std::mt19937_64 srng(21);
  double best = gmm::em_fit(st, s.data).loglik.back();
  for (int i = 1; i < 5; ++i) {
    const GmmParams p = gmm::random_start(s.data, 3, CovKind::diagonal, srng, gmm::StartKind::data_points);
    best = std::max(best, gmm::em_fit(p, s.data).loglik.back());
  }
  CHECK(r.loglik == doctest::Approx(best).epsilon(1e-6));
}

TEST_CASE("the hierarchy beats single random-start EM on average") {
  const gmm::Synthetic s = gmm::gen_synthetic("elliptical3", 0, 148);
  Hierarchy h;
  h.nl = 2;
  h.sfac = 0.5;
  h.ns = 2;
  double plain = 0, smooth = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(t));
    const GmmParams st = gmm::random_start(s.data, 3, CovKind::diagonal, rng);
    gmm::EmConfig cfg;
    cfg.reseed_empty = true;
    plain += gmm::em_fit(st, s.data, cfg).loglik.back();
    smooth += smooth_em_hierarchy(st, s.data, h, cfg, 3, static_cast<std::uint64_t>(t)).loglik;
  }
  CHECK(smooth / trials >= plain / trials);
}

TEST_CASE("census") {
  const gmm::Synthetic s = gmm::gen_synthetic("elliptical3", 0, 148);
  CHECK(count_local_maxima(s.data, 3, CovKind::diagonal, 1, {}, 1e-2, 3).unique == 1);
  CHECK_THROWS_AS(count_local_maxima(s.data, 3, CovKind::diagonal, 0, {}, 1e-2, 3), ParameterError);
  const auto rows = census(s.data, 3, CovKind::diagonal, {0.0, 0.5}, 20, KernelMode::additive, 1e-2, 3);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].count.unique >= 1);
  CHECK(rows[0].count.unique + rows[0].count.failed <= 20);
  const std::string csv = census_csv(rows);
  CHECK(csv.rfind("level,unique_maxima_count\n0,", 0) == 0);
  // Same seed, same answer.
  CHECK(count_local_maxima(s.data, 3, CovKind::diagonal, 20, {}, 1e-2, 3).unique == rows[0].count.unique);
}

#include <doctest.h>

#include "oracles.hpp"
#include "ttech/saddle.hpp"
#include "ttech/solvers.hpp"
#include "ttech/surfaces.hpp"

using namespace ttech;
using oracle::v2;

TEST_CASE("golden_section_peak") {
  const double t = golden_section_peak([](double x) { return -(x - 0.5) * (x - 0.5); }, 0, 1, 1e-6);
  CHECK(std::abs(t - 0.5) <= 1e-6);
  // A flat peak limits resolution to about sqrt(machine epsilon).
  const double s = golden_section_peak([](double x) { return std::sin(M_PI * x); }, 0, 1, 1e-6);
  CHECK(std::abs(s - 0.5) <= 1e-6);
  // Reversed bracket.
  CHECK(std::abs(golden_section_peak([](double x) { return -(x - 0.3) * (x - 0.3); }, 1, 0, 1e-7) - 0.3) <= 1e-7);
  // Degenerate bracket returns the endpoint.
  CHECK(golden_section_peak([](double x) { return x; }, 0.25, 0.25, 1e-6) == 0.25);
  CHECK_THROWS_AS(golden_section_peak([](double) { return 0.0; }, 0, 1, 0), ParameterError);
}

TEST_CASE("golden_section_peak shrinks the bracket by 1 - r per iteration") {
  int evals = 0;
  golden_section_peak([&](double x) { ++evals; return -x * x; }, -1, 1, 1e-6);
  // Two initial evaluations plus one per iteration; iterations = ceil(log(eps/2) / log(1 - r)).
  const int iters = static_cast<int>(std::ceil(std::log(1e-6 / 2) / std::log(1 - kGoldenR)));
  CHECK(std::abs(evals - (iters + 2)) <= 1);
}

TEST_CASE("golden section on the Muller-Brown A-B segment") {
  const Objective mb = surfaces::muller_brown();
  const Vec A = v2(-0.558, 1.442), B = v2(-0.05, 0.467);
  const Vec d = (B - A) / 10.0;
  int i = 1;
  double prev = mb.value(A), cur = mb.value(A + d);
  while (cur > prev) {
    prev = cur;
    cur = mb.value(A + (++i) * d);
  }
  const double t = golden_section_peak([&](double s) { return mb.value(A + s * d); }, i - 2, i, 1e-8);
  const Vec p = A + t * d;
  CHECK(std::abs(p[0] + 0.313) < 1e-2);
  CHECK(std::abs(p[1] - 0.971) < 1e-2);
}

TEST_CASE("newton_critical") {
  Objective q("quad", 2, [](const Vec& x) { return x[0] * x[0] + 3 * x[1] * x[1] + x[0] * x[1] - x[0]; },
              [](const Vec& x) { return v2(2 * x[0] + x[1] - 1, 6 * x[1] + x[0]); },
              [](const Vec&) { return Mat((Mat(2, 2) << 2, 1, 1, 6).finished()); });
  NewtonOptions o;
  o.tol = 1e-12;
  const NewtonResult r = newton_critical(q, v2(5, -7), o);
  CHECK(r.iterations == 1);
  CHECK(r.grad_norm < 1e-12);

  const Objective mb = surfaces::muller_brown();
  const Vec d2 = newton_critical(mb, v2(0.218, 0.292), 1e-10, 50);
  CHECK((d2 - v2(0.212, 0.293)).norm() < 1e-3);

  Objective flat("flat", 1, [](const Vec& x) { return x[0]; }, [](const Vec&) { return Vec::Ones(1); },
                 [](const Vec&) { return Mat::Zero(1, 1); });
  CHECK_THROWS_AS(newton_critical(flat, Vec::Zero(1), 1e-8, 10), SingularityError);

  Objective slow("quartic", 1, [](const Vec& x) { return std::pow(x[0], 4); },
                 [](const Vec& x) { return Vec::Constant(1, 4 * std::pow(x[0], 3)); },
                 [](const Vec& x) { return Mat::Constant(1, 1, 12 * x[0] * x[0]); });
  try {
    newton_critical(slow, Vec::Constant(1, 1.0), 1e-14, 3);
    FAIL("expected NoConvergenceError");
  } catch (const NoConvergenceError& e) {
    CHECK(e.last_iterate.size() == 1);
    CHECK(e.last_iterate[0] < 1.0);
  }
}

TEST_CASE("newton_critical never returns a non-critical point") {
  const Objective mb = surfaces::muller_brown();
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    const Vec x0 = oracle::uniform_box(rng, v2(-1.5, -0.5), v2(1.5, 2.0));
    try {
      const Vec x = newton_critical(mb, x0, 1e-9, 60);
      CHECK(grad_norm(mb, x) < 1e-9);
    } catch (const Error&) {
    }
  }
}

TEST_CASE("levenberg_marquardt on linear least squares") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0, 1);
  Mat X(20, 3);
  Vec y(20);
  for (Index i = 0; i < 20; ++i) {
    for (Index j = 0; j < 3; ++j) X(i, j) = n(rng);
    y[i] = n(rng);
  }
  LmConfig cfg;
  cfg.mu0 = 1e-12;
  cfg.check_jacobian = true;
  const LmResult r = levenberg_marquardt([&](const Vec& w) { return Vec(X * w - y); },
                                         [&](const Vec&) { return X; }, Vec::Zero(3), cfg);
  const Vec exact = X.colPivHouseholderQr().solve(y);
  CHECK((r.w - exact).norm() < 1e-8);
  CHECK(r.cost_history.size() <= 3);
}

TEST_CASE("levenberg_marquardt on Rosenbrock residuals") {
  auto res = [](const Vec& w) { return v2(1 - w[0], 10 * (w[1] - w[0] * w[0])); };
  auto jac = [](const Vec& w) { return Mat((Mat(2, 2) << -1, 0, -20 * w[0], 10).finished()); };
  LmConfig cfg;
  cfg.tol_grad = 1e-14;
  const LmResult r = levenberg_marquardt(res, jac, v2(-1.2, 1), cfg);
  CHECK((r.w - v2(1, 1)).norm() < 1e-6);
}

TEST_CASE("levenberg_marquardt accepted costs are monotone") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    Mat X(8, 2);
    Vec y(8);
    for (Index i = 0; i < 8; ++i) {
      X(i, 0) = n(rng);
      X(i, 1) = n(rng);
      y[i] = n(rng);
    }
    auto res = [&](const Vec& w) { return Vec((X * w).array().tanh().matrix() - y); };
    auto jac = [&](const Vec& w) {
      const Vec z = X * w;
      Mat J = X;
      for (Index i = 0; i < 8; ++i) J.row(i) *= 1 - std::tanh(z[i]) * std::tanh(z[i]);
      return J;
    };
    const LmResult r = levenberg_marquardt(res, jac, v2(n(rng), n(rng)));
    for (size_t k = 1; k < r.cost_history.size(); ++k) REQUIRE(r.cost_history[k] <= r.cost_history[k - 1]);
  }
}

TEST_CASE("levenberg_marquardt configuration and Jacobian check") {
  LmConfig bad;
  bad.mu_scale = 1.0;
  auto res = [](const Vec& w) { return w; };
  auto jac = [](const Vec& w) { return Mat(Mat::Identity(w.size(), w.size())); };
  CHECK_THROWS_AS(levenberg_marquardt(res, jac, Vec::Ones(2), bad), ParameterError);
  LmConfig chk;
  chk.check_jacobian = true;
  auto wrong = [](const Vec& w) { return Mat(2 * Mat::Identity(w.size(), w.size())); };
  CHECK_THROWS_AS(levenberg_marquardt(res, wrong, Vec::Ones(2), chk), ParameterError);
}

TEST_CASE("lbfgs_minimize") {
  const Objective mb = surfaces::muller_brown();
  const LocalResult r = lbfgs_minimize(mb, v2(-0.4, 1.2));
  CHECK(r.converged);
  CHECK((r.x - v2(-0.558, 1.442)).norm() < 2e-3);
  Objective rosen("rosen", 2, [](const Vec& w) { return std::pow(1 - w[0], 2) + 100 * std::pow(w[1] - w[0] * w[0], 2); },
                  [](const Vec& w) {
                    return v2(-2 * (1 - w[0]) - 400 * w[0] * (w[1] - w[0] * w[0]), 200 * (w[1] - w[0] * w[0]));
                  });
  const LocalResult q = lbfgs_minimize(rosen, v2(-1.2, 1));
  CHECK(q.converged);
  CHECK((q.x - v2(1, 1)).norm() < 1e-6);
}

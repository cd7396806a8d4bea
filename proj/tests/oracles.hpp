#pragma once

// Test-side reference computations, written independently of the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Vec central_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double hi = h * std::max(1.0, std::abs(x[i]));
    Vec p = x, m = x;
    p[i] += hi;
    m[i] -= hi;
    g[i] = (f(p) - f(m)) / (2 * hi);
  }
  return g;
}

inline Mat central_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  const Vec f0 = f(x);
  Mat J(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double hi = h * std::max(1.0, std::abs(x[i]));
    Vec p = x, m = x;
    p[i] += hi;
    m[i] -= hi;
    J.col(i) = (f(p) - f(m)) / (2 * hi);
  }
  return J;
}

/// |a - b| / max(|b|, 1)
inline double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1.0); }
inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1.0); }

inline Vec uniform_box(std::mt19937_64& rng, const Vec& lo, const Vec& hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec x(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * u(rng);
  return x;
}

inline Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }
inline Vec v3(double a, double b, double c) { return (Vec(3) << a, b, c).finished(); }

}  // namespace oracle

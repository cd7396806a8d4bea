#include "ttech/dynsys.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace ttech {

Objective::Objective(std::string name, Index dim, ValueFn value, GradFn grad, HessFn hess)
    : name_(std::move(name)), dim_(dim), value_(std::move(value)), grad_(std::move(grad)), hess_(std::move(hess)) {
  if (dim_ <= 0) throw ParameterError("objective dimension must be positive");
}

void Objective::check_dim(const Vec& x) const {
  if (x.size() != dim_)
    throw ParameterError(fmt::format("{}: point has dimension {}, expected {}", name_, x.size(), dim_));
}

double Objective::value(const Vec& x) const {
  check_dim(x);
  return value_(x);
}

Vec Objective::gradient(const Vec& x) const {
  check_dim(x);
  Vec g = grad_(x);
  if (!g.allFinite()) throw EvaluationError(fmt::format("{}: non-finite gradient", name_));
  return g;
}

Mat Objective::hessian(const Vec& x) const {
  check_dim(x);
  if (!hess_) throw StrategyError(fmt::format("{}: no analytic Hessian", name_));
  return hess_(x);
}

Objective Objective::counted(std::shared_ptr<EvalCounter> counter) const {
  Objective out = *this;
  auto v = value_;
  auto g = grad_;
  out.value_ = [v, counter](const Vec& x) {
    ++counter->values;
    return v(x);
  };
  out.grad_ = [g, counter](const Vec& x) {
    ++counter->gradients;
    return g(x);
  };
  if (hess_) {
    auto h = hess_;
    out.hess_ = [h, counter](const Vec& x) {
      ++counter->hessians;
      return h(x);
    };
  }
  return out;
}

Objective Objective::without_hessian() const {
  Objective out = *this;
  out.hess_ = {};
  return out;
}

const char* to_string(CriticalKind k) {
  switch (k) {
    case CriticalKind::stable: return "stable";
    case CriticalKind::saddle: return "saddle";
    case CriticalKind::type_k: return "type_k";
    case CriticalKind::source: return "source";
  }
  return "?";
}

Vec vector_field(const Objective& obj, const Vec& x) {
  if (!x.allFinite()) throw EvaluationError("vector_field: non-finite point");
  return -obj.gradient(x);
}

Vec euler_step(const Objective& obj, const Vec& x, double dt) {
  if (!(dt > 0)) throw ParameterError("euler_step: dt must be positive");
  Vec next = x - obj.gradient(x) * dt;
  for (Index i = 0; i < next.size(); ++i)
    if (!std::isfinite(next[i])) throw StepError(fmt::format("euler_step: coordinate {} became non-finite", i), i);
  return next;
}

Vec integrate(const Objective& obj, const Vec& x, double dt, long steps) {
  Vec cur = x;
  for (long s = 0; s < steps; ++s) cur = euler_step(obj, cur, dt);
  return cur;
}

double grad_norm(const Objective& obj, const Vec& x) {
  if (!x.allFinite()) throw EvaluationError("grad_norm: non-finite point");
  return obj.gradient(x).norm();
}

Vec fd_gradient(const Objective& obj, const Vec& x, double h) {
  if (!(h > 0)) throw ParameterError("fd_gradient: h must be positive");
  Vec g(x.size());
  Vec p = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double hi = h * std::max(1.0, std::abs(x[i]));
    p[i] = x[i] + hi;
    const double fp = obj.value(p);
    p[i] = x[i] - hi;
    const double fm = obj.value(p);
    p[i] = x[i];
    g[i] = (fp - fm) / (2 * hi);
  }
  return g;
}

Mat fd_hessian(const Objective& obj, const Vec& x, double h) {
  if (!(h > 0)) throw ParameterError("fd_hessian: h must be positive");
  const Index n = x.size();
  Mat H(n, n);
  Vec p = x;
  const double f0 = obj.value(x);
  for (Index i = 0; i < n; ++i) {
    const double hi = h * std::max(1.0, std::abs(x[i]));
    p[i] = x[i] + hi;
    const double fp = obj.value(p);
    p[i] = x[i] - hi;
    const double fm = obj.value(p);
    p[i] = x[i];
    H(i, i) = (fp - 2 * f0 + fm) / (hi * hi);
    for (Index j = i + 1; j < n; ++j) {
      const double hj = h * std::max(1.0, std::abs(x[j]));
      auto f_at = [&](double si, double sj) {
        p[i] = x[i] + si * hi;
        p[j] = x[j] + sj * hj;
        const double v = obj.value(p);
        p[i] = x[i];
        p[j] = x[j];
        return v;
      };
      H(i, j) = H(j, i) = (f_at(1, 1) - f_at(1, -1) - f_at(-1, 1) + f_at(-1, -1)) / (4 * hi * hj);
    }
  }
  return H;
}

Mat fd_hessian_from_gradient(const Objective& obj, const Vec& x, double h) {
  const Index n = x.size();
  Mat H(n, n);
  Vec p = x;
  for (Index i = 0; i < n; ++i) {
    const double hi = h * std::max(1.0, std::abs(x[i]));
    p[i] = x[i] + hi;
    const Vec gp = obj.gradient(p);
    p[i] = x[i] - hi;
    const Vec gm = obj.gradient(p);
    p[i] = x[i];
    H.col(i) = (gp - gm) / (2 * hi);
  }
  return 0.5 * (H + H.transpose());
}

Mat hessian_or_fd(const Objective& obj, const Vec& x, double h) {
  if (obj.has_hessian()) return obj.hessian(x);
  return fd_hessian_from_gradient(obj, x, h);
}

CriticalClass classify_critical(const Objective& obj, const Vec& x, double tol, const ClassifyOptions& opts) {
  const double gn = grad_norm(obj, x);
  if (!(gn < tol))
    throw NotCriticalError(fmt::format("classify_critical: gradient norm {:.3e} is not below {:.3e}", gn, tol));
  const Mat H = hessian_or_fd(obj, x, opts.fd_step);
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw EvaluationError("classify_critical: eigen decomposition failed");
  const Vec& lam = eig.eigenvalues();
  const double scale = lam.cwiseAbs().maxCoeff();
  CriticalClass out;
  out.eigenvalues = lam;
  for (Index i = 0; i < lam.size(); ++i) {
    if (std::abs(lam[i]) < opts.degeneracy_floor * scale || scale == 0.0)
      throw DegenerateCriticalPointError(
          fmt::format("classify_critical: eigenvalue {:.3e} is below the degeneracy floor", lam[i]));
    if (lam[i] < 0) ++out.negative_eigenvalue_count;
  }
  const int k = out.negative_eigenvalue_count;
  if (k == 0)
    out.kind = CriticalKind::stable;
  else if (k == static_cast<int>(x.size()))
    out.kind = CriticalKind::source;
  else if (k == 1)
    out.kind = CriticalKind::saddle;
  else
    out.kind = CriticalKind::type_k;
  return out;
}

}  // namespace ttech

#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "ttech/core.hpp"

namespace ttech {

/// Counts evaluations made through a `counted()` objective. Shared between copies.
struct EvalCounter {
  std::atomic<long> values{0};
  std::atomic<long> gradients{0};
  std::atomic<long> hessians{0};

  void reset() {
    values = 0;
    gradients = 0;
    hessians = 0;
  }
};

/// A twice-differentiable scalar function of a real vector. Cheap to copy; the
/// callables are expected to be pure so a single instance may be evaluated from
/// several threads at once.
class Objective {
 public:
  using ValueFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;
  using HessFn = std::function<Mat(const Vec&)>;

  Objective() = default;
  Objective(std::string name, Index dim, ValueFn value, GradFn grad, HessFn hess = {});

  Index dim() const { return dim_; }
  const std::string& name() const { return name_; }

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  bool has_hessian() const { return static_cast<bool>(hess_); }
  /// Analytic Hessian; throws StrategyError when the objective has none.
  Mat hessian(const Vec& x) const;

  /// Same objective with every evaluation tallied into `counter`.
  Objective counted(std::shared_ptr<EvalCounter> counter) const;
  /// Same objective without its analytic Hessian (forces the finite-difference path).
  Objective without_hessian() const;

 private:
  void check_dim(const Vec& x) const;

  std::string name_;
  Index dim_ = 0;
  ValueFn value_;
  GradFn grad_;
  HessFn hess_;
};

enum class CriticalKind { stable, saddle, type_k, source };

const char* to_string(CriticalKind k);

struct CriticalClass {
  CriticalKind kind = CriticalKind::stable;
  int negative_eigenvalue_count = 0;
  Vec eigenvalues;  // ascending
};

/// Right-hand side of the negative gradient system dx/dt = -grad f(x).
Vec vector_field(const Objective& obj, const Vec& x);

/// One explicit Euler step x - grad f(x) * dt.
Vec euler_step(const Objective& obj, const Vec& x, double dt);

/// `steps` composed Euler steps.
Vec integrate(const Objective& obj, const Vec& x, double dt, long steps);

double grad_norm(const Objective& obj, const Vec& x);

/// Central differences with per-coordinate step h * max(1, |x_i|).
Vec fd_gradient(const Objective& obj, const Vec& x, double h = 1e-6);
/// Central differences of function values, symmetrized.
Mat fd_hessian(const Objective& obj, const Vec& x, double h = 1e-4);
/// Central differences of the analytic gradient with step h * max(1, |x_i|), symmetrized.
Mat fd_hessian_from_gradient(const Objective& obj, const Vec& x, double h = 1e-5);

/// Analytic Hessian when available, otherwise `fd_hessian_from_gradient`.
Mat hessian_or_fd(const Objective& obj, const Vec& x, double h = 1e-5);

struct ClassifyOptions {
  /// Eigenvalues with |lambda| < degeneracy_floor * max|lambda| count as degenerate.
  double degeneracy_floor = 1e-8;
  double fd_step = 1e-5;
};

/// Index of the critical point x: number of negative Hessian eigenvalues.
/// Requires grad_norm(x) < tol; throws NotCriticalError otherwise and
/// DegenerateCriticalPointError when an eigenvalue sits below the degeneracy floor.
CriticalClass classify_critical(const Objective& obj, const Vec& x, double tol,
                                const ClassifyOptions& opts = {});

}  // namespace ttech

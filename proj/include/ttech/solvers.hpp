#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "ttech/core.hpp"
#include "ttech/dynsys.hpp"

namespace ttech {

/// Golden mean used by the peak search, (3 - sqrt 5) / 2 rounded as in the classic procedure.
inline constexpr double kGoldenR = 0.38197;

/// Maximizes f on the bracket [a, b] by golden-section shrinkage; returns the
/// final `b` once |b - a| <= eps. The bracket may be given in either order.
double golden_section_peak(const std::function<double(double)>& f, double a, double b, double eps);

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 100;
  /// Relative eigenvalue threshold below which the Hessian counts as singular.
  double singular_floor = 1e-12;
  /// Longest single Newton step (Euclidean); infinity disables the cap.
  double max_step = std::numeric_limits<double>::infinity();
  int max_halvings = 40;
  double fd_step = 1e-5;
};

struct NewtonResult {
  Vec x;
  double grad_norm = 0;
  int iterations = 0;
};

/// Damped Newton iteration on grad f = 0. Converges to critical points of any
/// index; the step is halved while it fails to reduce the gradient norm.
NewtonResult newton_critical(const Objective& obj, const Vec& x0, const NewtonOptions& opts = {});

/// Convenience overload returning only the point.
Vec newton_critical(const Objective& obj, const Vec& x0, double tol, int max_iter);

struct LmConfig {
  double mu0 = 1e-3;
  double mu_scale = 10.0;
  double mu_max = 1e12;
  double tol_grad = 1e-8;
  double tol_step = 1e-10;
  int max_iter = 500;
  /// Compare the supplied Jacobian against finite differences at w0.
  bool check_jacobian = false;

  void validate() const;
};

enum class LmStatus { gradient_tolerance, step_tolerance, max_iterations, damping_limit, stopped_by_callback };

const char* to_string(LmStatus s);

struct LmResult {
  Vec w;
  double cost = 0;  // 0.5 * |e|^2
  Mat jtj;          // Gauss-Newton matrix at w
  Vec gradient;     // J^T e at w
  int iterations = 0;
  LmStatus status = LmStatus::max_iterations;
  std::vector<double> cost_history;  // accepted iterates, starting with w0
  std::vector<double> step_lengths;  // accepted steps
};

using ResidualFn = std::function<Vec(const Vec&)>;
using JacobianFn = std::function<Mat(const Vec&)>;
/// Called after each accepted step with the new iterate; returning true stops the run.
using LmCallback = std::function<bool(const Vec&, int)>;

/// Levenberg-Marquardt on 0.5 |e(w)|^2 with (J^T J + mu I) delta = -J^T e.
LmResult levenberg_marquardt(const ResidualFn& residuals, const JacobianFn& jac, const Vec& w0,
                             const LmConfig& cfg = {}, const LmCallback& on_accept = {});

/// Outcome of a local minimization; shared by every local solver plugged into tier search.
struct LocalResult {
  Vec x;
  double value = 0;
  double grad_norm = 0;
  int iterations = 0;
  bool converged = false;
};

using LocalSolver = std::function<LocalResult(const Vec&)>;

struct LbfgsOptions {
  double tol = 1e-8;  // gradient norm
  int max_iter = 2000;
  int memory = 10;
  double armijo = 1e-4;
  double max_step = std::numeric_limits<double>::infinity();
};

/// Limited-memory BFGS with Armijo backtracking.
LocalResult lbfgs_minimize(const Objective& obj, const Vec& x0, const LbfgsOptions& opts = {});

/// Adapts lbfgs_minimize to the LocalSolver signature.
LocalSolver lbfgs_solver(const Objective& obj, const LbfgsOptions& opts = {});

}  // namespace ttech

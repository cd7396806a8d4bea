#include "ttech/solvers.hpp"

#include <fmt/core.h>

#include <cmath>
#include <deque>

namespace ttech {

double golden_section_peak(const std::function<double(double)>& f, double a, double b, double eps) {
  if (!(eps > 0)) throw ParameterError("golden_section_peak: eps must be positive");
  const double r = kGoldenR;
  double c = a + r * (b - a);
  double d = b - r * (b - a);
  double fc = f(c), fd = f(d);
  while (std::abs(b - a) > eps) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = a + r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = b - r * (b - a);
      fd = f(d);
    }
  }
  return b;
}

// ---------------------------------------------------------------------------

NewtonResult newton_critical(const Objective& obj, const Vec& x0, const NewtonOptions& opts) {
  if (!(opts.tol > 0) || opts.max_iter < 1) throw ParameterError("newton_critical: tol and max_iter must be positive");
  NewtonResult res;
  res.x = x0;
  Vec g = obj.gradient(res.x);
  double gn = g.norm();
  for (int it = 0; it < opts.max_iter; ++it) {
    if (gn < opts.tol) {
      res.grad_norm = gn;
      res.iterations = it;
      return res;
    }
    const Mat H = hessian_or_fd(obj, res.x, opts.fd_step);
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (H + H.transpose()));
    if (eig.info() != Eigen::Success) throw SingularityError("newton_critical: eigen decomposition failed");
    const Vec& lam = eig.eigenvalues();
    const double scale = lam.cwiseAbs().maxCoeff();
    if (!(lam.cwiseAbs().minCoeff() > opts.singular_floor * scale))
      throw SingularityError(fmt::format("newton_critical: singular Hessian at iteration {}", it));
    const Mat& V = eig.eigenvectors();
    Vec step = -(V * ((V.transpose() * g).array() / lam.array()).matrix());
    const double len = step.norm();
    if (len > opts.max_step) step *= opts.max_step / len;

    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      const Vec trial = res.x + step;
      if (trial.allFinite()) {
        try {
          const Vec gt = obj.gradient(trial);
          const double gnt = gt.norm();
          if (gnt < gn) {
            res.x = trial;
            g = gt;
            gn = gnt;
            accepted = true;
            break;
          }
        } catch (const DomainError&) {
        } catch (const SingularityError&) {
        } catch (const EvaluationError&) {
        }
      }
      step *= 0.5;
    }
    if (!accepted)
      throw NoConvergenceError(
          fmt::format("newton_critical: no step reduced the gradient norm ({:.3e}) at iteration {}", gn, it), res.x);
  }
  if (gn < opts.tol) {
    res.grad_norm = gn;
    res.iterations = opts.max_iter;
    return res;
  }
  throw NoConvergenceError(
      fmt::format("newton_critical: gradient norm {:.3e} after {} iterations", gn, opts.max_iter), res.x);
}

Vec newton_critical(const Objective& obj, const Vec& x0, double tol, int max_iter) {
  NewtonOptions o;
  o.tol = tol;
  o.max_iter = max_iter;
  return newton_critical(obj, x0, o).x;
}

// ---------------------------------------------------------------------------

void LmConfig::validate() const {
  if (!(mu0 > 0) || !(mu_scale > 1) || !(mu_max > mu0) || !(tol_grad > 0) || !(tol_step > 0) || max_iter < 1)
    throw ParameterError("LmConfig: mu0, tolerances and max_iter must be positive and mu_scale > 1");
}

const char* to_string(LmStatus s) {
  switch (s) {
    case LmStatus::gradient_tolerance: return "gradient_tolerance";
    case LmStatus::step_tolerance: return "step_tolerance";
    case LmStatus::max_iterations: return "max_iterations";
    case LmStatus::damping_limit: return "damping_limit";
    case LmStatus::stopped_by_callback: return "stopped_by_callback";
  }
  return "?";
}

namespace {

void check_jacobian_fd(const ResidualFn& residuals, const JacobianFn& jac, const Vec& w) {
  const Mat J = jac(w);
  Mat Jfd(J.rows(), J.cols());
  Vec p = w;
  for (Index i = 0; i < w.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(w[i]));
    p[i] = w[i] + h;
    const Vec ep = residuals(p);
    p[i] = w[i] - h;
    const Vec em = residuals(p);
    p[i] = w[i];
    Jfd.col(i) = (ep - em) / (2 * h);
  }
  const double err = (J - Jfd).norm() / std::max(1.0, Jfd.norm());
  if (err > 1e-4) throw ParameterError(fmt::format("levenberg_marquardt: Jacobian disagrees with FD ({:.3e})", err));
}

}  // namespace

LmResult levenberg_marquardt(const ResidualFn& residuals, const JacobianFn& jac, const Vec& w0, const LmConfig& cfg,
                             const LmCallback& on_accept) {
  cfg.validate();
  if (cfg.check_jacobian) check_jacobian_fd(residuals, jac, w0);
  LmResult res;
  res.w = w0;
  Vec e = residuals(res.w);
  Mat J = jac(res.w);
  res.cost = 0.5 * e.squaredNorm();
  res.jtj = J.transpose() * J;
  res.gradient = J.transpose() * e;
  res.cost_history.push_back(res.cost);
  double mu = cfg.mu0;

  for (int it = 0; it < cfg.max_iter; ++it) {
    res.iterations = it;
    if (res.gradient.norm() < cfg.tol_grad) {
      res.status = LmStatus::gradient_tolerance;
      return res;
    }
    bool accepted = false;
    while (!accepted) {
      if (mu > cfg.mu_max) {
        res.status = LmStatus::damping_limit;
        return res;
      }
      Mat A = res.jtj;
      A.diagonal().array() += mu;
      Eigen::LDLT<Mat> ldlt(A);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        if (mu * cfg.mu_scale > cfg.mu_max) throw StallError("levenberg_marquardt: linear solve failed at maximal damping");
        mu *= cfg.mu_scale;
        continue;
      }
      const Vec delta = ldlt.solve(-res.gradient);
      if (!delta.allFinite()) {
        if (mu * cfg.mu_scale > cfg.mu_max) throw StallError("levenberg_marquardt: linear solve failed at maximal damping");
        mu *= cfg.mu_scale;
        continue;
      }
      if (delta.norm() < cfg.tol_step * (res.w.norm() + cfg.tol_step)) {
        res.status = LmStatus::step_tolerance;
        return res;
      }
      const Vec trial = res.w + delta;
      const Vec et = residuals(trial);
      const double ct = 0.5 * et.squaredNorm();
      if (std::isfinite(ct) && ct < res.cost) {
        res.w = trial;
        e = et;
        J = jac(res.w);
        res.cost = ct;
        res.jtj = J.transpose() * J;
        res.gradient = J.transpose() * e;
        res.cost_history.push_back(ct);
        res.step_lengths.push_back(delta.norm());
        mu = std::max(mu / cfg.mu_scale, 1e-300);
        accepted = true;
      } else {
        mu *= cfg.mu_scale;
      }
    }
    if (on_accept && on_accept(res.w, it + 1)) {
      res.iterations = it + 1;
      res.status = LmStatus::stopped_by_callback;
      return res;
    }
  }
  res.iterations = cfg.max_iter;
  res.status = res.gradient.norm() < cfg.tol_grad ? LmStatus::gradient_tolerance : LmStatus::max_iterations;
  return res;
}

// ---------------------------------------------------------------------------

LocalResult lbfgs_minimize(const Objective& obj, const Vec& x0, const LbfgsOptions& opts) {
  LocalResult res;
  res.x = x0;
  res.value = obj.value(x0);
  Vec g = obj.gradient(x0);
  std::deque<Vec> S, Y;
  std::deque<double> rho;
  for (int it = 0; it < opts.max_iter; ++it) {
    res.grad_norm = g.norm();
    res.iterations = it;
    if (res.grad_norm < opts.tol) {
      res.converged = true;
      return res;
    }
    // Two-loop recursion.
    Vec q = g;
    std::vector<double> alpha(S.size());
    for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
      alpha[static_cast<size_t>(i)] = rho[static_cast<size_t>(i)] * S[static_cast<size_t>(i)].dot(q);
      q -= alpha[static_cast<size_t>(i)] * Y[static_cast<size_t>(i)];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (size_t i = 0; i < S.size(); ++i) {
      const double beta = rho[i] * Y[i].dot(q);
      q += (alpha[i] - beta) * S[i];
    }
    Vec dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0)) {
      dir = -g;
      slope = -g.squaredNorm();
      S.clear();
      Y.clear();
      rho.clear();
    }
    double t = 1.0;
    if (S.empty()) t = std::min(1.0, 1.0 / std::max(g.norm(), 1e-300));
    if (dir.norm() * t > opts.max_step) t = opts.max_step / dir.norm();
    bool ok = false;
    Vec xn, gn;
    double fn = 0;
    // Below this the value comparison is roundoff; fall back to the gradient norm.
    const double noise = 64 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(res.value));
    for (int ls = 0; ls < 60; ++ls) {
      xn = res.x + t * dir;
      try {
        fn = obj.value(xn);
        if (std::isfinite(fn) && fn <= res.value + opts.armijo * t * slope) {
          ok = true;
          break;
        }
        if (std::isfinite(fn) && std::abs(fn - res.value) <= noise) {
          gn = obj.gradient(xn);
          if (gn.norm() < res.grad_norm) {
            ok = true;
            break;
          }
          gn.resize(0);
        }
      } catch (const DomainError&) {
      } catch (const SingularityError&) {
      }
      t *= 0.5;
    }
    if (!ok) return res;  // line search exhausted: not converged
    if (gn.size() == 0) gn = obj.gradient(xn);
    const Vec s = xn - res.x, y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opts.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    res.x = xn;
    res.value = fn;
    g = gn;
  }
  res.grad_norm = g.norm();
  res.iterations = opts.max_iter;
  res.converged = res.grad_norm < opts.tol;
  return res;
}

LocalSolver lbfgs_solver(const Objective& obj, const LbfgsOptions& opts) {
  return [obj, opts](const Vec& x) { return lbfgs_minimize(obj, x, opts); };
}

}  // namespace ttech

#include "ttech/saddle.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <memory>

namespace ttech::saddle {

void SaddleConfig::validate() const {
  if (coarse_steps < 1 || smallstep < 1 || intsteps < 1 || max_hops < 1 || newton_max_iter < 1)
    throw ParameterError("SaddleConfig: step counts must be positive");
  if (!(eps > 0) || !(dt > 0) || !(newton_tol > 0) || !(mgp_tol > 0) || !(exit_critical_tol >= 0) || !(perturb_delta >= 0))
    throw ParameterError("SaddleConfig: eps, dt and tolerances must be positive");
}

std::optional<Vec> find_exit_point(const Objective& obj, const Vec& A, const Vec& B, int steps, double eps) {
  if (steps < 1) throw ParameterError("find_exit_point: steps must be positive");
  Vec interval = (B - A) / static_cast<double>(steps);
  const double len = interval.norm();
  if (!(len > 0)) return std::nullopt;
  double cur = obj.value(A);
  if (obj.value(A + interval) < cur) interval = -interval;  // B <- 2A - B
  auto along = [&](double t) { return obj.value(A + t * interval); };
  for (int i = 1; i <= steps; ++i) {
    const double prev = cur;
    cur = along(i);
    if (prev > cur) {
      const double t = golden_section_peak(along, i - 2, i, eps / len);
      return Vec(A + t * interval);
    }
  }
  return std::nullopt;
}

namespace {

std::optional<Vec> retrace(const Objective& obj, const Vec& p, const Vec& A, const Vec& B, const SaddleConfig& cfg) {
  if (auto e = find_exit_point(obj, p, B, cfg.smallstep, cfg.eps)) return e;
  return find_exit_point(obj, p, A, cfg.smallstep, cfg.eps);
}

void pick_mgp(BoundaryTrace& tr) {
  Index best = 0;
  for (Index i = 1; i < static_cast<Index>(tr.points.size()); ++i)
    if (tr.points[static_cast<size_t>(i)].grad_norm < tr.points[static_cast<size_t>(best)].grad_norm) best = i;
  tr.mgp_index = best;
  tr.mgp = tr.points[static_cast<size_t>(best)].x;
  tr.mgp_grad_norm = tr.points[static_cast<size_t>(best)].grad_norm;
}

}  // namespace

BoundaryTrace follow_boundary(const Objective& obj, const Vec& exit, const Vec& A, const Vec& B,
                              const SaddleConfig& cfg) {
  cfg.validate();
  BoundaryTrace tr;
  Vec bd = exit;
  double gm = grad_norm(obj, bd);
  tr.points.push_back({bd, gm});
  bool reduced = false;
  for (int hop = 0; hop < cfg.max_hops; ++hop) {
    if (gm < cfg.mgp_tol) {  // already at the critical point
      tr.mgp_found = true;
      break;
    }
    const Vec moved = integrate(obj, bd, cfg.dt, cfg.intsteps);
    const auto next = retrace(obj, moved, A, B, cfg);
    if (!next) break;
    bd = *next;
    const double prev = gm;
    gm = grad_norm(obj, bd);
    tr.points.push_back({bd, gm});
    if (gm < prev) reduced = true;
    if (gm > prev && reduced) {
      tr.mgp_found = true;
      break;
    }
  }
  pick_mgp(tr);
  return tr;
}

namespace {

void refine_into(const Objective& obj, const SaddleConfig& cfg, SaddleResult& r) {
  NewtonOptions no;
  no.tol = cfg.newton_tol;
  no.max_iter = cfg.newton_max_iter;
  r.ddp = newton_critical(obj, r.mgp, no).x;
  r.ddp_energy = obj.value(r.ddp);
  r.ddp_class = classify_critical(obj, r.ddp, 10 * cfg.newton_tol);
  if (r.ddp_class.kind != CriticalKind::saddle)
    throw WrongIndexError(fmt::format("refined point has {} negative eigenvalues, expected 1",
                                      r.ddp_class.negative_eigenvalue_count),
                          r.ddp_class.negative_eigenvalue_count);
}

Vec exit_or_throw(const Objective& obj, const Vec& A, const Vec& B, const SaddleConfig& cfg) {
  auto exit = find_exit_point(obj, A, B, cfg.coarse_steps, cfg.eps);
  if (!exit) throw NoExitPointError("no exit point between the given minima");
  return *exit;
}

}  // namespace

SaddleResult locate_ddp(const Objective& obj, const Vec& A, const Vec& B, const SaddleConfig& cfg) {
  cfg.validate();
  auto counter = std::make_shared<EvalCounter>();
  const Objective counted = obj.counted(counter);
  SaddleResult r;
  r.exit_point = exit_or_throw(counted, A, B, cfg);
  if (grad_norm(obj, r.exit_point) < cfg.exit_critical_tol)
    throw DegenerateExitError("exit point is itself a critical point; use the perturbed path");
  r.trace = follow_boundary(counted, r.exit_point, A, B, cfg);
  r.force_evals = counter->gradients;
  r.mgp = r.trace.mgp;
  refine_into(obj, cfg, r);
  return r;
}

std::vector<SaddleResult> locate_ddps(const Objective& obj, const Vec& A, const Vec& B, const SaddleConfig& cfg) {
  cfg.validate();
  const Vec exit = exit_or_throw(obj, A, B, cfg);
  if (grad_norm(obj, exit) >= cfg.exit_critical_tol) return {locate_ddp(obj, A, B, cfg)};
  std::vector<SaddleResult> out;
  const Vec dir = perturbation_direction(obj, exit, A, B);
  for (double sign : {1.0, -1.0}) {
    auto counter = std::make_shared<EvalCounter>();
    const Objective counted = obj.counted(counter);
    SaddleResult r;
    r.exit_point = exit;
    r.trace = perturbed_escape(counted, exit, A, B, cfg.perturb_delta, cfg, Vec(sign * dir))[0];
    r.force_evals = counter->gradients;
    r.mgp = r.trace.mgp;
    refine_into(obj, cfg, r);
    out.push_back(std::move(r));
  }
  return out;
}

Vec symmetric_ddp(const Objective& obj, const Vec& exit, double dt, long max_steps, double tol, double max_move) {
  if (!(dt > 0) || max_steps < 0 || !(tol > 0) || !(max_move > 0))
    throw ParameterError("symmetric_ddp: dt, tol and max_move must be positive");
  Vec x = exit;
  for (long s = 0; s <= max_steps; ++s) {
    const Vec g = obj.gradient(x);
    if (g.norm() < tol) {
      const CriticalClass c = classify_critical(obj, x, 2 * tol);
      if (c.kind == CriticalKind::stable)
        throw FellIntoBasinError("integration from the exit point converged to a local minimum");
      return x;
    }
    if (s == max_steps) break;
    const double step = std::min(dt, max_move / g.norm());
    x -= g * step;
    for (Index i = 0; i < x.size(); ++i)
      if (!std::isfinite(x[i])) throw StepError(fmt::format("symmetric_ddp: coordinate {} became non-finite", i), i);
  }
  throw NoConvergenceError(fmt::format("symmetric_ddp: no critical point within {} steps", max_steps), x);
}

Vec perturbation_direction(const Objective& obj, const Vec& exit, const Vec& A, const Vec& B) {
  const Vec u = (B - A).normalized();
  if (exit.size() == 2) return Vec((Vec(2) << -u[1], u[0]).finished());
  const Mat H = hessian_or_fd(obj, exit);
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (H + H.transpose()));
  for (Index i = 0; i < H.cols(); ++i) {
    Vec v = eig.eigenvectors().col(i);
    v -= v.dot(u) * u;
    if (v.norm() > 0.1) return v.normalized();
  }
  for (Index i = 0; i < exit.size(); ++i) {
    Vec v = Vec::Unit(exit.size(), i);
    v -= v.dot(u) * u;
    if (v.norm() > 0.1) return v.normalized();
  }
  throw DegenerateExitError("perturbation_direction: no direction orthogonal to A -> B");
}

std::array<BoundaryTrace, 2> perturbed_escape(const Objective& obj, const Vec& exit, const Vec& A, const Vec& B,
                                              double delta, const SaddleConfig& cfg, std::optional<Vec> direction) {
  cfg.validate();
  if (!(delta > 0)) throw DegenerateExitError("perturbed_escape: delta must be positive");
  Vec dir = direction ? *direction : perturbation_direction(obj, exit, A, B);
  if (!(dir.norm() > 0)) throw DegenerateExitError("perturbed_escape: zero perturbation direction");
  dir.normalize();
  const Vec u = (B - A).normalized();
  std::array<BoundaryTrace, 2> out;
  int side = 0;
  for (double sign : {1.0, -1.0}) {
    const Vec start = exit + sign * delta * dir;
    const Vec probe = integrate(obj, start, cfg.dt, cfg.intsteps);
    const Vec disp = probe - start;
    const double along = std::abs(disp.dot(u));
    const double across = (disp - disp.dot(u) * u).norm();
    if (along > across)
      throw FellIntoBasinError("perturbed point flows along A -> B into a basin; perturb across the segment");
    out[static_cast<size_t>(side++)] = follow_boundary(obj, start, A, B, cfg);
  }
  return out;
}

std::string trace_csv(const BoundaryTrace& trace) {
  std::string out = "hop_index";
  const Index d = trace.points.empty() ? 0 : trace.points.front().x.size();
  for (Index i = 1; i <= d; ++i) out += fmt::format(",x{}", i);
  out += ",grad_norm\n";
  for (size_t k = 0; k < trace.points.size(); ++k) {
    out += fmt::format("{}", k);
    for (Index i = 0; i < d; ++i) out += fmt::format(",{:.17g}", trace.points[k].x[i]);
    out += fmt::format(",{:.17g}\n", trace.points[k].grad_norm);
  }
  return out;
}

}  // namespace ttech::saddle

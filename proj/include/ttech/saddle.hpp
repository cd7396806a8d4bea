#pragma once

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ttech/core.hpp"
#include "ttech/dynsys.hpp"
#include "ttech/solvers.hpp"

namespace ttech::saddle {

struct SaddleConfig {
  int coarse_steps = 10;   // scan intervals for the first exit point
  double eps = 1e-6;       // golden-section accuracy (distance along the segment)
  double dt = 1e-4;        // Euler step
  int intsteps = 20;       // integrations per boundary hop
  int smallstep = 50;      // scan intervals when retracing to the boundary
  int max_hops = 500;
  /// Tracing stops once the boundary gradient norm drops below this.
  double mgp_tol = 1e-6;
  double newton_tol = 1e-10;
  int newton_max_iter = 100;
  /// An exit point whose gradient norm is below this is itself critical (source
  /// or maximum on the segment) and needs the perturbed path.
  double exit_critical_tol = 1e-3;
  double perturb_delta = 1e-2;

  void validate() const;
};

struct TracePoint {
  Vec x;
  double grad_norm;
};

struct BoundaryTrace {
  std::vector<TracePoint> points;  // exit point first
  Vec mgp;
  double mgp_grad_norm = 0;
  Index mgp_index = 0;
  /// False when the trace stopped (hop cap or lost boundary) before the
  /// gradient norm rose after a fall; mgp is then the best point seen.
  bool mgp_found = false;
};

struct SaddleResult {
  Vec exit_point;
  BoundaryTrace trace;
  Vec mgp;
  Vec ddp;
  double ddp_energy = 0;
  long force_evals = 0;  // gradient evaluations up to the MGP
  CriticalClass ddp_class;
};

/// First value peak on the segment A -> B scanned at `steps` intervals and
/// refined by golden section over the last two intervals. When the value drops
/// on the first step the scan direction is flipped (B <- 2A - B). Returns
/// nullopt when no peak lies within the segment.
std::optional<Vec> find_exit_point(const Objective& obj, const Vec& A, const Vec& B, int steps, double eps);

/// Stability-boundary following from an exit point. Each hop integrates
/// `intsteps` Euler steps and retraces to the boundary (toward B, then toward A).
BoundaryTrace follow_boundary(const Objective& obj, const Vec& exit, const Vec& A, const Vec& B,
                              const SaddleConfig& cfg);

/// Exit point -> boundary trace -> Newton refinement. The refined point must be
/// a saddle (WrongIndexError otherwise). Throws DegenerateExitError when the exit
/// point is itself critical.
SaddleResult locate_ddp(const Objective& obj, const Vec& A, const Vec& B, const SaddleConfig& cfg = {});

/// Like locate_ddp, but a critical exit point is handled by perturbed_escape and
/// yields one result per side.
std::vector<SaddleResult> locate_ddps(const Objective& obj, const Vec& A, const Vec& B, const SaddleConfig& cfg = {});

/// Pure Euler integration from an exact exit point until the gradient norm falls
/// below tol. Landing on a minimum raises FellIntoBasinError. `max_move` caps the
/// length of a single step for stiff starts (atoms nearly overlapping).
Vec symmetric_ddp(const Objective& obj, const Vec& exit, double dt, long max_steps, double tol = 1e-8,
                  double max_move = std::numeric_limits<double>::infinity());

/// Direction used to leave a critical exit point: orthogonal to A -> B in 2-D,
/// otherwise the most negative Hessian eigenvector with the A -> B part removed.
Vec perturbation_direction(const Objective& obj, const Vec& exit, const Vec& A, const Vec& B);

/// Perturbs a critical exit point by +-delta along `direction` (defaults to
/// perturbation_direction) and follows the boundary on each side.
std::array<BoundaryTrace, 2> perturbed_escape(const Objective& obj, const Vec& exit, const Vec& A, const Vec& B,
                                              double delta, const SaddleConfig& cfg,
                                              std::optional<Vec> direction = std::nullopt);

/// CSV: hop_index, x1..xd, grad_norm.
std::string trace_csv(const BoundaryTrace& trace);

}  // namespace ttech::saddle

#include <doctest.h>

#include "oracles.hpp"
#include "ttech/saddle.hpp"
#include "ttech/surfaces.hpp"

using namespace ttech;
using namespace ttech::saddle;
using oracle::v2;
using oracle::v3;

namespace {

const Vec mbA = v2(-0.558, 1.442), mbB = v2(-0.05, 0.467), mbC = v2(0.623, 0.028);
const Vec ekA = v2(-3, 0), ekB = v2(3, 0);

SaddleConfig eckhardt_cfg() {
  SaddleConfig c;
  c.dt = 1e-2;
  return c;
}

double rmsd2(const Vec& a, const Vec& b) { return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size())); }

void check_trace(const BoundaryTrace& tr) {
  REQUIRE(!tr.points.empty());
  for (const TracePoint& p : tr.points) CHECK(tr.mgp_grad_norm <= p.grad_norm);
  CHECK(tr.mgp == tr.points[static_cast<size_t>(tr.mgp_index)].x);
}

}  // namespace

TEST_CASE("find_exit_point on Muller-Brown and Eckhardt") {
  const Objective mb = surfaces::muller_brown();
  const auto e1 = find_exit_point(mb, mbA, mbB, 10, 1e-6);
  REQUIRE(e1);
  CHECK(std::abs((*e1)[0] + 0.313) < 1e-2);
  CHECK(std::abs((*e1)[1] - 0.971) < 1e-2);
  CHECK(mb.value(*e1) > mb.value(mbA));
  CHECK(mb.value(*e1) > mb.value(mbB));

  const auto e2 = find_exit_point(mb, mbB, mbC, 10, 1e-6);
  REQUIRE(e2);
  CHECK(((*e2) - v2(0.218, 0.292)).cwiseAbs().maxCoeff() < 1e-2);

  const auto e3 = find_exit_point(surfaces::eckhardt(), ekA, ekB, 10, 1e-6);
  REQUIRE(e3);
  CHECK(e3->norm() < 1e-3);
}

TEST_CASE("find_exit_point flips a descending direction and reports no peak") {
  const Objective mb = surfaces::muller_brown();
  // Starting on the slope above B and aiming downhill: the scan is flipped.
  const Vec start = v2(-0.2, 0.75);
  const auto e = find_exit_point(mb, start, mbB, 10, 1e-6);
  REQUIRE(e);
  CHECK((*e - start).dot(mbB - start) < 0);

  Objective bowl("bowl", 2, [](const Vec& x) { return x.squaredNorm(); }, [](const Vec& x) { return Vec(2 * x); });
  CHECK_FALSE(find_exit_point(bowl, v2(0, 0), v2(1, 0), 10, 1e-6));
  CHECK_FALSE(find_exit_point(bowl, v2(1, 0), v2(1, 0), 10, 1e-6));
}

TEST_CASE("locate_ddp on Muller-Brown") {
  const Objective mb = surfaces::muller_brown();
  const SaddleResult ab = locate_ddp(mb, mbA, mbB);
  CHECK(std::abs(ab.ddp[0] + 0.822) < 1e-2);
  CHECK(std::abs(ab.ddp[1] - 0.624) < 1e-2);
  CHECK(std::abs(ab.ddp_energy + 40.67) < 0.1);
  CHECK(ab.ddp_class.kind == CriticalKind::saddle);
  CHECK(grad_norm(mb, ab.ddp) < 1e-8);
  CHECK(ab.trace.mgp_found);
  CHECK(rmsd2(ab.mgp, ab.ddp) < 0.1);
  CHECK(ab.force_evals > 0);
  check_trace(ab.trace);

  // Along A-B the gradient norm rises first and then falls to the MGP.
  const auto& pts = ab.trace.points;
  double peak = 0;
  for (const auto& p : pts) peak = std::max(peak, p.grad_norm);
  CHECK(peak > pts.front().grad_norm);

  const SaddleResult bc = locate_ddp(mb, mbB, mbC);
  CHECK((bc.ddp - v2(0.212, 0.293)).cwiseAbs().maxCoeff() < 1e-2);
  CHECK(std::abs(bc.ddp_energy + 72.25) < 0.1);
  CHECK(rmsd2(bc.mgp, bc.ddp) < 0.1);
  // The exit point already lies next to the saddle.
  CHECK(rmsd2(bc.exit_point, bc.ddp) < 1e-2);
  check_trace(bc.trace);
}

TEST_CASE("locate_ddp is deterministic") {
  const Objective mb = surfaces::muller_brown();
  const SaddleResult a = locate_ddp(mb, mbA, mbB), b = locate_ddp(mb, mbA, mbB);
  CHECK(a.ddp == b.ddp);
  CHECK(a.force_evals == b.force_evals);
  CHECK(trace_csv(a.trace) == trace_csv(b.trace));
}

TEST_CASE("locate_ddp errors") {
  const Objective mb = surfaces::muller_brown();
  Objective bowl("bowl", 2, [](const Vec& x) { return x.squaredNorm(); }, [](const Vec& x) { return Vec(2 * x); },
                 [](const Vec&) { return Mat(2 * Mat::Identity(2, 2)); });
  CHECK_THROWS_AS(locate_ddp(bowl, v2(0, 0), v2(1, 0)), NoExitPointError);
  CHECK_THROWS_AS(locate_ddp(surfaces::eckhardt(), ekA, ekB, eckhardt_cfg()), DegenerateExitError);
  SaddleConfig bad;
  bad.dt = 0;
  CHECK_THROWS_AS(locate_ddp(mb, mbA, mbB, bad), ParameterError);
}

TEST_CASE("Eckhardt perturbed pipeline") {
  const Objective ek = surfaces::eckhardt();
  CHECK(classify_critical(ek, v2(0, 0), 1e-8).kind == CriticalKind::source);
  const auto rs = locate_ddps(ek, ekA, ekB, eckhardt_cfg());
  REQUIRE(rs.size() == 2);
  std::vector<double> ys;
  for (const SaddleResult& r : rs) {
    CHECK(std::abs(r.ddp[0]) < 1e-3);
    CHECK(std::abs(r.ddp_energy - 2.0409) < 1e-3);
    CHECK(r.ddp_class.kind == CriticalKind::saddle);
    CHECK(rmsd2(r.mgp, r.ddp) < 0.1);
    check_trace(r.trace);
    ys.push_back(r.ddp[1]);
  }
  std::sort(ys.begin(), ys.end());
  CHECK(std::abs(ys[0] + 1.4644) < 1e-3);
  CHECK(std::abs(ys[1] - 1.4644) < 1e-3);
}

TEST_CASE("perturbed_escape requirements") {
  const Objective ek = surfaces::eckhardt();
  const SaddleConfig c = eckhardt_cfg();
  CHECK_THROWS_AS(perturbed_escape(ek, v2(0, 0), ekA, ekB, 0.0, c), DegenerateExitError);
  CHECK_THROWS_AS(perturbed_escape(ek, v2(0, 0), ekA, ekB, 1e-2, c, v2(1, 0)), FellIntoBasinError);
  const auto sides = perturbed_escape(ek, v2(0, 0), ekA, ekB, 1e-2, c);
  CHECK(sides[0].mgp[1] > 1.0);
  CHECK(sides[1].mgp[1] < -1.0);
  CHECK(perturbation_direction(ek, v2(0, 0), ekA, ekB).cwiseAbs().isApprox(v2(0, 1)));
}

TEST_CASE("LJ3 saddle by pure integration and by boundary following") {
  const Objective lj = surfaces::lj3_reduced();
  const Vec a = newton_critical(lj, v3(1.0, 0.5, 0.866), 1e-10, 50);
  const Vec b = newton_critical(lj, v3(1.0, 0.5, -0.866), 1e-10, 50);
  CHECK(std::abs(lj.value(a) + 3.0) < 5e-3);

  // The midpoint of the two minima is exact by the mirror symmetry z -> -z.
  const Vec mid = (a + b) / 2;
  const Vec d = symmetric_ddp(lj, mid, 1e-3, 200000, 1e-8, 1e-2);
  CHECK(std::abs(lj.value(d) + 2.031) < 1e-2);
  CHECK((d - v3(2.0, 1.0, 0.0)).cwiseAbs().maxCoeff() < 1e-2);
  CHECK(classify_critical(lj, d, 1e-7).kind == CriticalKind::saddle);

  SaddleConfig c;
  c.dt = 1e-3;
  const SaddleResult r = locate_ddp(lj, a, b, c);
  CHECK((r.ddp - d).norm() < 1e-6);
}

TEST_CASE("symmetric_ddp edge cases") {
  const Objective mb = surfaces::muller_brown();
  const auto e = find_exit_point(mb, mbA, mbB, 10, 1e-6);
  REQUIRE(e);
  CHECK_THROWS_AS(symmetric_ddp(mb, *e, 1e-4, 1000000), FellIntoBasinError);
  const Vec s = newton_critical(mb, v2(-0.822, 0.624), 1e-12, 50);
  CHECK(symmetric_ddp(mb, s, 1e-4, 0) == s);
  CHECK_THROWS_AS(symmetric_ddp(mb, *e, 1e-4, 10), NoConvergenceError);
  CHECK_THROWS_AS(symmetric_ddp(mb, *e, 0.0, 10), ParameterError);
}

TEST_CASE("trace_csv layout") {
  BoundaryTrace tr;
  tr.points.push_back({v2(0.5, -1.25), 3.0});
  tr.points.push_back({v2(0.1, 0.2), 0.25});
  CHECK(trace_csv(tr) == "hop_index,x1,x2,grad_norm\n0,0.5,-1.25,3\n1,0.10000000000000001,0.20000000000000001,0.25\n");
}

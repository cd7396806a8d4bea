#include "ttech/surfaces.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ttech/parallel.hpp"

namespace ttech::surfaces {

// ---------------------------------------------------------------------------
// Muller-Brown

Objective muller_brown(const MullerBrownParams& p) {
  auto term = [p](int i, double x, double y, double& qx, double& qy) {
    const double dx = x - p.x0[i], dy = y - p.y0[i];
    qx = 2 * p.a[i] * dx + p.b[i] * dy;
    qy = p.b[i] * dx + 2 * p.c[i] * dy;
    return p.A[i] * std::exp(p.a[i] * dx * dx + p.b[i] * dx * dy + p.c[i] * dy * dy);
  };
  auto value = [term](const Vec& v) {
    double e = 0, qx, qy;
    for (int i = 0; i < 4; ++i) e += term(i, v[0], v[1], qx, qy);
    return e;
  };
  auto grad = [term](const Vec& v) {
    Vec g = Vec::Zero(2);
    double qx, qy;
    for (int i = 0; i < 4; ++i) {
      const double e = term(i, v[0], v[1], qx, qy);
      g[0] += e * qx;
      g[1] += e * qy;
    }
    return g;
  };
  auto hess = [term, p](const Vec& v) {
    Mat H = Mat::Zero(2, 2);
    double qx, qy;
    for (int i = 0; i < 4; ++i) {
      const double e = term(i, v[0], v[1], qx, qy);
      H(0, 0) += e * (qx * qx + 2 * p.a[i]);
      H(0, 1) += e * (qx * qy + p.b[i]);
      H(1, 1) += e * (qy * qy + 2 * p.c[i]);
    }
    H(1, 0) = H(0, 1);
    return H;
  };
  return Objective("muller_brown", 2, value, grad, hess);
}

// ---------------------------------------------------------------------------
// LEPS

double leps_q(double r, double d, double alpha, double r0) {
  const double e = std::exp(-alpha * (r - r0));
  return d / 2 * (1.5 * e * e - e);
}

double leps_j(double r, double d, double alpha, double r0) {
  const double e = std::exp(-alpha * (r - r0));
  return d / 4 * (e * e - 6 * e);
}

namespace {

double leps_dq(double r, double d, double alpha, double r0) {
  const double e = std::exp(-alpha * (r - r0));
  return d / 2 * (-3 * alpha * e * e + alpha * e);
}

double leps_dj(double r, double d, double alpha, double r0) {
  const double e = std::exp(-alpha * (r - r0));
  return d / 4 * (-2 * alpha * e * e + 6 * alpha * e);
}

struct LepsEval {
  double energy;
  double d_ab;  // partial wrt r_AB
  double d_bc;  // partial wrt r_BC
};

LepsEval leps_eval(const LepsParams& p, double rab, double rbc) {
  if (!(rab > 0) || !(rbc > 0))
    throw DomainError(fmt::format("leps: distances must be positive (r_AB={}, r_BC={})", rab, rbc));
  const double rac = rab + rbc;
  const double s[3] = {1 + p.a, 1 + p.b, 1 + p.c};
  const double r[3] = {rab, rbc, rac};
  const double d[3] = {p.d_ab, p.d_bc, p.d_ac};
  double q = 0, u[3], du[3], dq[3];
  for (int i = 0; i < 3; ++i) {
    q += leps_q(r[i], d[i], p.alpha, p.r0) / s[i];
    dq[i] = leps_dq(r[i], d[i], p.alpha, p.r0) / s[i];
    u[i] = leps_j(r[i], d[i], p.alpha, p.r0) / s[i];
    du[i] = leps_dj(r[i], d[i], p.alpha, p.r0) / s[i];
  }
  const double S = u[0] * u[0] + u[1] * u[1] + u[2] * u[2] - u[0] * u[1] - u[1] * u[2] - u[0] * u[2];
  const double root = std::sqrt(std::max(S, 0.0));
  // dE/du_i = -(dS/du_i) / (2 root)
  double dE[3];
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    const double dS = 2 * u[i] - u[j] - u[k];
    dE[i] = root > 0 ? -dS / (2 * root) * du[i] : 0.0;
  }
  LepsEval out;
  out.energy = q - root;
  out.d_ab = dq[0] + dq[2] + dE[0] + dE[2];
  out.d_bc = dq[1] + dq[2] + dE[1] + dE[2];
  return out;
}

}  // namespace

Objective leps(const LepsParams& p) {
  auto value = [p](const Vec& v) { return leps_eval(p, v[0], v[1]).energy; };
  auto grad = [p](const Vec& v) {
    const LepsEval e = leps_eval(p, v[0], v[1]);
    Vec g(2);
    g << e.d_ab, e.d_bc;
    return g;
  };
  return Objective("leps", 2, value, grad);
}

// ---------------------------------------------------------------------------
// Eckhardt

namespace {

// w * exp(-k [(x-x0)^2 + (y-y0)^2]) and its derivatives, accumulated.
void add_gauss(double w, double k, double x0, double y0, const Vec& v, double* e, Vec* g, Mat* H) {
  const double dx = v[0] - x0, dy = v[1] - y0;
  const double val = w * std::exp(-k * (dx * dx + dy * dy));
  if (e) *e += val;
  if (g) {
    (*g)[0] += -2 * k * dx * val;
    (*g)[1] += -2 * k * dy * val;
  }
  if (H) {
    (*H)(0, 0) += val * (4 * k * k * dx * dx - 2 * k);
    (*H)(1, 1) += val * (4 * k * k * dy * dy - 2 * k);
    (*H)(0, 1) += val * 4 * k * k * dx * dy;
  }
}

void eckhardt_terms(const Vec& v, double* e, Vec* g, Mat* H) {
  add_gauss(1.0, 1.0, 0.0, -1.0, v, e, g, H);
  add_gauss(1.0, 1.0, 0.0, 1.0, v, e, g, H);
  add_gauss(4.0, 1.5, 0.0, 0.0, v, e, g, H);
  if (e) *e += v[1] * v[1] / 2;
  if (g) (*g)[1] += v[1];
  if (H) {
    (*H)(1, 1) += 1.0;
    (*H)(1, 0) = (*H)(0, 1);
  }
}

}  // namespace

Objective eckhardt() {
  auto value = [](const Vec& v) {
    double e = 0;
    eckhardt_terms(v, &e, nullptr, nullptr);
    return e;
  };
  auto grad = [](const Vec& v) {
    Vec g = Vec::Zero(2);
    eckhardt_terms(v, nullptr, &g, nullptr);
    return g;
  };
  auto hess = [](const Vec& v) {
    Mat H = Mat::Zero(2, 2);
    eckhardt_terms(v, nullptr, nullptr, &H);
    return H;
  };
  return Objective("eckhardt", 2, value, grad, hess);
}

// ---------------------------------------------------------------------------
// Pair potentials

double PairPotential::raw(double r) const {
  if (kind == Kind::lennard_jones) {
    const double s6 = std::pow(r0 / r, 6);
    return depth * (s6 * s6 - 2 * s6);
  }
  const double e = std::exp(-alpha * (r - r0));
  return depth * (e * e - 2 * e);
}

double PairPotential::raw_d1(double r) const {
  if (kind == Kind::lennard_jones) {
    const double s6 = std::pow(r0 / r, 6);
    return depth * (-12 * s6 * s6 + 12 * s6) / r;
  }
  const double e = std::exp(-alpha * (r - r0));
  return depth * 2 * alpha * (e - e * e);
}

double PairPotential::raw_d2(double r) const {
  if (kind == Kind::lennard_jones) {
    const double s6 = std::pow(r0 / r, 6);
    return depth * (156 * s6 * s6 - 84 * s6) / (r * r);
  }
  const double e = std::exp(-alpha * (r - r0));
  return depth * alpha * alpha * (4 * e * e - 2 * e);
}

double PairPotential::energy(double r) const {
  if (!in_range(r)) return 0.0;
  const double shift = std::isfinite(cutoff) ? raw(cutoff) : 0.0;
  return raw(r) - shift;
}

double PairPotential::d1(double r) const { return in_range(r) ? raw_d1(r) : 0.0; }
double PairPotential::d2(double r) const { return in_range(r) ? raw_d2(r) : 0.0; }

double lj_pair(double r) { return PairPotential{}.raw(r); }

// ---------------------------------------------------------------------------
// PairCluster

PairCluster::PairCluster(Mat positions, std::vector<bool> movable, PairPotential pot)
    : positions_(std::move(positions)), movable_(std::move(movable)), pot_(pot) {
  if (positions_.rows() != 3) throw ParameterError("PairCluster: positions must be 3 x N");
  if (static_cast<Index>(movable_.size()) != positions_.cols())
    throw ParameterError("PairCluster: movable mask size does not match atom count");
  slot_.assign(movable_.size(), -1);
  for (Index i = 0; i < atom_count(); ++i)
    if (movable_[static_cast<size_t>(i)]) {
      slot_[static_cast<size_t>(i)] = static_cast<Index>(movable_idx_.size());
      movable_idx_.push_back(i);
    }
  if (movable_idx_.empty()) throw ParameterError("PairCluster: no movable atoms");
  for (Index i = 0; i < atom_count(); ++i) {
    if (movable_[static_cast<size_t>(i)]) continue;
    for (Index j = i + 1; j < atom_count(); ++j) {
      if (movable_[static_cast<size_t>(j)]) continue;
      const double r = (positions_.col(i) - positions_.col(j)).norm();
      check_pair(r, i, j);
      fixed_energy_ += pot_.energy(r);
    }
  }
}

void PairCluster::check_pair(double r, Index i, Index j) const {
  if (!(r > 1e-12)) throw SingularityError(fmt::format("atoms {} and {} coincide", i, j));
}

Vec PairCluster::initial_variables() const {
  Vec v(dim());
  for (Index m = 0; m < movable_count(); ++m) v.segment<3>(3 * m) = positions_.col(movable_idx_[static_cast<size_t>(m)]);
  return v;
}

Mat PairCluster::positions_for(const Vec& vars) const {
  if (vars.size() != dim()) throw ParameterError("PairCluster: variable vector has wrong dimension");
  Mat P = positions_;
  for (Index m = 0; m < movable_count(); ++m) P.col(movable_idx_[static_cast<size_t>(m)]) = vars.segment<3>(3 * m);
  return P;
}

double PairCluster::energy_serial(const Vec& vars) const {
  const Mat P = positions_for(vars);
  double e = fixed_energy_;
  for (Index i = 0; i < atom_count(); ++i)
    for (Index j = i + 1; j < atom_count(); ++j) {
      if (!movable_[static_cast<size_t>(i)] && !movable_[static_cast<size_t>(j)]) continue;
      const double r = (P.col(i) - P.col(j)).norm();
      check_pair(r, i, j);
      e += pot_.energy(r);
    }
  return e;
}

Vec PairCluster::gradient_serial(const Vec& vars) const {
  const Mat P = positions_for(vars);
  Vec g = Vec::Zero(dim());
  for (Index i = 0; i < atom_count(); ++i)
    for (Index j = i + 1; j < atom_count(); ++j) {
      const Index si = slot_[static_cast<size_t>(i)], sj = slot_[static_cast<size_t>(j)];
      if (si < 0 && sj < 0) continue;
      const Eigen::Vector3d d = P.col(i) - P.col(j);
      const double r = d.norm();
      check_pair(r, i, j);
      const Eigen::Vector3d f = pot_.d1(r) / r * d;
      if (si >= 0) g.segment<3>(3 * si) += f;
      if (sj >= 0) g.segment<3>(3 * sj) -= f;
    }
  return g;
}

// Parallel kernels: each movable atom owns its partner loop, so no write conflicts.
// A pair with two movable atoms is attributed to the atom with the lower slot.
double PairCluster::energy(const Vec& vars) const {
  const Mat P = positions_for(vars);
  const Index n = atom_count();
  const double e = parallel::block_sum(movable_count(), [&](Index m) {
    const Index i = movable_idx_[static_cast<size_t>(m)];
    double s = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const Index sj = slot_[static_cast<size_t>(j)];
      if (sj >= 0 && sj < m) continue;
      const double r = (P.col(i) - P.col(j)).norm();
      check_pair(r, i, j);
      s += pot_.energy(r);
    }
    return s;
  });
  return fixed_energy_ + e;
}

Vec PairCluster::gradient(const Vec& vars) const {
  const Mat P = positions_for(vars);
  const Index n = atom_count();
  Vec g(dim());
  parallel::for_each(movable_count(), [&](Index m) {
    const Index i = movable_idx_[static_cast<size_t>(m)];
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const Eigen::Vector3d d = P.col(i) - P.col(j);
      const double r = d.norm();
      check_pair(r, i, j);
      acc += pot_.d1(r) / r * d;
    }
    g.segment<3>(3 * m) = acc;
  });
  return g;
}

Mat PairCluster::hessian(const Vec& vars) const {
  const Mat P = positions_for(vars);
  const Index n = atom_count();
  Mat H = Mat::Zero(dim(), dim());
  parallel::for_each(movable_count(), [&](Index m) {
    const Index i = movable_idx_[static_cast<size_t>(m)];
    Eigen::Matrix3d diag = Eigen::Matrix3d::Zero();
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const Eigen::Vector3d d = P.col(i) - P.col(j);
      const double r = d.norm();
      check_pair(r, i, j);
      if (!pot_.in_range(r)) continue;
      const Eigen::Vector3d u = d / r;
      const double v1 = pot_.d1(r), v2 = pot_.d2(r);
      const Eigen::Matrix3d uu = u * u.transpose();
      const Eigen::Matrix3d B = v2 * uu + v1 / r * (Eigen::Matrix3d::Identity() - uu);
      diag += B;
      const Index sj = slot_[static_cast<size_t>(j)];
      if (sj >= 0) H.block<3, 3>(3 * m, 3 * sj) = -B;
    }
    H.block<3, 3>(3 * m, 3 * m) = diag;
  });
  return H;
}

Objective PairCluster::objective(std::string name) const {
  auto self = std::make_shared<const PairCluster>(*this);
  return Objective(
      std::move(name), dim(), [self](const Vec& v) { return self->energy(v); },
      [self](const Vec& v) { return self->gradient(v); }, [self](const Vec& v) { return self->hessian(v); });
}

// ---------------------------------------------------------------------------
// Lennard-Jones clusters

Objective lj_cluster(int n_atoms) {
  if (n_atoms < 2) throw ParameterError("lj_cluster: need at least two atoms");
  // Positions are placeholders: every atom is movable, so variables replace them.
  Mat P = Mat::Zero(3, n_atoms);
  for (int i = 0; i < n_atoms; ++i) P(0, i) = i;
  PairCluster c(P, std::vector<bool>(static_cast<size_t>(n_atoms), true), PairPotential{});
  return c.objective(fmt::format("lj{}", n_atoms));
}

Vec lj3_embed(const Vec& reduced) {
  if (reduced.size() != 3) throw ParameterError("lj3_embed: expected (x2, x3, y3)");
  Vec full = Vec::Zero(9);
  full[3] = reduced[0];
  full[6] = reduced[1];
  full[7] = reduced[2];
  return full;
}

Objective lj3_reduced() {
  const Objective full = lj_cluster(3);
  static constexpr Index kMap[3] = {3, 6, 7};
  auto value = [full](const Vec& v) { return full.value(lj3_embed(v)); };
  auto grad = [full](const Vec& v) {
    const Vec g = full.gradient(lj3_embed(v));
    Vec out(3);
    for (int i = 0; i < 3; ++i) out[i] = g[kMap[i]];
    return out;
  };
  auto hess = [full](const Vec& v) {
    const Mat H = full.hessian(lj3_embed(v));
    Mat out(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out(i, j) = H(kMap[i], kMap[j]);
    return out;
  };
  return Objective("lj3", 3, value, grad, hess);
}

// ---------------------------------------------------------------------------
// Morse slab

namespace {

std::pair<int, int> patch_shape(int count) {
  int best = 1;
  for (int ny = 1; ny * ny <= count; ++ny)
    if (count % ny == 0) best = ny;
  return {count / best, best};
}

}  // namespace

MorseSlab morse_slab(const SlabConfig& cfg) {
  if (cfg.layers < 1 || cfg.atoms_per_layer < 1) throw ParameterError("morse_slab: need at least one layer and atom");
  if (cfg.fixed_layers < 0 || cfg.fixed_layers >= cfg.layers)
    throw ParameterError("morse_slab: fixed_layers must be in [0, layers)");
  if (cfg.island_size < 0) throw ParameterError("morse_slab: island_size must be nonnegative");
  if (!(cfg.lattice_constant > 0) || !(cfg.cutoff > 0) || !(cfg.morse_a > 0) || !(cfg.morse_alpha > 0) ||
      !(cfg.morse_r0 > 0))
    throw ParameterError("morse_slab: lengths and Morse parameters must be positive");
  const auto [nx, ny] = patch_shape(cfg.atoms_per_layer);
  if (cfg.island_size > cfg.atoms_per_layer)
    throw ParameterError("morse_slab: island larger than a layer");

  const double a = cfg.lattice_constant;
  const Eigen::Vector3d a1(a, 0, 0);
  const Eigen::Vector3d a2(a / 2, a * std::sqrt(3.0) / 2, 0);
  const double h = a * std::sqrt(2.0 / 3.0);
  auto site = [&](int layer, int i, int j) -> Eigen::Vector3d {
    const Eigen::Vector3d off = (layer % 3) * (a1 + a2) / 3.0;
    return i * a1 + j * a2 + off + Eigen::Vector3d(0, 0, layer * h);
  };

  const int n_slab = cfg.layers * cfg.atoms_per_layer;
  const int n_total = n_slab + cfg.island_size;
  Mat P(3, n_total);
  std::vector<bool> movable(static_cast<size_t>(n_total));
  std::vector<int> layer_of(static_cast<size_t>(n_total));
  int idx = 0;
  for (int l = 0; l < cfg.layers; ++l)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        P.col(idx) = site(l, i, j);
        movable[static_cast<size_t>(idx)] = l >= cfg.fixed_layers;
        layer_of[static_cast<size_t>(idx)] = l;
        ++idx;
      }

  // Island: fcc hollow sites (next layer of the ABC sequence) nearest the patch centre.
  const int L = cfg.layers;
  const Eigen::Vector3d centre = site(L, nx / 2, ny / 2);
  std::vector<Eigen::Vector3d> cand;
  for (int j = -1; j <= ny; ++j)
    for (int i = -1; i <= nx; ++i) cand.push_back(site(L, i, j));
  std::vector<size_t> order(cand.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return (cand[x] - centre).squaredNorm() < (cand[y] - centre).squaredNorm() - 1e-9;
  });
  std::vector<Index> island;
  for (int s = 0; s < cfg.island_size; ++s) {
    P.col(idx) = cand[order[static_cast<size_t>(s)]];
    movable[static_cast<size_t>(idx)] = true;
    layer_of[static_cast<size_t>(idx)] = L;
    island.push_back(idx);
    ++idx;
  }

  PairPotential pot;
  pot.kind = PairPotential::Kind::morse;
  pot.depth = cfg.morse_a;
  pot.alpha = cfg.morse_alpha;
  pot.r0 = cfg.morse_r0;
  pot.cutoff = cfg.cutoff;
  PairCluster cluster(P, movable, pot);
  Objective obj = cluster.objective(fmt::format("morse_slab_{}", cluster.dim()));
  return MorseSlab{cfg, std::move(cluster), std::move(layer_of), std::move(island), a1, a2, std::move(obj)};
}

Vec MorseSlab::shift_island(const Vec& vars, const Eigen::Vector3d& shift) const {
  Vec out = vars;
  for (Index atom : island_atoms) out = move_atom(out, atom, shift);
  return out;
}

Vec MorseSlab::move_atom(const Vec& vars, Index atom, const Eigen::Vector3d& shift) const {
  const auto& mv = cluster.movable_atoms();
  const auto it = std::find(mv.begin(), mv.end(), atom);
  if (it == mv.end()) throw ParameterError(fmt::format("move_atom: atom {} is not movable", atom));
  Vec out = vars;
  out.segment<3>(3 * (it - mv.begin())) += shift;
  return out;
}

std::string MorseSlab::to_xyz(const Vec& vars, const std::string& comment) const {
  const Mat P = cluster.positions_for(vars);
  std::string out = fmt::format("{}\n{}\n", P.cols(), comment);
  for (Index i = 0; i < P.cols(); ++i) out += fmt::format("Pt {:.10f} {:.10f} {:.10f}\n", P(0, i), P(1, i), P(2, i));
  return out;
}

double rmsd(const Vec& a, const Vec& b, int coords_per_atom) {
  if (a.size() != b.size()) throw ParameterError("rmsd: size mismatch");
  if (coords_per_atom < 1 || a.size() % coords_per_atom != 0) throw ParameterError("rmsd: bad coords_per_atom");
  const Index atoms = a.size() / coords_per_atom;
  if (atoms == 0) return 0.0;
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(atoms));
}

}  // namespace ttech::surfaces

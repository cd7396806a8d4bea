#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "ttech/core.hpp"
#include "ttech/dynsys.hpp"

namespace ttech::surfaces {

struct MullerBrownParams {
  std::array<double, 4> A{-200.0, -100.0, -170.0, 15.0};
  std::array<double, 4> a{-1.0, -1.0, -6.5, 0.7};
  std::array<double, 4> b{0.0, 0.0, 11.0, 0.6};
  std::array<double, 4> c{-10.0, -10.0, -6.5, 0.7};
  std::array<double, 4> x0{1.0, 0.0, -0.5, -1.0};
  std::array<double, 4> y0{0.0, 0.5, 1.5, 1.0};
};

/// Sum of four anisotropic Gaussians; analytic gradient and Hessian.
Objective muller_brown(const MullerBrownParams& p = {});

struct LepsParams {
  double a = 0.05, b = 0.05, c = 0.05;
  double d_ab = 4.746, d_bc = 4.746, d_ac = 4.746;
  double alpha = 1.942;
  double r0 = 0.742;
};

/// Coulomb integral Q(r) of the LEPS model.
double leps_q(double r, double d, double alpha, double r0);
/// Exchange integral J(r) of the LEPS model.
double leps_j(double r, double d, double alpha, double r0);

/// Collinear three-atom LEPS surface in (r_AB, r_BC); r_AC = r_AB + r_BC.
/// Nonpositive distances raise DomainError.
Objective leps(const LepsParams& p = {});

/// Eckhardt surface: three Gaussians plus y^2/2; analytic gradient and Hessian.
Objective eckhardt();

/// Lennard-Jones pair energy with epsilon = r0 = 1.
double lj_pair(double r);

/// Three-atom LJ cluster in reduced coordinates (x2, x3, y3): atom 1 at the
/// origin, atom 2 at (x2, 0, 0), atom 3 at (x3, y3, 0).
Objective lj3_reduced();
/// Embeds reduced (x2, x3, y3) into full 9 coordinates.
Vec lj3_embed(const Vec& reduced);

/// Full-coordinate LJ cluster, d = 3 * n_atoms, atom-major layout (x1, y1, z1, x2, ...).
Objective lj_cluster(int n_atoms);

// ---------------------------------------------------------------------------
// Pair-potential clusters (LJ and Morse) with movable and fixed atoms.

struct PairPotential {
  enum class Kind { lennard_jones, morse };
  Kind kind = Kind::lennard_jones;
  double depth = 1.0;   // epsilon (LJ) or A (Morse)
  double alpha = 1.0;   // Morse width
  double r0 = 1.0;      // equilibrium distance
  double cutoff = std::numeric_limits<double>::infinity();

  /// Raw pair energy and its first two derivatives (before cut-and-shift).
  double raw(double r) const;
  double raw_d1(double r) const;
  double raw_d2(double r) const;
  /// Cut-and-shifted energy: raw(r) - raw(cutoff) inside the cutoff, zero outside.
  double energy(double r) const;
  double d1(double r) const;
  double d2(double r) const;
  bool in_range(double r) const { return r < cutoff; }
};

/// Atoms in 3-D; only `movable` atoms carry variables (atom-major, 3 per atom).
/// Energy counts every pair with at least one movable atom once, plus the
/// constant fixed-fixed contribution.
class PairCluster {
 public:
  PairCluster(Mat positions, std::vector<bool> movable, PairPotential pot);

  Index atom_count() const { return positions_.cols(); }
  Index movable_count() const { return static_cast<Index>(movable_idx_.size()); }
  Index dim() const { return 3 * movable_count(); }
  const Mat& positions() const { return positions_; }
  const std::vector<Index>& movable_atoms() const { return movable_idx_; }
  const PairPotential& potential() const { return pot_; }
  double fixed_energy() const { return fixed_energy_; }

  Vec initial_variables() const;
  /// All atom positions (3 x N) with movable atoms taken from `vars`.
  Mat positions_for(const Vec& vars) const;

  double energy(const Vec& vars) const;
  Vec gradient(const Vec& vars) const;
  Mat hessian(const Vec& vars) const;

  /// Straightforward pair-loop kernels kept as the reference for the parallel path.
  double energy_serial(const Vec& vars) const;
  Vec gradient_serial(const Vec& vars) const;

  Objective objective(std::string name) const;

 private:
  void check_pair(double r, Index i, Index j) const;

  Mat positions_;
  std::vector<bool> movable_;
  std::vector<Index> movable_idx_;
  std::vector<Index> slot_;  // atom -> variable slot or -1
  PairPotential pot_;
  double fixed_energy_ = 0.0;
};

struct SlabConfig {
  int layers = 6;
  int atoms_per_layer = 56;
  int fixed_layers = 3;
  double lattice_constant = 2.74;  // nearest-neighbour distance, Angstrom
  int island_size = 7;
  double cutoff = 9.5;
  double morse_a = 0.71;
  double morse_alpha = 1.61;
  double morse_r0 = 2.9;

  /// Paper-scale heptamer system (d = 525).
  static SlabConfig paper_scale() { return {}; }
  /// Small slab for quick tests: 3 layers x 20 atoms, bottom layer fixed.
  static SlabConfig desk_scale() {
    SlabConfig c;
    c.layers = 3;
    c.atoms_per_layer = 20;
    c.fixed_layers = 1;
    return c;
  }
};

/// FCC(111) slab with an adatom island in fcc hollow sites on top.
struct MorseSlab {
  SlabConfig config;
  PairCluster cluster;
  std::vector<int> layer_of;        // per atom; island atoms have layer == config.layers
  std::vector<Index> island_atoms;  // atom indices of the island
  Eigen::Vector3d lattice_a1;       // in-plane nearest-neighbour vectors
  Eigen::Vector3d lattice_a2;
  Objective objective;

  /// Variable vector with the island rigidly shifted by `shift` (other atoms untouched).
  Vec shift_island(const Vec& vars, const Eigen::Vector3d& shift) const;
  /// Variable vector with one island atom displaced.
  Vec move_atom(const Vec& vars, Index atom, const Eigen::Vector3d& shift) const;
  /// XYZ-format text (count line, comment line, then "element x y z").
  std::string to_xyz(const Vec& vars, const std::string& comment = "") const;
};

/// Builds the slab; throws ParameterError for invalid geometry.
MorseSlab morse_slab(const SlabConfig& cfg);

/// Atom-wise RMSD between two configurations (coords_per_atom consecutive entries per atom).
double rmsd(const Vec& a, const Vec& b, int coords_per_atom = 3);

}  // namespace ttech::surfaces

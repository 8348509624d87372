#pragma once

#include "needlesim/linear_solver.hpp"
#include "needlesim/t_junctions.hpp"
#include "needlesim/tissue.hpp"

namespace needlesim {

/// A = M + tau C + tau^2 K and b = tau f - tau^2 K v for one backward Euler
/// step; f already contains f_ext - f_int - C v.
struct SystemMatrices {
  SparseMatrix a;
  VecX b;
  double tau = 0.0;
};

SystemMatrices assemble_system(const SparseMatrix& m, const SparseMatrix& c, const SparseMatrix& k,
                               const VecX& f, const VecX& v, double tau);

/// Row/column masking of Dirichlet DOFs with unit diagonal. `value` gives
/// the prescribed solution at fixed DOFs (may be empty for zero).
void apply_dirichlet(SparseMatrix& a, VecX& b, const std::vector<char>& fixed,
                     const VecX& value = VecX());
void apply_dirichlet(MatX& a, VecX& b, const std::vector<char>& fixed, const VecX& value = VecX());

/// Factorises `system.a` and returns dv with A dv = b.
VecX solve_free_motion(SpdSolver& solver, const SystemMatrices& system);

/// v += dv, then x += tau v. Throws NumericalFailure on non-finite input.
void commit_step(MechanicalState& state, const VecX& dv, double tau);

enum class TJunctionMode { kCondensed, kLagrange };

/// Backward Euler for the tissue with Rayleigh damping, Dirichlet masking
/// and hanging-node handling. In condensed mode slave DOFs are eliminated
/// through u = P u_c; in Lagrange mode they stay in the system and the
/// caller adds the T rows to the constraint set.
class TissueIntegrator {
 public:
  void set_topology(const HexMesh& mesh, TJunctionMode mode);
  TJunctionMode mode() const { return mode_; }
  bool condensed() const { return mode_ == TJunctionMode::kCondensed && has_junctions_; }
  const SparseMatrix& prolongation() const { return p_; }
  const SparseMatrix& t_matrix() const { return t_; }

  /// Rotations, stiffness, system assembly, masking and factorisation, then
  /// the unconstrained velocity change.
  const VecX& prepare(TissueModel& model, const MechanicalState& state, const VecX& f_ext,
                      double tau);
  const VecX& dv_free() const { return dv_free_; }

  /// A^{-1} applied to each column of `rhs` (full DOF space), honouring the
  /// Dirichlet mask and the condensation.
  MatX solve(const MatX& rhs) const;

  /// Fixed flags after closing over hanging nodes (a slave counts as fixed
  /// only if all its masters are).
  const std::vector<char>& effective_fixed() const { return fixed_; }

 private:
  VecX restrict_vec(const VecX& full) const;
  VecX prolong_vec(const VecX& reduced) const;

  TJunctionMode mode_ = TJunctionMode::kCondensed;
  bool has_junctions_ = false;
  std::vector<FlatJunction> flat_;
  SparseMatrix p_;
  SparseMatrix t_;
  std::vector<char> fixed_;          // full space
  std::vector<char> reduced_fixed_;  // system space
  SparseMatrix a_;
  SpdSolver solver_;
  VecX dv_free_;
  bool topology_changed_ = true;
};

/// Kinetic plus elastic energy of the tissue (rotations are refreshed).
double total_energy(TissueModel& model, const MechanicalState& state);

struct StaticSolveReport {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Newton iterations on f_int(x) = f_ext with fixed DOFs held at
/// x0 + prescribed; hanging nodes follow their masters.
StaticSolveReport solve_static(TissueModel& model, MechanicalState& state, const HexMesh& mesh,
                               const VecX& f_ext, double tol = 1e-10, int max_iterations = 50);

}  // namespace needlesim

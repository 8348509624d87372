#pragma once

#include "needlesim/t_junctions.hpp"
#include "needlesim/types.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace needlesim {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Contiguous group of constraint rows sharing one admissible set.
///
/// Bounds are `cap + mu * |lambda[ref]|` where `ref` lists rows whose
/// multiplier magnitude scales the bound (the normal rows of a friction law).
struct ConstraintBlock {
  enum class Type {
    kBilateral,     // unrestricted
    kUnilateral,    // 0 <= lambda <= bound (single row)
    kFriction,      // |lambda| <= bound (single row)
    kFrictionDisc,  // ||lambda|| <= bound (two rows)
  };
  Type type = Type::kBilateral;
  int first = 0;
  int size = 1;
  double cap = kUnbounded;
  double mu = 0.0;
  std::vector<int> ref;

  static ConstraintBlock bilateral(int row) { return {Type::kBilateral, row, 1, kUnbounded, 0.0, {}}; }
  static ConstraintBlock unilateral(int row, double cap = kUnbounded, double mu = 0.0,
                                    std::vector<int> ref = {}) {
    return {Type::kUnilateral, row, 1, cap, mu, std::move(ref)};
  }
  static ConstraintBlock friction(int row, double mu, std::vector<int> ref, double cap = 0.0) {
    return {Type::kFriction, row, 1, cap, mu, std::move(ref)};
  }
  static ConstraintBlock friction_disc(int row, double mu, std::vector<int> ref) {
    return {Type::kFrictionDisc, row, 2, 0.0, mu, std::move(ref)};
  }

  double bound(const VecX& lambda) const;
};

struct PgsOptions {
  double tolerance = 1e-8;  // max per-row multiplier change
  int max_iterations = 500;
  /// Multiplier slack used when reporting saturated bounds.
  double saturation_tolerance = 1e-10;
};

struct PgsResult {
  VecX lambda;
  int iterations = 0;
  bool converged = false;
  double max_change = 0.0;
  bool regularised = false;
  /// Per block: multiplier sits on a finite upper bound.
  std::vector<char> saturated;
};

/// Finds lambda such that the post-solve constraint velocity
/// u = b + W lambda satisfies each block's law relative to `target`.
/// Bilateral rows that no bound depends on are eliminated exactly by a
/// dense Schur complement; the remaining rows are swept by projected
/// Gauss-Seidel.
PgsResult pgs_solve(const MatX& w, const VecX& b, const VecX& target,
                    const std::vector<ConstraintBlock>& blocks, const PgsOptions& options = {},
                    const VecX* warm_start = nullptr);

/// One body taking part in the constraint solve: its constraint Jacobian,
/// its free-motion velocity and a solver for its system matrix.
struct BodyBlock {
  SparseMatrix jacobian;  // rows x body DOFs
  VecX v_free;
  std::function<MatX(const MatX&)> solve;
};

struct CoupledSystem {
  MatX w;                     // sum_k J_k A_k^-1 J_k^T
  VecX free_velocity;         // sum_k J_k v_free_k
  std::vector<MatX> response; // A_k^-1 J_k^T
};

CoupledSystem assemble_coupled(const std::vector<BodyBlock>& bodies, int rows);

struct CoupledSolution {
  PgsResult pgs;
  std::vector<VecX> dv;  // correction per body
};

CoupledSolution solve_constraints(const CoupledSystem& system,
                                  const std::vector<ConstraintBlock>& blocks, const VecX& target,
                                  const PgsOptions& options = {},
                                  const VecX* warm_start = nullptr);

}  // namespace needlesim

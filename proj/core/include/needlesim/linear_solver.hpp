#pragma once

#include "needlesim/types.hpp"

#include <Eigen/SparseCore>

#include <memory>

namespace needlesim {

/// Sparse symmetric positive-definite direct solver. The symbolic analysis is
/// reused while the sparsity pattern (size and non-zero count) is unchanged.
class SpdSolver {
 public:
  SpdSolver();
  ~SpdSolver();
  SpdSolver(SpdSolver&&) noexcept;
  SpdSolver& operator=(SpdSolver&&) noexcept;

  /// Throws NumericalFailure when the matrix is not positive definite.
  void factorize(const Eigen::SparseMatrix<double>& a);
  VecX solve(const VecX& b) const;
  MatX solve(const MatX& b) const;

  /// Forces a fresh symbolic analysis on the next factorisation.
  void invalidate_pattern() { pattern_nnz_ = -1; }

  Eigen::Index rows() const { return rows_; }
  static const char* backend();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Eigen::Index rows_ = 0;
  Eigen::Index pattern_nnz_ = -1;
};

}  // namespace needlesim

#include "needlesim/linear_solver.hpp"

#ifdef NEEDLESIM_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#else
#include <Eigen/SparseCholesky>
#endif

namespace needlesim {

struct SpdSolver::Impl {
#ifdef NEEDLESIM_HAVE_CHOLMOD
  Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt;
#else
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt;
#endif
};

SpdSolver::SpdSolver() : impl_(std::make_unique<Impl>()) {}
SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

const char* SpdSolver::backend() {
#ifdef NEEDLESIM_HAVE_CHOLMOD
  return "cholmod-supernodal";
#else
  return "eigen-simplicial-ldlt";
#endif
}

void SpdSolver::factorize(const Eigen::SparseMatrix<double>& a) {
  if (a.rows() != rows_ || a.nonZeros() != pattern_nnz_) {
    impl_->llt.analyzePattern(a);
    rows_ = a.rows();
    pattern_nnz_ = a.nonZeros();
  }
  impl_->llt.factorize(a);
  if (impl_->llt.info() != Eigen::Success) {
    pattern_nnz_ = -1;
    throw NumericalFailure("system matrix is not positive definite (insufficient boundary conditions?)");
  }
}

VecX SpdSolver::solve(const VecX& b) const {
  if (b.size() != rows_) throw InvalidInput("SpdSolver::solve: size mismatch");
  VecX x = impl_->llt.solve(b);
  return x;
}

MatX SpdSolver::solve(const MatX& b) const {
  if (b.rows() != rows_) throw InvalidInput("SpdSolver::solve: size mismatch");
  if (b.cols() == 0) return MatX(rows_, 0);
  MatX x = impl_->llt.solve(b);
  return x;
}

}  // namespace needlesim

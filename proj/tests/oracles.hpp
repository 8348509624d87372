#pragma once

#include "needlesim/coupled_solver.hpp"

#include <Eigen/LU>

#include <cmath>
#include <vector>

namespace needlesim::testing {

// Exhaustive regime enumeration for scalar blocks whose bounds reference
// unilateral rows only, so every regime is a linear system.
inline std::vector<VecX> enumerate_regimes(const MatX& w, const VecX& b, const VecX& target,
                                           const std::vector<ConstraintBlock>& blocks) {
  const auto n = static_cast<int>(w.rows());
  std::vector<VecX> feasible;
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  const double tol = 1e-9;
  for (int c = 0; c < combos; ++c) {
    std::vector<int> regime(n);
    for (int i = 0, r = c; i < n; ++i, r /= 3) regime[i] = r % 3;
    MatX m = MatX::Zero(n, n);
    VecX rhs = VecX::Zero(n);
    bool valid = true;
    for (const auto& blk : blocks) {
      const int i = blk.first;
      const int g = regime[i];
      auto equality = [&] {
        m.row(i) = w.row(i);
        rhs[i] = target[i] - b[i];
      };
      auto at_bound = [&](double sign) {
        if (!std::isfinite(blk.cap)) {
          valid = false;
          return;
        }
        m(i, i) = 1.0;
        for (int r : blk.ref) m(i, r) -= sign * blk.mu;
        rhs[i] = sign * blk.cap;
      };
      switch (blk.type) {
        case ConstraintBlock::Type::kBilateral:
          if (g != 0) valid = false;
          equality();
          break;
        case ConstraintBlock::Type::kUnilateral:
          if (g == 0) equality();
          if (g == 1) m(i, i) = 1.0;
          if (g == 2) at_bound(1.0);
          break;
        default:
          if (g == 0) equality();
          if (g == 1) at_bound(1.0);
          if (g == 2) at_bound(-1.0);
          break;
      }
    }
    if (!valid) continue;
    Eigen::FullPivLU<MatX> lu(m);
    if (!lu.isInvertible()) continue;
    const VecX lambda = lu.solve(rhs);
    const VecX u = b + w * lambda;
    bool ok = true;
    for (const auto& blk : blocks) {
      const int i = blk.first;
      const double bnd = blk.bound(lambda);
      const double r = u[i] - target[i];
      switch (blk.type) {
        case ConstraintBlock::Type::kBilateral:
          break;
        case ConstraintBlock::Type::kUnilateral:
          ok &= bnd >= -tol && lambda[i] >= -tol && lambda[i] <= bnd + tol;
          if (regime[i] == 1) ok &= r >= -tol;
          if (regime[i] == 2) ok &= r <= tol;
          break;
        default:
          ok &= bnd >= -tol && std::abs(lambda[i]) <= bnd + tol;
          if (regime[i] == 1) ok &= r <= tol;
          if (regime[i] == 2) ok &= r >= -tol;
          break;
      }
    }
    if (ok) feasible.push_back(lambda);
  }
  return feasible;
}

}  // namespace needlesim::testing

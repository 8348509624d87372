#include "needlesim/coupled_solver.hpp"

#include "needlesim/log.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace needlesim {

double ConstraintBlock::bound(const VecX& lambda) const {
  double r = 0.0;
  for (int i : ref) r += lambda[i] * lambda[i];
  return cap + mu * std::sqrt(r);
}

namespace {

using Type = ConstraintBlock::Type;

// Sweeps over `blocks` with rows given in the reduced numbering.
void sweep_blocks(const MatX& w, VecX& u, VecX& lambda, const VecX& target,
                  const std::vector<ConstraintBlock>& blocks, double& max_change) {
  for (const auto& blk : blocks) {
    if (blk.size == 2) {
      const int i = blk.first;
      // Scalar step 1/lambda_max(W_bb): with a full 2x2 solve the fixed point
      // would oppose slip only in the W_bb metric, not isotropically.
      const double a = w(i, i), c = w(i + 1, i + 1), off = w(i, i + 1);
      const double top = 0.5 * (a + c) + std::hypot(0.5 * (a - c), off);
      if (!(top > 0.0)) continue;
      const Eigen::Vector2d res = target.segment<2>(i) - u.segment<2>(i);
      Eigen::Vector2d trial = lambda.segment<2>(i) + res / top;
      const double radius = std::max(0.0, blk.bound(lambda));
      const double norm = trial.norm();
      if (norm > radius) trial *= (norm > 0.0 ? radius / norm : 0.0);
      const Eigen::Vector2d delta = trial - lambda.segment<2>(i);
      if (delta.squaredNorm() > 0.0) {
        u.noalias() += w.middleCols<2>(i) * delta;
        lambda.segment<2>(i) = trial;
      }
      max_change = std::max(max_change, delta.cwiseAbs().maxCoeff());
      continue;
    }
    const int i = blk.first;
    const double wii = w(i, i);
    if (!(wii > 0.0)) continue;
    double trial = lambda[i] + (target[i] - u[i]) / wii;
    switch (blk.type) {
      case Type::kBilateral:
        break;
      case Type::kUnilateral:
        trial = std::clamp(trial, 0.0, std::max(0.0, blk.bound(lambda)));
        break;
      case Type::kFriction:
      case Type::kFrictionDisc: {
        const double bnd = std::max(0.0, blk.bound(lambda));
        trial = std::clamp(trial, -bnd, bnd);
        break;
      }
    }
    const double delta = trial - lambda[i];
    if (delta != 0.0) {
      u.noalias() += w.col(i) * delta;
      lambda[i] = trial;
    }
    max_change = std::max(max_change, std::abs(delta));
  }
}

}  // namespace

PgsResult pgs_solve(const MatX& w_in, const VecX& b, const VecX& target,
                    const std::vector<ConstraintBlock>& blocks, const PgsOptions& options,
                    const VecX* warm_start) {
  const auto m = w_in.rows();
  PgsResult result;
  result.lambda = VecX::Zero(m);
  result.saturated.assign(blocks.size(), 0);
  if (m == 0) {
    result.converged = true;
    return result;
  }
  if (w_in.cols() != m || b.size() != m || target.size() != m)
    throw InvalidInput("pgs_solve: inconsistent sizes");

  // Rows whose multipliers feed a bound must stay in the sweep.
  std::vector<char> referenced(static_cast<std::size_t>(m), 0);
  for (const auto& blk : blocks)
    for (int r : blk.ref) referenced[r] = 1;
  std::vector<int> elim, keep;
  std::vector<const ConstraintBlock*> kept_blocks;
  for (const auto& blk : blocks) {
    const bool eliminate = blk.type == Type::kBilateral && !referenced[blk.first];
    for (int k = 0; k < blk.size; ++k) (eliminate ? elim : keep).push_back(blk.first + k);
    if (!eliminate) kept_blocks.push_back(&blk);
  }

  MatX w = w_in;
  const double trace = w.trace();
  auto regularise = [&] {
    const double shift = 1e-10 * std::max(trace, 1e-300) / static_cast<double>(m);
    w.diagonal().array() += shift;
    result.regularised = true;
    log::info("compliance matrix regularised with diagonal shift ", shift);
  };
  for (Eigen::Index i = 0; i < m; ++i)
    if (!(w(i, i) > 1e-14 * std::abs(trace) / static_cast<double>(m))) {
      regularise();
      break;
    }

  const auto ne = static_cast<Eigen::Index>(elim.size());
  const auto nk = static_cast<Eigen::Index>(keep.size());
  auto gather = [&](const std::vector<int>& rows, const std::vector<int>& cols) {
    MatX out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = w(rows[i], cols[j]);
    return out;
  };
  auto pick = [](const VecX& v, const std::vector<int>& rows) {
    VecX out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = v[rows[i]];
    return out;
  };

  Eigen::LLT<MatX> wee_llt;
  MatX wek, wee_inv_wek;
  VecX wee_inv_res;
  if (ne > 0) {
    MatX wee = gather(elim, elim);
    wee_llt.compute(wee);
    if (wee_llt.info() != Eigen::Success) {
      if (!result.regularised) regularise();
      wee = gather(elim, elim);
      wee_llt.compute(wee);
      if (wee_llt.info() != Eigen::Success)
        throw NumericalFailure("bilateral constraint block is singular");
    }
    wek = gather(elim, keep);
    wee_inv_wek = wee_llt.solve(wek);
    wee_inv_res = wee_llt.solve(VecX(pick(target, elim) - pick(b, elim)));
  }

  // Reduced problem over the kept rows.
  VecX lambda_k = VecX::Zero(nk);
  if (nk > 0) {
    MatX wkk = gather(keep, keep);
    VecX bk = pick(b, keep);
    if (ne > 0) {
      wkk -= wek.transpose() * wee_inv_wek;
      bk += wek.transpose() * wee_inv_res;
    }
    const VecX tk = pick(target, keep);
    std::vector<int> position(static_cast<std::size_t>(m), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) position[keep[i]] = static_cast<int>(i);
    std::vector<ConstraintBlock> local;
    local.reserve(kept_blocks.size());
    for (const auto* blk : kept_blocks) {
      ConstraintBlock c = *blk;
      c.first = position[blk->first];
      for (int& r : c.ref) r = position[r];
      local.push_back(std::move(c));
    }
    if (warm_start && warm_start->size() == m) lambda_k = pick(*warm_start, keep);
    VecX u = bk + wkk * lambda_k;
    for (int it = 0; it < options.max_iterations; ++it) {
      double change = 0.0;
      sweep_blocks(wkk, u, lambda_k, tk, local, change);
      result.iterations = it + 1;
      result.max_change = change;
      if (change < options.tolerance) {
        result.converged = true;
        break;
      }
    }
    if (!result.converged)
      log::info("PGS stopped at ", result.iterations, " iterations (max change ",
                result.max_change, ")");
  } else {
    result.converged = true;
  }

  for (Eigen::Index i = 0; i < nk; ++i) result.lambda[keep[i]] = lambda_k[i];
  if (ne > 0) {
    const VecX lambda_e = wee_inv_res - wee_inv_wek * lambda_k;
    for (Eigen::Index i = 0; i < ne; ++i) result.lambda[elim[i]] = lambda_e[i];
  }

  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& blk = blocks[k];
    if (blk.type == Type::kBilateral) continue;
    const double bnd = blk.bound(result.lambda);
    if (!std::isfinite(bnd)) continue;
    const double mag = blk.size == 2 ? result.lambda.segment<2>(blk.first).norm()
                                     : std::abs(result.lambda[blk.first]);
    result.saturated[k] = mag >= bnd - options.saturation_tolerance ? 1 : 0;
  }
  return result;
}

CoupledSystem assemble_coupled(const std::vector<BodyBlock>& bodies, int rows) {
  CoupledSystem sys;
  sys.w = MatX::Zero(rows, rows);
  sys.free_velocity = VecX::Zero(rows);
  for (const auto& body : bodies) {
    if (body.jacobian.rows() != rows) throw InvalidInput("assemble_coupled: Jacobian row mismatch");
    MatX response;
    if (rows > 0 && body.jacobian.nonZeros() > 0) {
      response = body.solve(MatX(body.jacobian.transpose()));
      sys.w.noalias() += body.jacobian * response;
    } else {
      response = MatX::Zero(body.jacobian.cols(), rows);
    }
    sys.free_velocity += body.jacobian * body.v_free;
    sys.response.push_back(std::move(response));
  }
  sys.w = 0.5 * (sys.w + sys.w.transpose()).eval();
  return sys;
}

CoupledSolution solve_constraints(const CoupledSystem& system,
                                  const std::vector<ConstraintBlock>& blocks, const VecX& target,
                                  const PgsOptions& options, const VecX* warm_start) {
  CoupledSolution sol;
  sol.pgs = pgs_solve(system.w, system.free_velocity, target, blocks, options, warm_start);
  for (const auto& r : system.response) sol.dv.push_back(r * sol.pgs.lambda);
  return sol;
}

}  // namespace needlesim

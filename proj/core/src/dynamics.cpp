#include "needlesim/dynamics.hpp"

#include "needlesim/log.hpp"

#include <Eigen/Cholesky>

namespace needlesim {

SystemMatrices assemble_system(const SparseMatrix& m, const SparseMatrix& c, const SparseMatrix& k,
                               const VecX& f, const VecX& v, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("time step must be positive");
  SystemMatrices s;
  s.tau = tau;
  s.a = m + tau * c + (tau * tau) * k;
  s.b = tau * f - (tau * tau) * (k * v);
  return s;
}

void apply_dirichlet(SparseMatrix& a, VecX& b, const std::vector<char>& fixed, const VecX& value) {
  const bool has_value = value.size() == b.size();
  for (int j = 0; j < a.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(a, j); it; ++it) {
      const auto i = it.row();
      if (fixed[j] && !fixed[i] && has_value) b[i] -= it.value() * value[j];
      if (fixed[i] || fixed[j]) it.valueRef() = (i == j) ? 1.0 : 0.0;
    }
  }
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (fixed[i]) b[i] = has_value ? value[i] : 0.0;
}

void apply_dirichlet(MatX& a, VecX& b, const std::vector<char>& fixed, const VecX& value) {
  const bool has_value = value.size() == b.size();
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (!fixed[j]) continue;
    if (has_value) b -= a.col(j) * value[j];
    a.col(j).setZero();
    a.row(j).setZero();
    a(j, j) = 1.0;
  }
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (fixed[i]) b[i] = has_value ? value[i] : 0.0;
}

VecX solve_free_motion(SpdSolver& solver, const SystemMatrices& system) {
  solver.factorize(system.a);
  return solver.solve(system.b);
}

void commit_step(MechanicalState& state, const VecX& dv, double tau) {
  if (!dv.allFinite()) {
    std::ostringstream os;
    os << "non-finite velocity update; |x|=" << state.x.norm() << " |v|=" << state.v.norm();
    throw NumericalFailure(os.str());
  }
  state.v += dv;
  state.x += tau * state.v;
}

void TissueIntegrator::set_topology(const HexMesh& mesh, TJunctionMode mode) {
  mode_ = mode;
  flat_ = flatten_t_junctions(mesh.t_junctions);
  has_junctions_ = !flat_.empty();
  p_ = build_prolongation(mesh.t_junctions, mesh.nodes.size());
  t_ = build_t_matrix(mesh.t_junctions, mesh.nodes.size());
  topology_changed_ = true;
  solver_.invalidate_pattern();
}

VecX TissueIntegrator::restrict_vec(const VecX& full) const {
  return condensed() ? VecX(p_.transpose() * full) : full;
}

VecX TissueIntegrator::prolong_vec(const VecX& reduced) const {
  return condensed() ? VecX(p_ * reduced) : reduced;
}

const VecX& TissueIntegrator::prepare(TissueModel& model, const MechanicalState& state,
                                      const VecX& f_ext, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("time step must be positive");
  const auto n = static_cast<Eigen::Index>(model.num_dofs());
  if (state.x.size() != n || p_.rows() != n)
    throw InvalidInput("TissueIntegrator: state and topology disagree");

  fixed_ = state.fixed;
  for (const auto& fj : flat_)
    for (int d = 0; d < 3; ++d) {
      bool all = true;
      for (const auto& [m, w] : fj.masters) all = all && state.fixed[3 * m + d];
      fixed_[3 * fj.slave + d] = all ? 1 : 0;
    }

  model.update_rotations(state.x);
  const SparseMatrix& k = model.assemble_stiffness();
  const Material& mat = model.material();
  const VecX m = model.dof_mass();
  const double ca = 1.0 + tau * mat.rayleigh_mass;
  const double ck = tau * mat.rayleigh_stiffness + tau * tau;

  const VecX kv = k * state.v;
  const VecX f = f_ext - model.internal_force(state.x) - mat.rayleigh_mass * m.cwiseProduct(state.v) -
                 mat.rayleigh_stiffness * kv;
  VecX b = tau * f - tau * tau * kv;

  SparseMatrix a = ck * k;
  for (Eigen::Index i = 0; i < n; ++i) a.coeffRef(i, i) += ca * m[i];

  // Prescribed velocity change that lands fixed DOFs on x0 + prescribed.
  VecX target = (state.x0 + state.prescribed - state.x) / tau - state.v;

  if (condensed()) {
    a_ = p_.transpose() * a * p_;
    b = p_.transpose() * b;
    const auto nr = p_.cols();
    reduced_fixed_.assign(static_cast<std::size_t>(nr), 0);
    VecX reduced_target = VecX::Zero(nr);
    for (int j = 0; j < p_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(p_, j); it; ++it)
        if (it.value() == 1.0 && fixed_[it.row()]) {
          // Conforming-node columns carry a single unit entry on their own DOF.
          reduced_fixed_[j] = 1;
          reduced_target[j] = target[it.row()];
        }
    apply_dirichlet(a_, b, reduced_fixed_, reduced_target);
  } else {
    a_ = std::move(a);
    reduced_fixed_ = fixed_;
    apply_dirichlet(a_, b, reduced_fixed_, target);
  }
  if (topology_changed_) {
    solver_.invalidate_pattern();
    topology_changed_ = false;
  }
  solver_.factorize(a_);
  dv_free_ = prolong_vec(solver_.solve(b));
  return dv_free_;
}

MatX TissueIntegrator::solve(const MatX& rhs) const {
  MatX r = condensed() ? MatX(p_.transpose() * rhs) : rhs;
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    if (reduced_fixed_[i]) r.row(i).setZero();
  MatX y = solver_.solve(r);
  return condensed() ? MatX(p_ * y) : y;
}

double total_energy(TissueModel& model, const MechanicalState& state) {
  model.update_rotations(state.x);
  const VecX m = model.dof_mass();
  return 0.5 * state.v.dot(m.cwiseProduct(state.v)) + model.elastic_energy(state.x);
}

StaticSolveReport solve_static(TissueModel& model, MechanicalState& state, const HexMesh& mesh,
                               const VecX& f_ext, double tol, int max_iterations) {
  StaticSolveReport report;
  const SparseMatrix p = build_prolongation(mesh.t_junctions, mesh.nodes.size());
  const auto n = static_cast<Eigen::Index>(model.num_dofs());
  const auto nr = p.cols();
  std::vector<char> rfixed(static_cast<std::size_t>(nr), 0);
  VecX start = VecX::Zero(nr);
  for (int j = 0; j < p.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(p, j); it; ++it)
      if (it.value() == 1.0 && state.fixed[it.row()]) {
        rfixed[j] = 1;
        start[j] = state.x0[it.row()] + state.prescribed[it.row()] - state.x[it.row()];
      }
  // Move the fixed DOFs onto their prescribed values first.
  state.x += p * start;

  const double length = mesh.grid.cell_size();
  SpdSolver solver;
  for (int it = 0; it < max_iterations; ++it) {
    model.update_rotations(state.x);
    VecX r = p.transpose() * (f_ext - model.internal_force(state.x));
    SparseMatrix k = p.transpose() * model.assemble_stiffness() * p;
    apply_dirichlet(k, r, rfixed);
    solver.factorize(k);
    const VecX du = solver.solve(r);
    state.x += p * du;
    report.iterations = it + 1;
    report.residual = r.norm();
    if (du.cwiseAbs().maxCoeff() <= tol * length) {
      report.converged = true;
      break;
    }
  }
  if (n > 0 && !report.converged)
    log::warn("static solve stopped after ", report.iterations, " iterations (residual ",
              report.residual, ")");
  state.v.setZero();
  return report;
}

}  // namespace needlesim

#include "helpers.hpp"

#include "needlesim/adaptivity.hpp"
#include "needlesim/dynamics.hpp"
#include "needlesim/spr.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace needlesim;
using namespace needlesim::testing;

namespace {

HexMesh graded_phantom() {
  HexMesh mesh = phantom_mesh();
  for (ElementId e : {0, 9, 37, 38, 70, 127}) refine_element(mesh, e);
  refresh_junctions(mesh);
  refine_element(mesh, mesh.elements[38].children[6]);
  refresh_junctions(mesh);
  return mesh;
}

std::vector<Vec3> centres_of(const HexMesh& mesh, const std::vector<ElementId>& elements) {
  std::vector<Vec3> c;
  for (ElementId e : elements) c.push_back(mesh.rest_nodes(e).rowwise().mean());
  return c;
}

void fix_where(const HexMesh& mesh, MechanicalState& s, auto pred) {
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n)
    if (pred(mesh.nodes[n].rest)) s.fix_node(static_cast<NodeId>(n));
}

}  // namespace

TEST(Recovery, ReproducesLinearData) {
  const HexMesh mesh = graded_phantom();
  const auto elements = mesh.active_elements();
  const auto centres = centres_of(mesh, elements);
  auto f = [](const Vec3& p) { return Eigen::Vector2d(3.0 + 2.0 * p.x() - p.y() + 0.5 * p.z(), -1.0 + 4.0 * p.z()); };
  MatX values(static_cast<Eigen::Index>(elements.size()), 2);
  for (std::size_t k = 0; k < elements.size(); ++k) values.row(static_cast<Eigen::Index>(k)) = f(centres[k]).transpose();
  const MatX nodal = recover_nodal(mesh, elements, centres, values);
  std::set<NodeId> used;
  for (ElementId e : elements)
    for (NodeId n : mesh.elements[e].nodes) used.insert(n);
  for (NodeId n : used)
    EXPECT_LT((nodal.row(n).transpose() - f(mesh.nodes[n].rest)).norm(), 1e-12) << "node " << n;
}

TEST(Recovery, ReproducesConstantData) {
  const HexMesh mesh = phantom_mesh();
  const auto elements = mesh.active_elements();
  const MatX values = MatX::Constant(static_cast<Eigen::Index>(elements.size()), 3, 7.5);
  const MatX nodal = recover_nodal(mesh, elements, centres_of(mesh, elements), values);
  EXPECT_LT((nodal.array() - 7.5).abs().maxCoeff(), 1e-12);
}

TEST(Recovery, BeatsNearestCentreOnQuadraticData) {
  const HexMesh mesh = phantom_mesh();
  const auto elements = mesh.active_elements();
  const auto centres = centres_of(mesh, elements);
  auto f = [](const Vec3& p) { return 1e4 * (p.x() * p.x() + p.x() * p.y() - 2.0 * p.z() * p.z()); };
  MatX values(static_cast<Eigen::Index>(elements.size()), 1);
  for (std::size_t k = 0; k < elements.size(); ++k) values(static_cast<Eigen::Index>(k), 0) = f(centres[k]);
  const MatX nodal = recover_nodal(mesh, elements, centres, values);
  double spr = 0.0, nearest = 0.0;
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
    const Vec3& p = mesh.nodes[n].rest;
    std::size_t best = 0;
    for (std::size_t k = 1; k < centres.size(); ++k)
      if ((centres[k] - p).norm() < (centres[best] - p).norm()) best = k;
    spr = std::max(spr, std::abs(nodal(static_cast<Eigen::Index>(n), 0) - f(p)));
    nearest = std::max(nearest, std::abs(values(static_cast<Eigen::Index>(best), 0) - f(p)));
  }
  EXPECT_LT(spr, nearest);
}

TEST(Estimator, AffineFieldHasNoError) {
  const HexMesh mesh = graded_phantom();
  const TissueModel model(mesh, {10e6, 0.4, 1000, 0, 0});
  const Mat3 a = (Mat3() << 1e-3, 2e-4, -3e-4, 0, -5e-4, 1e-4, 2e-4, 0, 7e-4).finished();
  const Mat3 r = rotation(0.4, Vec3(1, -1, 2));
  MechanicalState s = MechanicalState::at_rest(mesh);
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n)
    s.x.segment<3>(3 * n) = r * (mesh.nodes[n].rest + a * mesh.nodes[n].rest) + Vec3(0.01, 0, -0.02);
  TissueModel m = model;
  m.update_rotations(s.x);
  const RecoveredField field = recover_spr(mesh, m, s.x);
  for (ElementId e : mesh.active_elements()) EXPECT_LE(field.eta[e], 1e-10) << "element " << e;
  EXPECT_LE(field.eta_max, 1e-10);
}

TEST(Estimator, ManufacturedMismatch) {
  const HexMesh mesh = unit_cube();
  const Material mat{1e3, 0.25, 1000, 0, 0};
  CorotationalElement el = make_element(mesh.rest_nodes(0), mat);
  const Mat3 eps = (Mat3() << 1e-3, 2e-4, 0, 2e-4, -4e-4, 1e-4, 0, 1e-4, 3e-4).finished();
  const hex::Nodes x = el.rest + eps * el.rest;
  extract_rotation(el, x);
  std::array<Mat3, 8> zero;
  zero.fill(Mat3::Zero());
  // The corotated strain matches eps to first order.
  const CentreSample c = centre_sample(el, x, mat);
  const double expected = std::sqrt((c.strain.array() * c.stress.array()).sum() * 1.0);
  EXPECT_NEAR(element_error(el, x, mat, zero, zero), expected, 1e-9 * expected);
  std::array<Mat3, 8> strain_s, stress_s;
  strain_s.fill(c.strain);
  stress_s.fill(c.stress);
  EXPECT_LE(element_error(el, x, mat, strain_s, stress_s), 1e-12 * expected);
}

TEST(Marking, ThresholdExamples) {
  EXPECT_EQ(mark_elements({1.0, 0.5, 0.2}, 0.3), (std::vector<int>{0, 1}));
  EXPECT_EQ(mark_elements({1.0, 0.59}, 0.6), (std::vector<int>{0}));
  EXPECT_EQ(mark_elements({0.4, 0.4, 0.4}, 0.9), (std::vector<int>{0, 1, 2}));
  EXPECT_TRUE(mark_elements({0.0, 0.0}, 0.3).empty());
  EXPECT_TRUE(mark_elements({}, 0.3).empty());
}

TEST(Marking, MonotoneInTheta) {
  std::mt19937 rng(12);
  std::exponential_distribution<double> d(1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> errors(40);
    for (double& e : errors) e = d(rng);
    std::vector<int> prev = mark_elements(errors, 0.05);
    for (double theta = 0.1; theta < 1.0; theta += 0.05) {
      const std::vector<int> cur = mark_elements(errors, theta);
      EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      prev = cur;
    }
  }
}

TEST(Marking, SkipsElementsAtMaxDepth) {
  HexMesh mesh = box_mesh(Vec3::Zero(), Vec3(2, 1, 1), {2, 1, 1}, 1);
  refine_element(mesh, 0);
  refresh_junctions(mesh);
  RecoveredField field;
  field.eta.assign(mesh.elements.size(), 1.0);
  field.eta_max = 1.0;
  const auto marked = mark_elements(mesh, field, 0.5);
  EXPECT_EQ(marked, (std::vector<ElementId>{1}));
}

TEST(Transfer, AffineVelocityIsExact) {
  HexMesh mesh = graded_phantom();
  MechanicalState s = MechanicalState::at_rest(mesh);
  const Mat3 g = (Mat3() << 1, 2, 3, -1, 0, 4, 2, -2, 1).finished();
  const Vec3 c(0.3, -0.1, 0.2);
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
    s.v.segment<3>(3 * n) = g * mesh.nodes[n].rest + c;
    s.x.segment<3>(3 * n) += 1e-3 * (g * mesh.nodes[n].rest);
  }
  const std::size_t before = mesh.nodes.size();
  const auto rep = refine_and_transfer(mesh, s, {5, 64, mesh.elements[38].children[0]});
  EXPECT_EQ(rep.refined, 3);
  EXPECT_EQ(rep.dofs_before, 3 * before);
  EXPECT_EQ(rep.dofs_after, 3 * mesh.nodes.size());
  for (std::size_t n = before; n < mesh.nodes.size(); ++n) {
    const Vec3& p = mesh.nodes[n].rest;
    EXPECT_LT((s.v.segment<3>(3 * n) - (g * p + c)).norm(), 1e-12);
    EXPECT_LT((s.x.segment<3>(3 * n) - (p + 1e-3 * (g * p))).norm(), 1e-12);
  }
  EXPECT_EQ(mesh.t_junctions, detect_t_junctions(mesh));
}

TEST(Transfer, SingleCubeAddsTemplateNodes) {
  HexMesh mesh = two_cubes();
  MechanicalState s = MechanicalState::at_rest(mesh);
  const auto rep = refine_and_transfer(mesh, s, {0});
  EXPECT_EQ(rep.new_nodes, 19u);
  EXPECT_EQ(mesh.num_active(), 9u);
  EXPECT_EQ(mesh.t_junctions.size(), 5u);
  EXPECT_NEAR(mesh.total_active_volume(), 2.0, 1e-14);
}

TEST(Adapt, ZeroErrorIsNoOp) {
  HexMesh mesh = phantom_mesh();
  MechanicalState s = MechanicalState::at_rest(mesh);
  const TissueModel model(mesh, {10e6, 0.4, 1000, 0, 0});
  const auto rep = adapt(mesh, s, model, 0.3);
  EXPECT_EQ(rep.marked, 0);
  EXPECT_EQ(rep.dofs_after, rep.dofs_before);
  EXPECT_EQ(mesh.nodes.size(), 225u);
}

TEST(Adapt, HangingNodesFollowMastersAfterStaticLoad) {
  std::mt19937 rng(31);
  HexMesh mesh = phantom_mesh();
  auto active = mesh.active_elements();
  std::shuffle(active.begin(), active.end(), rng);
  active.resize(active.size() / 5);
  for (ElementId e : active) refine_element(mesh, e);
  refresh_junctions(mesh);
  ASSERT_FALSE(mesh.t_junctions.empty());
  TissueModel model(mesh, {10e6, 0.4, 1000, 0, 0});
  MechanicalState s = MechanicalState::at_rest(mesh);
  fix_where(mesh, s, [](const Vec3& p) { return p.x() > 0.04 - 1e-12; });
  VecX f = model.dof_mass();
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] *= i % 3 == 2 ? -9.81 * 50.0 : 0.0;
  ASSERT_TRUE(solve_static(model, s, mesh, f).converged);
  double sag = 0.0;
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) sag = std::max(sag, -s.displacement(static_cast<NodeId>(n)).z());
  EXPECT_GT(sag, 1e-5);
  for (const auto& j : flatten_t_junctions(mesh.t_junctions)) {
    Vec3 interp = Vec3::Zero();
    for (const auto& [m, w] : j.masters) interp += w * s.displacement(m);
    EXPECT_LT((s.displacement(j.slave) - interp).norm(), 1e-8);
  }
}

TEST(Adapt, RefinementReducesErrorUnderPatchLoad) {
  // Uniform pressure on a small square of the top face: the finite-energy
  // analogue of a point load on a half-space.
  HexMesh mesh = box_mesh(Vec3::Zero(), Vec3(0.02, 0.02, 0.02), {4, 4, 4});
  const Material mat{1e4, 0.3, 1000, 0, 0};
  const double pressure = 10.0;
  auto solve = [&](const HexMesh& m) {
    TissueModel model(m, mat);
    MechanicalState s = MechanicalState::at_rest(m);
    fix_where(m, s, [](const Vec3& p) { return p.z() < 1e-12; });
    VecX f = VecX::Zero(s.x.size());
    for (ElementId e : m.active_elements()) {
      const hex::Nodes x = m.rest_nodes(e);
      const Vec3 lo = x.rowwise().minCoeff(), hi = x.rowwise().maxCoeff();
      if (hi.z() < 0.02 - 1e-12 || lo.x() < 0.005 - 1e-12 || hi.x() > 0.015 + 1e-12 ||
          lo.y() < 0.005 - 1e-12 || hi.y() > 0.015 + 1e-12)
        continue;
      const double share = pressure * (hi.x() - lo.x()) * (hi.y() - lo.y()) / 4.0;
      for (NodeId n : m.elements[e].nodes)
        if (m.nodes[n].rest.z() > 0.02 - 1e-12) f[3 * n + 2] -= share;
    }
    EXPECT_TRUE(solve_static(model, s, m, f).converged);
    model.update_rotations(s.x);
    return recover_spr(m, model, s.x);
  };
  const RecoveredField before = solve(mesh);
  const std::vector<ElementId> marked = mark_elements(mesh, before, 0.5);
  ASSERT_FALSE(marked.empty());
  for (ElementId e : marked) refine_element(mesh, e);
  refresh_junctions(mesh);
  const RecoveredField after = solve(mesh);
  // Element errors are norms, so children combine as a root sum of squares.
  for (ElementId e : marked) {
    double children = 0.0;
    for (ElementId c : mesh.elements[e].children) children += after.eta[c] * after.eta[c];
    EXPECT_LE(std::sqrt(children), 1.05 * before.eta[e]) << "element " << e;
  }
  EXPECT_LT(after.global_error(), before.global_error());
}

TEST(Estimator, EffectivityOnStretchedBlock) {
  // Axial body load b on a bar clamped at x = 0 with nu = 0: the exact field
  // is u_x = b (L x - x^2 / 2) / E and the energy error follows from
  // a(u,u) - a(u_h,u_h).
  const double len = 0.04, area = 0.02 * 0.02, young = 1e4, body = 1.0;
  const Material mat{young, 0.0, 1000, 0, 0};
  for (int k : {1, 2, 4}) {
    const HexMesh mesh = box_mesh(Vec3::Zero(), Vec3(len, 0.02, 0.02), {8 * k, 4 * k, 4 * k});
    TissueModel model(mesh, mat);
    MechanicalState s = MechanicalState::at_rest(mesh);
    fix_where(mesh, s, [](const Vec3& p) { return p.x() < 1e-12; });
    VecX f = model.dof_mass() / mat.density;
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] *= i % 3 == 0 ? body : 0.0;
    ASSERT_TRUE(solve_static(model, s, mesh, f, 1e-12).converged);
    model.update_rotations(s.x);
    const double exact_energy = area * body * body * len * len * len / (3.0 * young);
    const double fe_energy = f.dot(s.x - s.x0);
    const double true_error = std::sqrt(std::max(exact_energy - fe_energy, 0.0));
    const double estimate = recover_spr(mesh, model, s.x).global_error();
    ASSERT_GT(true_error, 0.0);
    EXPECT_GT(estimate / true_error, 0.2) << "k = " << k;
    EXPECT_LT(estimate / true_error, 5.0) << "k = " << k;
  }
}

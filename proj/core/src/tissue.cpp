#include "needlesim/tissue.hpp"

#include <algorithm>

namespace needlesim {

MechanicalState MechanicalState::at_rest(const HexMesh& mesh) {
  MechanicalState s;
  const auto n = static_cast<Eigen::Index>(mesh.nodes.size());
  s.x0.resize(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) s.x0.segment<3>(3 * i) = mesh.nodes[i].rest;
  s.x = s.x0;
  s.v = VecX::Zero(3 * n);
  s.prescribed = VecX::Zero(3 * n);
  s.fixed.assign(static_cast<std::size_t>(3 * n), 0);
  return s;
}

void MechanicalState::fix_node(NodeId n, const Vec3& displacement) {
  for (int d = 0; d < 3; ++d) fixed[3 * n + d] = 1;
  prescribed.segment<3>(3 * n) = displacement;
}

VecX assemble_lumped_mass(const HexMesh& mesh, const Material& material) {
  if (!(material.density > 0.0)) throw InvalidInput("density must be positive");
  VecX m = VecX::Zero(static_cast<Eigen::Index>(mesh.nodes.size()));
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const HexElement& el = mesh.elements[e];
    if (!el.active) continue;
    const double vol = mesh.rest_volume(static_cast<ElementId>(e));
    if (!(vol > 0.0)) throw NumericalFailure("element " + std::to_string(e) + " has no volume");
    for (NodeId n : el.nodes) m[n] += material.density * vol / 8.0;
  }
  return m;
}

void TissueModel::rebuild(const HexMesh& mesh, const Material& material) {
  material.validate("tissue");
  material_ = material;
  num_nodes_ = mesh.nodes.size();
  active_ = mesh.active_elements();
  slot_.assign(mesh.elements.size(), -1);
  conn_.clear();
  elements_.clear();
  conn_.reserve(active_.size());
  elements_.reserve(active_.size());
  for (std::size_t k = 0; k < active_.size(); ++k) {
    slot_[active_[k]] = static_cast<int>(k);
    conn_.push_back(mesh.elements[active_[k]].nodes);
    elements_.push_back(make_element(mesh.rest_nodes(active_[k]), material));
  }
  mass_ = assemble_lumped_mass(mesh, material);

  const auto ndof = static_cast<Eigen::Index>(3 * num_nodes_);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(active_.size() * 576);
  for (const auto& c : conn_)
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) trips.emplace_back(3 * c[a] + i, 3 * c[b] + j, 0.0);
  // Every diagonal entry is present so that Dirichlet masking and mass terms
  // never need a structural change.
  for (Eigen::Index i = 0; i < ndof; ++i) trips.emplace_back(i, i, 0.0);
  stiffness_.resize(ndof, ndof);
  stiffness_.setFromTriplets(trips.begin(), trips.end());
  stiffness_.makeCompressed();

  offsets_.resize(active_.size() * 576);
  const int* outer = stiffness_.outerIndexPtr();
  const int* inner = stiffness_.innerIndexPtr();
  for (std::size_t k = 0; k < conn_.size(); ++k) {
    const auto& c = conn_[k];
    for (int b = 0; b < 24; ++b) {
      const int col = 3 * c[b / 3] + b % 3;
      for (int a = 0; a < 24; ++a) {
        const int row = 3 * c[a / 3] + a % 3;
        const int* first = inner + outer[col];
        const int* last = inner + outer[col + 1];
        offsets_[k * 576 + b * 24 + a] = static_cast<int>(std::lower_bound(first, last, row) - inner);
      }
    }
  }
}

VecX TissueModel::dof_mass() const {
  VecX m(3 * mass_.size());
  for (Eigen::Index i = 0; i < mass_.size(); ++i) m.segment<3>(3 * i).setConstant(mass_[i]);
  return m;
}

hex::Nodes TissueModel::gather(const VecX& x, std::size_t k) const {
  hex::Nodes n;
  for (int i = 0; i < 8; ++i) n.col(i) = x.segment<3>(3 * conn_[k][i]);
  return n;
}

int TissueModel::update_rotations(const VecX& x) {
  int inverted = 0;
  for (std::size_t k = 0; k < elements_.size(); ++k)
    if (!extract_rotation(elements_[k], gather(x, k))) ++inverted;
  return inverted;
}

VecX TissueModel::internal_force(const VecX& x) const {
  VecX f = VecX::Zero(x.size());
  for (std::size_t k = 0; k < elements_.size(); ++k) {
    const Vec24 fe = needlesim::internal_force(elements_[k], gather(x, k));
    for (int i = 0; i < 8; ++i) f.segment<3>(3 * conn_[k][i]) += fe.segment<3>(3 * i);
  }
  return f;
}

double TissueModel::elastic_energy(const VecX& x) const {
  double e = 0.0;
  for (std::size_t k = 0; k < elements_.size(); ++k) e += element_energy(elements_[k], gather(x, k));
  return e;
}

const SparseMatrix& TissueModel::assemble_stiffness() {
  double* values = stiffness_.valuePtr();
  std::fill(values, values + stiffness_.nonZeros(), 0.0);
  for (std::size_t k = 0; k < elements_.size(); ++k) {
    const Mat24 ke = tangent_stiffness(elements_[k]);
    const int* off = offsets_.data() + k * 576;
    for (int b = 0; b < 24; ++b)
      for (int a = 0; a < 24; ++a) values[off[b * 24 + a]] += ke(a, b);
  }
  return stiffness_;
}

std::vector<CentreSample> TissueModel::centre_samples(const VecX& x) const {
  std::vector<CentreSample> out(elements_.size());
  for (std::size_t k = 0; k < elements_.size(); ++k)
    out[k] = centre_sample_world(elements_[k], gather(x, k), material_);
  return out;
}

}  // namespace needlesim

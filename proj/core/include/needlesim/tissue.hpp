#pragma once

#include "needlesim/corotational.hpp"
#include "needlesim/hex_mesh.hpp"
#include "needlesim/t_junctions.hpp"

#include <vector>

namespace needlesim {

/// Nodal state of the tissue; vectors are laid out as 3*node+axis.
struct MechanicalState {
  VecX x;
  VecX x0;
  VecX v;
  /// Per-DOF Dirichlet flags (the set Gamma_u).
  std::vector<char> fixed;
  /// Prescribed displacement for fixed DOFs (zero unless preloaded).
  VecX prescribed;

  static MechanicalState at_rest(const HexMesh& mesh);

  std::size_t num_nodes() const { return static_cast<std::size_t>(x.size() / 3); }
  Vec3 position(NodeId n) const { return x.segment<3>(3 * n); }
  Vec3 velocity(NodeId n) const { return v.segment<3>(3 * n); }
  Vec3 displacement(NodeId n) const { return x.segment<3>(3 * n) - x0.segment<3>(3 * n); }
  void fix_node(NodeId n, const Vec3& displacement = Vec3::Zero());
};

/// Per-node lumped mass (one entry per node, applies to each axis).
VecX assemble_lumped_mass(const HexMesh& mesh, const Material& material);

/// Corotational hexahedral tissue over the active elements of a mesh, with
/// the sparse stiffness pattern cached per topology.
class TissueModel {
 public:
  TissueModel() = default;
  TissueModel(const HexMesh& mesh, const Material& material) { rebuild(mesh, material); }

  /// Recomputes element data, mass and the sparsity pattern; call after the
  /// mesh topology changed.
  void rebuild(const HexMesh& mesh, const Material& material);

  const Material& material() const { return material_; }
  const std::vector<ElementId>& active() const { return active_; }
  const std::vector<CorotationalElement>& elements() const { return elements_; }
  std::vector<CorotationalElement>& elements() { return elements_; }
  /// Index into `elements()` for a mesh element id, or -1 if inactive.
  int slot(ElementId e) const { return e < static_cast<ElementId>(slot_.size()) ? slot_[e] : -1; }
  const std::array<NodeId, 8>& connectivity(std::size_t k) const { return conn_[k]; }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_dofs() const { return 3 * num_nodes_; }
  const VecX& nodal_mass() const { return mass_; }
  /// Mass expanded to one entry per DOF.
  VecX dof_mass() const;

  hex::Nodes gather(const VecX& x, std::size_t k) const;

  /// Polar-decomposition update of every element rotation; returns the number
  /// of inverted elements (whose previous rotation was kept).
  int update_rotations(const VecX& x);

  VecX internal_force(const VecX& x) const;
  double elastic_energy(const VecX& x) const;
  /// Assembles sum R K_e R^T into the cached pattern and returns it.
  const SparseMatrix& assemble_stiffness();
  const SparseMatrix& stiffness() const { return stiffness_; }

  /// Centre strain/stress (world frame) per active element slot.
  std::vector<CentreSample> centre_samples(const VecX& x) const;

 private:
  Material material_;
  std::size_t num_nodes_ = 0;
  std::vector<ElementId> active_;
  std::vector<int> slot_;
  std::vector<std::array<NodeId, 8>> conn_;
  std::vector<CorotationalElement> elements_;
  VecX mass_;
  SparseMatrix stiffness_;
  std::vector<int> offsets_;  // 576 value offsets per element
};

}  // namespace needlesim

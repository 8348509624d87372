#pragma once

#include "needlesim/hex_mesh.hpp"
#include "needlesim/tissue.hpp"

#include <vector>

namespace needlesim {

struct RecoveredField {
  std::vector<Mat3> strain;  // per node
  std::vector<Mat3> stress;  // per node
  /// Per mesh element id; zero for inactive elements.
  std::vector<double> eta;
  double eta_max = 0.0;

  /// sqrt(sum eta_e^2).
  double global_error() const;
};

/// Least-squares fit of a linear polynomial over each node's patch of active
/// elements, evaluated at the node. `centres` and `values` are indexed like
/// `elements` (active element ids). Hanging nodes receive interpolated
/// master values.
MatX recover_nodal(const HexMesh& mesh, const std::vector<ElementId>& elements,
                   const std::vector<Vec3>& centres, const MatX& values);

/// SPR of the centre stress/strain samples of `model` at configuration `x`.
RecoveredField recover_spr(const HexMesh& mesh, const TissueModel& model, const VecX& x);

/// Energy-norm error of one element: the square root of the Gauss integral
/// of (eps_h - eps_s) : (sigma_h - sigma_s), with recovered fields
/// interpolated trilinearly from the nodal values.
double element_error(const CorotationalElement& element, const hex::Nodes& x,
                     const Material& material, const std::array<Mat3, 8>& strain_s,
                     const std::array<Mat3, 8>& stress_s);

/// Indices i with errors[i] >= theta * max(errors). All-zero input marks
/// nothing.
std::vector<int> mark_elements(const std::vector<double>& errors, double theta);

/// Active elements with eta_e >= theta * eta_M, excluding those at the
/// maximum depth.
std::vector<ElementId> mark_elements(const HexMesh& mesh, const RecoveredField& field, double theta);

}  // namespace needlesim

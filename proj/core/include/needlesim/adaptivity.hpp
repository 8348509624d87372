#pragma once

#include "needlesim/hex_mesh.hpp"
#include "needlesim/spr.hpp"
#include "needlesim/tissue.hpp"

namespace needlesim {

struct AdaptReport {
  int marked = 0;
  int refined = 0;
  int refused = 0;
  std::size_t new_nodes = 0;
  std::size_t dofs_before = 0;
  std::size_t dofs_after = 0;
};

/// Refines `marked` elements (skipping any made inactive meanwhile), extends
/// the state to the new nodes by trilinear interpolation of x and v, and
/// re-detects the T-junctions. New nodes inherit a Dirichlet flag only when
/// every contributing parent node carries it.
AdaptReport refine_and_transfer(HexMesh& mesh, MechanicalState& state,
                                const std::vector<ElementId>& marked);

/// Estimate, mark with threshold `theta`, then refine and transfer.
AdaptReport adapt(HexMesh& mesh, MechanicalState& state, const TissueModel& model, double theta,
                  RecoveredField* field = nullptr);

}  // namespace needlesim

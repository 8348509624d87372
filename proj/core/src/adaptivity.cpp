#include "needlesim/adaptivity.hpp"

#include "needlesim/log.hpp"
#include "needlesim/t_junctions.hpp"

namespace needlesim {

AdaptReport refine_and_transfer(HexMesh& mesh, MechanicalState& state,
                                const std::vector<ElementId>& marked) {
  AdaptReport report;
  report.marked = static_cast<int>(marked.size());
  report.dofs_before = 3 * mesh.nodes.size();
  for (ElementId e : marked) {
    if (!mesh.elements[e].active) continue;
    const RefinementResult r = refine_element(mesh, e);
    if (r.refused) {
      ++report.refused;
      continue;
    }
    ++report.refined;
    const auto n = static_cast<Eigen::Index>(mesh.nodes.size());
    state.x.conservativeResize(3 * n);
    state.x0.conservativeResize(3 * n);
    state.v.conservativeResize(3 * n);
    state.prescribed.conservativeResize(3 * n);
    state.fixed.resize(static_cast<std::size_t>(3 * n), 0);
    for (const auto& interp : r.interpolation) {
      const NodeId id = interp.node;
      Vec3 x = Vec3::Zero(), v = Vec3::Zero(), pre = Vec3::Zero();
      for (int i = 0; i < 8; ++i) {
        x += interp.weights[i] * state.x.segment<3>(3 * interp.sources[i]);
        v += interp.weights[i] * state.v.segment<3>(3 * interp.sources[i]);
        pre += interp.weights[i] * state.prescribed.segment<3>(3 * interp.sources[i]);
      }
      state.x.segment<3>(3 * id) = x;
      state.v.segment<3>(3 * id) = v;
      state.x0.segment<3>(3 * id) = mesh.nodes[id].rest;
      state.prescribed.segment<3>(3 * id) = pre;
      for (int d = 0; d < 3; ++d) {
        bool all = true;
        for (int i = 0; i < 8; ++i)
          if (interp.weights[i] > 1e-14) all = all && state.fixed[3 * interp.sources[i] + d];
        state.fixed[3 * id + d] = all ? 1 : 0;
      }
    }
    report.new_nodes += r.new_nodes.size();
  }
  if (report.refined > 0) mesh.t_junctions = detect_t_junctions(mesh);
  report.dofs_after = 3 * mesh.nodes.size();
  if (report.refused > 0) log::debug(report.refused, " refinements refused at maximum depth");
  return report;
}

AdaptReport adapt(HexMesh& mesh, MechanicalState& state, const TissueModel& model, double theta,
                  RecoveredField* field) {
  RecoveredField f = recover_spr(mesh, model, state.x);
  const auto marked = mark_elements(mesh, f, theta);
  if (field) *field = std::move(f);
  return refine_and_transfer(mesh, state, marked);
}

}  // namespace needlesim

#pragma once

#include "needlesim/beam.hpp"
#include "needlesim/coupled_solver.hpp"
#include "needlesim/hex_mesh.hpp"
#include "needlesim/tissue.hpp"

#include <optional>
#include <string>
#include <vector>

namespace needlesim {

struct InteractionParameters {
  double mu = 0.1;                 // friction coefficient [-]
  double puncture = 0.5;           // lambda_p0 [N]
  double cutting = 0.3;            // lambda_c0 [N]
  double shaft_spacing = 2e-3;     // [m]
  double penetration_tolerance = 1e-5;  // [m]
  /// Multiplier slack when comparing against puncture/cutting thresholds [N].
  double threshold_tolerance = 1e-10;

  void validate() const;
};

enum class TipPhase { kFree, kOnSurface, kInserted };
const char* to_string(TipPhase phase);

/// Tip multipliers expressed as forces [N].
struct TipForces {
  double surface_normal = 0.0;  // lambda_n^ts
  double tip_axial = 0.0;       // lambda_n^nt
  double tip_lateral = 0.0;     // |lambda_t^nt|
  bool crossed_surface = false;
  bool left_surface = false;
};

struct TipTransition {
  TipPhase phase = TipPhase::kFree;
  bool punctured = false;
  bool cuts = false;
};

/// Threshold logic of the tip: puncture once the surface multiplier reaches
/// lambda_p0, cutting while the axial multiplier reaches mu*lambda_t + lambda_c0.
TipTransition update_tip_state(TipPhase phase, const TipForces& forces,
                               const InteractionParameters& params);

struct TipState {
  TipPhase phase = TipPhase::kFree;
  MaterialPoint surface_anchor;
  Vec3 surface_normal = Vec3::Zero();
  MaterialPoint tip_anchor;
  /// Rest-configuration polyline of the cut channel, from the entry point.
  std::vector<Vec3> path;
  bool cutting = false;

  double path_length() const;
};

/// Material points at rest arclengths k*spacing (k = 1..floor(L/spacing))
/// along `path`. Points outside the material are anchored to the nearest
/// element with a warning.
std::vector<MaterialPoint> place_shaft_constraints(const HexMesh& mesh,
                                                   const std::vector<Vec3>& path,
                                                   double spacing);

/// Element and natural coordinates of `p` in the current configuration.
/// Falls back to the nearest element (clamped coordinates) when `p` lies
/// outside the deformed body; `inside` reports which case occurred.
MaterialPoint locate_current(const TissueModel& model, const VecX& x, const Vec3& p,
                             bool* inside = nullptr);

Vec3 current_position(const HexMesh& mesh, const VecX& x, const MaterialPoint& mp);
Vec3 material_velocity(const HexMesh& mesh, const VecX& v, const MaterialPoint& mp);

struct SurfaceHit {
  MaterialPoint anchor;
  Vec3 point;
  Vec3 normal;
  double parameter = 0.0;  // along the query segment
};

/// First crossing of the segment a->b with the deformed boundary.
std::optional<SurfaceHit> find_surface_crossing(const HexMesh& mesh,
                                                const std::vector<BoundaryFace>& faces,
                                                const VecX& x, const Vec3& a, const Vec3& b);

/// Orthonormal pair completing `t`.
std::pair<Vec3, Vec3> complete_frame(const Vec3& t);

enum class ConstraintKind { kSurface, kTip, kShaft, kTJunction };
enum class ConstraintState { kInactive, kSticking, kSliding, kCutting };
const char* to_string(ConstraintKind kind);

struct ConstraintPoint {
  ConstraintKind kind = ConstraintKind::kShaft;
  int beam = -1;
  Mat3 frame = Mat3::Identity();  // columns n, t1, t2
  MaterialPoint anchor;
  BeamProjection needle;
  double gap = 0.0;
  Vec3 lambda = Vec3::Zero();  // force [N] per frame axis
  ConstraintState state = ConstraintState::kInactive;
  int first_row = 0;
  int num_rows = 0;
};

/// Constraint rows assembled for one step. Row values are
/// d . (v_needle - v_tissue), so an impulse lambda acts as +d lambda on the
/// needle and -d lambda on the tissue.
struct ConstraintSet {
  std::vector<ConstraintPoint> points;
  std::vector<ConstraintBlock> blocks;
  std::vector<double> target;
  std::vector<Eigen::Triplet<double>> tissue_entries;
  std::vector<std::vector<Eigen::Triplet<double>>> beam_entries;
  int rows = 0;

  SparseMatrix tissue_jacobian(std::size_t tissue_dofs) const;
  SparseMatrix beam_jacobian(std::size_t beam, std::size_t beam_dofs) const;
  VecX target_vector() const { return Eigen::Map<const VecX>(target.data(), rows); }
};

/// Incremental construction of a ConstraintSet.
class ConstraintBuilder {
 public:
  ConstraintBuilder(const HexMesh& mesh, const MechanicalState& tissue,
                    std::vector<const BeamModel*> beams, double tau);

  /// Row between a needle point and a tissue material point along `d`;
  /// `gap` is the current constraint value whose post-step value is driven
  /// to zero (bilateral) or kept non-negative (unilateral).
  int add_row(const Vec3& d, int beam, const BeamProjection& needle, const MaterialPoint& tissue,
              double gap);
  /// Tissue-only row from a sparse vector over tissue DOFs.
  int add_tissue_row(const std::vector<std::pair<int, double>>& coeffs, double value);

  ConstraintSet& set() { return set_; }
  ConstraintSet finish() { return std::move(set_); }

 private:
  const HexMesh& mesh_;
  const MechanicalState& tissue_;
  std::vector<const BeamModel*> beams_;
  double tau_;
  ConstraintSet set_;
};

/// Projection onto a beam expressed at its tip.
BeamProjection tip_projection(const BeamModel& beam);

}  // namespace needlesim

#include "needlesim/interaction.hpp"

#include "needlesim/log.hpp"

#include <cmath>

namespace needlesim {

void InteractionParameters::validate() const {
  if (!(mu >= 0.0)) throw InvalidInput("interaction: friction coefficient must be non-negative");
  if (!(puncture >= 0.0)) throw InvalidInput("interaction: puncture strength must be non-negative");
  if (!(cutting >= 0.0)) throw InvalidInput("interaction: cutting strength must be non-negative");
  if (!(shaft_spacing > 0.0)) throw InvalidInput("interaction: shaft spacing must be positive");
  if (!(penetration_tolerance >= 0.0))
    throw InvalidInput("interaction: penetration tolerance must be non-negative");
}

const char* to_string(TipPhase phase) {
  switch (phase) {
    case TipPhase::kFree: return "free";
    case TipPhase::kOnSurface: return "on-surface";
    case TipPhase::kInserted: return "inserted";
  }
  return "?";
}

const char* to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kSurface: return "surface";
    case ConstraintKind::kTip: return "tip";
    case ConstraintKind::kShaft: return "shaft";
    case ConstraintKind::kTJunction: return "tjunction";
  }
  return "?";
}

TipTransition update_tip_state(TipPhase phase, const TipForces& f,
                               const InteractionParameters& p) {
  TipTransition t;
  t.phase = phase;
  switch (phase) {
    case TipPhase::kFree:
      if (f.crossed_surface) t.phase = TipPhase::kOnSurface;
      break;
    case TipPhase::kOnSurface:
      // The surface row is capped at lambda_p0, so reaching the cap is the
      // discrete form of exceeding the puncture strength.
      if (f.surface_normal >= p.puncture - p.threshold_tolerance) {
        t.phase = TipPhase::kInserted;
        t.punctured = true;
      } else if (f.left_surface) {
        t.phase = TipPhase::kFree;
      }
      break;
    case TipPhase::kInserted:
      t.cuts = f.tip_axial >= p.mu * f.tip_lateral + p.cutting - p.threshold_tolerance;
      break;
  }
  return t;
}

double TipState::path_length() const {
  double l = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) l += (path[i] - path[i - 1]).norm();
  return l;
}

namespace {

MaterialPoint nearest_rest(const HexMesh& mesh, const Vec3& p) {
  MaterialPoint best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    if (!mesh.elements[e].active) continue;
    const hex::Nodes x = mesh.rest_nodes(static_cast<ElementId>(e));
    const auto xi = hex::inverse_map(x, p);
    const Vec3 c = xi ? xi->cwiseMax(0.0).cwiseMin(1.0) : hex::kCentre;
    const double d = (hex::map(x, c) - p).norm();
    if (d < best_d) {
      best_d = d;
      best = {static_cast<ElementId>(e), c};
    }
  }
  return best;
}

}  // namespace

std::vector<MaterialPoint> place_shaft_constraints(const HexMesh& mesh,
                                                   const std::vector<Vec3>& path,
                                                   double spacing) {
  if (!(spacing > 0.0)) throw InvalidInput("shaft spacing must be positive");
  std::vector<MaterialPoint> out;
  if (path.size() < 2) return out;
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) total += (path[i] - path[i - 1]).norm();
  const auto count = static_cast<int>(std::floor(total / spacing + 1e-12));
  std::size_t seg = 1;
  double seg_start = 0.0;
  for (int k = 1; k <= count; ++k) {
    const double s = k * spacing;
    while (seg + 1 < path.size() && seg_start + (path[seg] - path[seg - 1]).norm() < s) {
      seg_start += (path[seg] - path[seg - 1]).norm();
      ++seg;
    }
    const double len = (path[seg] - path[seg - 1]).norm();
    const double f = len > 0.0 ? std::clamp((s - seg_start) / len, 0.0, 1.0) : 0.0;
    const Vec3 p = path[seg - 1] + f * (path[seg] - path[seg - 1]);
    if (auto mp = mesh.locate_rest(p)) {
      out.push_back(*mp);
    } else {
      log::warn("shaft point at arclength ", s, " lies outside the material; using nearest element");
      out.push_back(nearest_rest(mesh, p));
    }
  }
  return out;
}

MaterialPoint locate_current(const TissueModel& model, const VecX& x, const Vec3& p, bool* inside) {
  MaterialPoint best;
  double best_d = std::numeric_limits<double>::infinity();
  const auto& active = model.active();
  for (std::size_t k = 0; k < active.size(); ++k) {
    const hex::Nodes n = model.gather(x, k);
    const Vec3 lo = n.rowwise().minCoeff(), hi = n.rowwise().maxCoeff();
    const double pad = 1e-9 * (hi - lo).norm();
    const bool in_box = (p.array() >= lo.array() - pad).all() && (p.array() <= hi.array() + pad).all();
    if (in_box) {
      if (const auto xi = hex::inverse_map(n, p); xi && hex::inside_reference(*xi, 1e-9)) {
        if (inside) *inside = true;
        return {active[k], xi->cwiseMax(0.0).cwiseMin(1.0)};
      }
    }
    // Cheap lower bound before the more expensive nearest-point estimate.
    const double box_d = (p - p.cwiseMax(lo).cwiseMin(hi)).norm();
    if (box_d >= best_d) continue;
    const auto xi = hex::inverse_map(n, p);
    const Vec3 c = xi ? xi->cwiseMax(0.0).cwiseMin(1.0) : hex::kCentre;
    const double d = (hex::map(n, c) - p).norm();
    if (d < best_d) {
      best_d = d;
      best = {active[k], c};
    }
  }
  if (inside) *inside = false;
  return best;
}

namespace {

hex::Nodes current_nodes(const HexMesh& mesh, const VecX& x, ElementId e) {
  hex::Nodes n;
  for (int i = 0; i < 8; ++i) n.col(i) = x.segment<3>(3 * mesh.elements[e].nodes[i]);
  return n;
}

}  // namespace

Vec3 current_position(const HexMesh& mesh, const VecX& x, const MaterialPoint& mp) {
  return hex::map(current_nodes(mesh, x, mp.element), mp.xi);
}

Vec3 material_velocity(const HexMesh& mesh, const VecX& v, const MaterialPoint& mp) {
  return hex::map(current_nodes(mesh, v, mp.element), mp.xi);
}

std::optional<SurfaceHit> find_surface_crossing(const HexMesh& mesh,
                                                const std::vector<BoundaryFace>& faces,
                                                const VecX& x, const Vec3& a, const Vec3& b) {
  std::optional<SurfaceHit> best;
  const Vec3 dir = b - a;
  if (dir.squaredNorm() == 0.0) return best;
  for (const auto& bf : faces) {
    const hex::Nodes n = current_nodes(mesh, x, bf.element);
    const auto& face = hex::kFaces[bf.face];
    const Vec3 centre = n.rowwise().mean();
    const std::array<std::array<int, 3>, 2> tris = {{{face.corners[0], face.corners[1], face.corners[2]},
                                                      {face.corners[0], face.corners[2], face.corners[3]}}};
    for (const auto& tri : tris) {
      const Vec3 p0 = n.col(tri[0]), p1 = n.col(tri[1]), p2 = n.col(tri[2]);
      const Vec3 e1 = p1 - p0, e2 = p2 - p0;
      const Vec3 pv = dir.cross(e2);
      const double det = e1.dot(pv);
      if (std::abs(det) < 1e-300) continue;
      const Vec3 s = a - p0;
      const double u = s.dot(pv) / det;
      if (u < -1e-12 || u > 1.0 + 1e-12) continue;
      const Vec3 q = s.cross(e1);
      const double w = dir.dot(q) / det;
      if (w < -1e-12 || u + w > 1.0 + 1e-12) continue;
      const double t = e2.dot(q) / det;
      if (t < 0.0 || t > 1.0) continue;
      Vec3 normal = e1.cross(e2).normalized();
      if (normal.dot(p0 - centre) < 0.0) normal = -normal;
      // Only entering crossings count.
      if (normal.dot(dir) >= 0.0) continue;
      if (best && best->parameter <= t) continue;
      const Vec3 point = a + t * dir;
      const auto xi = hex::inverse_map(n, point);
      SurfaceHit hit;
      hit.anchor = {bf.element, (xi ? *xi : hex::kCentre).cwiseMax(0.0).cwiseMin(1.0)};
      hit.point = point;
      hit.normal = normal;
      hit.parameter = t;
      best = hit;
    }
  }
  return best;
}

std::pair<Vec3, Vec3> complete_frame(const Vec3& t) {
  const Vec3 seed = std::abs(t.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 n1 = (seed - seed.dot(t) * t).normalized();
  return {n1, t.cross(n1)};
}

SparseMatrix ConstraintSet::tissue_jacobian(std::size_t tissue_dofs) const {
  SparseMatrix j(rows, static_cast<Eigen::Index>(tissue_dofs));
  j.setFromTriplets(tissue_entries.begin(), tissue_entries.end());
  return j;
}

SparseMatrix ConstraintSet::beam_jacobian(std::size_t beam, std::size_t beam_dofs) const {
  SparseMatrix j(rows, static_cast<Eigen::Index>(beam_dofs));
  if (beam < beam_entries.size()) j.setFromTriplets(beam_entries[beam].begin(), beam_entries[beam].end());
  return j;
}

ConstraintBuilder::ConstraintBuilder(const HexMesh& mesh, const MechanicalState& tissue,
                                     std::vector<const BeamModel*> beams, double tau)
    : mesh_(mesh), tissue_(tissue), beams_(std::move(beams)), tau_(tau) {
  set_.beam_entries.resize(beams_.size());
}

int ConstraintBuilder::add_row(const Vec3& d, int beam, const BeamProjection& needle,
                               const MaterialPoint& tissue, double gap) {
  const int row = set_.rows++;
  if (beam >= 0) {
    const auto a = static_cast<int>(6 * needle.segment);
    const double f = needle.fraction;
    for (int k = 0; k < 3; ++k) {
      if (1.0 - f != 0.0) set_.beam_entries[beam].emplace_back(row, a + k, (1.0 - f) * d[k]);
      if (f != 0.0) set_.beam_entries[beam].emplace_back(row, a + 6 + k, f * d[k]);
    }
  }
  if (tissue.element != kNoElement) {
    const hex::Shape n = hex::shape(tissue.xi);
    const auto& nodes = mesh_.elements[tissue.element].nodes;
    for (int i = 0; i < 8; ++i)
      for (int k = 0; k < 3; ++k)
        if (n[i] * d[k] != 0.0) set_.tissue_entries.emplace_back(row, 3 * nodes[i] + k, -n[i] * d[k]);
  }
  set_.target.push_back(-gap / tau_);
  return row;
}

int ConstraintBuilder::add_tissue_row(const std::vector<std::pair<int, double>>& coeffs, double value) {
  const int row = set_.rows++;
  for (const auto& [dof, c] : coeffs) set_.tissue_entries.emplace_back(row, dof, c);
  set_.target.push_back(-value / tau_);
  return row;
}

BeamProjection tip_projection(const BeamModel& beam) {
  BeamProjection p;
  p.segment = beam.rest_length.size() - 1;
  p.fraction = 1.0;
  p.arclength = beam.length();
  p.point = beam.x.back();
  return p;
}

}  // namespace needlesim

#pragma once

#include "needlesim/shape_functions.hpp"
#include "needlesim/surface.hpp"
#include "needlesim/types.hpp"

#include <array>
#include <optional>
#include <unordered_map>
#include <vector>

namespace needlesim {

struct HexNode {
  Vec3 rest;
  int depth = 0;
};

struct HexElement {
  std::array<NodeId, 8> nodes{};
  int depth = 0;
  ElementId parent = kNoElement;
  bool active = true;
  std::vector<ElementId> children;
};

/// Subdivision pattern expressed in the parent's natural coordinates.
struct RefinementTemplate {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 8>> elements;
  /// Column j holds the parent shape-function values at template node j.
  Eigen::Matrix<double, 8, Eigen::Dynamic> weights;

  static RefinementTemplate uniform();
};

struct TJunction {
  NodeId slave = -1;
  std::vector<NodeId> masters;
  std::vector<double> weights;

  bool operator==(const TJunction&) const = default;
};

struct BoundingGrid {
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();
  std::array<int, 3> extents{0, 0, 0};

  double cell_size() const { return spacing.minCoeff(); }
};

/// A point fixed in the material: an element and natural coordinates in it.
struct MaterialPoint {
  ElementId element = kNoElement;
  Vec3 xi = hex::kCentre;
};

struct NodeInterpolation {
  NodeId node = -1;
  std::array<NodeId, 8> sources{};
  hex::Shape weights = hex::Shape::Zero();
};

struct RefinementResult {
  bool refused = false;
  std::vector<NodeId> new_nodes;
  std::vector<ElementId> new_elements;
  /// One entry per node in `new_nodes`.
  std::vector<NodeInterpolation> interpolation;
};

/// Boundary face of an active element, as (element, local face index).
struct BoundaryFace {
  ElementId element;
  int face;
};

class HexMesh {
 public:
  std::vector<HexNode> nodes;
  std::vector<HexElement> elements;
  std::vector<TJunction> t_junctions;
  RefinementTemplate refinement_template = RefinementTemplate::uniform();
  BoundingGrid grid;
  int max_depth = 3;

  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_active() const;
  std::vector<ElementId> active_elements() const;

  hex::Nodes rest_nodes(ElementId e) const;
  double rest_volume(ElementId e) const { return hex::volume(rest_nodes(e)); }
  double total_active_volume() const;

  /// Finds the active element containing `p` in the rest configuration.
  std::optional<MaterialPoint> locate_rest(const Vec3& p, double tol = 1e-9) const;
  /// Descends from `mp` (which may reference an inactive element) to the
  /// active leaf containing the same material point.
  MaterialPoint descend(MaterialPoint mp) const;
  Vec3 rest_position(const MaterialPoint& mp) const;

  std::vector<BoundaryFace> boundary_faces() const;

  /// Throws InvalidInput describing the first violated invariant.
  void validate() const;

  /// Registers a base-grid cell; used by voxelisation.
  ElementId base_cell(int i, int j, int k) const;

  // Internal bookkeeping used by refinement.
  NodeId find_or_add_node(const Vec3& rest, int depth, bool* created);
  void rebuild_node_index();
  void set_base_cells(std::vector<ElementId> cells) { base_cells_ = std::move(cells); }

 private:
  struct KeyHash {
    std::size_t operator()(const std::array<long long, 3>& k) const {
      std::size_t h = 1469598103934665603ull;
      for (long long v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
      return h;
    }
  };
  std::array<long long, 3> key(const Vec3& p) const;

  std::unordered_map<std::array<long long, 3>, std::vector<NodeId>, KeyHash> node_index_;
  std::vector<ElementId> base_cells_;
};

HexMesh voxelize_domain(const SurfaceGeometry& surface, const std::array<int, 3>& resolution,
                        int max_depth = 3);

RefinementResult refine_element(HexMesh& mesh, ElementId element);

/// Refines every active element `levels` times (uniform mesh family).
void refine_uniform(HexMesh& mesh, int levels);

}  // namespace needlesim

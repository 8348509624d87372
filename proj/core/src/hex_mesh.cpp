#include "needlesim/hex_mesh.hpp"

#include "needlesim/log.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>

namespace needlesim {

RefinementTemplate RefinementTemplate::uniform() {
  RefinementTemplate t;
  auto index = [](int a, int b, int c) { return a + 3 * b + 9 * c; };
  t.nodes.resize(27);
  for (int c = 0; c < 3; ++c)
    for (int b = 0; b < 3; ++b)
      for (int a = 0; a < 3; ++a) t.nodes[index(a, b, c)] = Vec3(a, b, c) * 0.5;
  for (int c = 0; c < 2; ++c)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a) {
        std::array<int, 8> conn{};
        for (int i = 0; i < 8; ++i)
          conn[i] = index(a + hex::kCorners[i][0], b + hex::kCorners[i][1], c + hex::kCorners[i][2]);
        t.elements.push_back(conn);
      }
  t.weights.resize(8, 27);
  for (int j = 0; j < 27; ++j) t.weights.col(j) = hex::shape(t.nodes[j]);
  return t;
}

std::size_t HexMesh::num_active() const {
  std::size_t n = 0;
  for (const auto& e : elements) n += e.active ? 1 : 0;
  return n;
}

std::vector<ElementId> HexMesh::active_elements() const {
  std::vector<ElementId> ids;
  ids.reserve(elements.size());
  for (std::size_t e = 0; e < elements.size(); ++e)
    if (elements[e].active) ids.push_back(static_cast<ElementId>(e));
  return ids;
}

hex::Nodes HexMesh::rest_nodes(ElementId e) const {
  hex::Nodes x;
  for (int i = 0; i < 8; ++i) x.col(i) = nodes[elements[e].nodes[i]].rest;
  return x;
}

double HexMesh::total_active_volume() const {
  double v = 0.0;
  for (std::size_t e = 0; e < elements.size(); ++e)
    if (elements[e].active) v += rest_volume(static_cast<ElementId>(e));
  return v;
}

ElementId HexMesh::base_cell(int i, int j, int k) const {
  const auto& n = grid.extents;
  if (i < 0 || j < 0 || k < 0 || i >= n[0] || j >= n[1] || k >= n[2]) return kNoElement;
  const std::size_t idx = static_cast<std::size_t>(i) +
                          static_cast<std::size_t>(n[0]) * (j + static_cast<std::size_t>(n[1]) * k);
  return idx < base_cells_.size() ? base_cells_[idx] : kNoElement;
}

MaterialPoint HexMesh::descend(MaterialPoint mp) const {
  const auto& tmpl = refinement_template;
  while (mp.element != kNoElement && !elements[mp.element].active) {
    const HexElement& parent = elements[mp.element];
    // Template children are axis-aligned boxes in the parent's natural
    // coordinates, so the child and its local coordinates follow directly.
    bool found = false;
    for (std::size_t c = 0; c < parent.children.size() && c < tmpl.elements.size(); ++c) {
      const Vec3 lo = tmpl.nodes[tmpl.elements[c][0]];
      const Vec3 hi = tmpl.nodes[tmpl.elements[c][6]];
      const Vec3 local = (mp.xi - lo).cwiseQuotient(hi - lo);
      if (hex::inside_reference(local, 1e-12)) {
        mp = {parent.children[c], local.cwiseMax(0.0).cwiseMin(1.0)};
        found = true;
        break;
      }
    }
    if (!found) throw NumericalFailure("material point outside its parent element");
  }
  return mp;
}

Vec3 HexMesh::rest_position(const MaterialPoint& mp) const {
  return hex::map(rest_nodes(mp.element), mp.xi);
}

std::optional<MaterialPoint> HexMesh::locate_rest(const Vec3& p, double tol) const {
  const Vec3 rel = (p - grid.origin).cwiseQuotient(grid.spacing);
  const std::array<int, 3> cell{static_cast<int>(std::floor(rel.x())),
                                static_cast<int>(std::floor(rel.y())),
                                static_cast<int>(std::floor(rel.z()))};
  // Points on or near cell boundaries may belong to a neighbouring cell.
  static constexpr int kOffsets[3] = {0, -1, 1};
  for (int dz : kOffsets)
    for (int dy : kOffsets)
      for (int dx : kOffsets) {
        const int i = cell[0] + dx, j = cell[1] + dy, k = cell[2] + dz;
        const ElementId e = base_cell(i, j, k);
        if (e == kNoElement) continue;
        const Vec3 xi = rel - Vec3(i, j, k);
        if (!hex::inside_reference(xi, tol)) continue;
        return descend({e, xi.cwiseMax(0.0).cwiseMin(1.0)});
      }
  return std::nullopt;
}

std::vector<BoundaryFace> HexMesh::boundary_faces() const {
  std::vector<BoundaryFace> faces;
  const double step = 1e-6 * grid.cell_size();
  for (std::size_t e = 0; e < elements.size(); ++e) {
    if (!elements[e].active) continue;
    const hex::Nodes x = rest_nodes(static_cast<ElementId>(e));
    for (int f = 0; f < 6; ++f) {
      const auto& face = hex::kFaces[f];
      Vec3 xi = hex::kCentre;
      xi[face.axis] = face.side;
      Vec3 outward = Vec3::Zero();
      outward[face.axis] = face.side ? 1.0 : -1.0;
      const Mat3 j = hex::jacobian(x, xi);
      const Vec3 n = (j.inverse().transpose() * outward).normalized();
      const Vec3 probe = hex::map(x, xi) + step * n;
      if (!locate_rest(probe, 0.0)) faces.push_back({static_cast<ElementId>(e), f});
    }
  }
  return faces;
}

void HexMesh::validate() const {
  for (std::size_t e = 0; e < elements.size(); ++e) {
    const HexElement& el = elements[e];
    const std::string id = "element " + std::to_string(e);
    for (int i = 0; i < 8; ++i) {
      if (el.nodes[i] < 0 || el.nodes[i] >= static_cast<NodeId>(nodes.size()))
        throw InvalidInput(id + " references a missing node");
      for (int j = 0; j < i; ++j)
        if (el.nodes[i] == el.nodes[j]) throw InvalidInput(id + " repeats a node");
    }
    if (hex::jacobian(rest_nodes(static_cast<ElementId>(e)), hex::kCentre).determinant() <= 0.0)
      throw InvalidInput(id + " has a non-positive centre Jacobian");
    if (el.depth > max_depth) throw InvalidInput(id + " exceeds the maximum depth");
    if (el.active != el.children.empty())
      throw InvalidInput(id + ": active elements must be leaves");
    for (ElementId c : el.children)
      if (elements[c].depth != el.depth + 1 || elements[c].parent != static_cast<ElementId>(e))
        throw InvalidInput(id + " has an inconsistent child");
  }
  for (const auto& n : nodes)
    if (n.depth > max_depth) throw InvalidInput("node depth exceeds the maximum depth");
  std::vector<int> seen(nodes.size(), 0);
  for (const auto& tj : t_junctions)
    if (++seen[tj.slave] > 1)
      throw InvalidInput("node " + std::to_string(tj.slave) + " appears in two T-junctions");
}

std::array<long long, 3> HexMesh::key(const Vec3& p) const {
  const double q = 1e-3 * grid.cell_size();
  const Vec3 r = (p - grid.origin) / q;
  return {std::llround(r.x()), std::llround(r.y()), std::llround(r.z())};
}

void HexMesh::rebuild_node_index() {
  node_index_.clear();
  for (std::size_t n = 0; n < nodes.size(); ++n)
    node_index_[key(nodes[n].rest)].push_back(static_cast<NodeId>(n));
}

NodeId HexMesh::find_or_add_node(const Vec3& rest, int depth, bool* created) {
  const double tol = 1e-9 * grid.cell_size();
  const auto k = key(rest);
  for (long long dz = -1; dz <= 1; ++dz)
    for (long long dy = -1; dy <= 1; ++dy)
      for (long long dx = -1; dx <= 1; ++dx) {
        const auto it = node_index_.find({k[0] + dx, k[1] + dy, k[2] + dz});
        if (it == node_index_.end()) continue;
        for (NodeId n : it->second)
          if ((nodes[n].rest - rest).norm() <= tol) {
            if (created) *created = false;
            return n;
          }
      }
  const auto id = static_cast<NodeId>(nodes.size());
  nodes.push_back({rest, depth});
  node_index_[k].push_back(id);
  if (created) *created = true;
  return id;
}

HexMesh voxelize_domain(const SurfaceGeometry& surface, const std::array<int, 3>& resolution,
                        int max_depth) {
  std::string why;
  if (!surface.is_watertight(&why)) throw InvalidInput("surface rejected: " + why);
  for (int r : resolution)
    if (r < 1) throw InvalidInput("grid resolution must be at least 1 per axis");
  if (max_depth < 0) throw InvalidInput("maximum refinement depth must be non-negative");

  const Aabb box = surface.bounds();
  HexMesh mesh;
  mesh.max_depth = max_depth;
  mesh.grid.origin = box.min;
  mesh.grid.extents = resolution;
  for (int d = 0; d < 3; ++d) mesh.grid.spacing[d] = (box.max[d] - box.min[d]) / resolution[d];
  if (!(mesh.grid.spacing.minCoeff() > 0.0)) throw InvalidInput("surface has a flat bounding box");

  const auto [nx, ny, nz] = resolution;
  std::vector<ElementId> cells(static_cast<std::size_t>(nx) * ny * nz, kNoElement);
  std::vector<NodeId> lattice(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1), -1);
  auto lattice_node = [&](int i, int j, int k) {
    NodeId& id = lattice[i + (nx + 1) * (j + static_cast<std::size_t>(ny + 1) * k)];
    if (id < 0) {
      id = static_cast<NodeId>(mesh.nodes.size());
      mesh.nodes.push_back({mesh.grid.origin + Vec3(i, j, k).cwiseProduct(mesh.grid.spacing), 0});
    }
    return id;
  };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const Vec3 centre =
            mesh.grid.origin + (Vec3(i, j, k) + Vec3::Constant(0.5)).cwiseProduct(mesh.grid.spacing);
        if (!surface.contains(centre)) continue;
        HexElement el;
        for (int c = 0; c < 8; ++c)
          el.nodes[c] = lattice_node(i + hex::kCorners[c][0], j + hex::kCorners[c][1],
                                     k + hex::kCorners[c][2]);
        cells[i + nx * (j + static_cast<std::size_t>(ny) * k)] =
            static_cast<ElementId>(mesh.elements.size());
        mesh.elements.push_back(el);
      }
  if (mesh.elements.empty()) throw InvalidInput("no grid cell centre lies inside the surface");
  mesh.set_base_cells(std::move(cells));
  mesh.rebuild_node_index();
  return mesh;
}

RefinementResult refine_element(HexMesh& mesh, ElementId element) {
  RefinementResult result;
  if (element < 0 || element >= static_cast<ElementId>(mesh.elements.size()))
    throw InvalidInput("refine_element: no element " + std::to_string(element));
  if (!mesh.elements[element].active)
    throw InvalidInput("refine_element: element " + std::to_string(element) + " is inactive");
  if (mesh.elements[element].depth >= mesh.max_depth) {
    log::debug("refinement of element ", element, " refused at maximum depth");
    result.refused = true;
    return result;
  }
  const hex::Nodes x = mesh.rest_nodes(element);
  if (hex::jacobian(x, hex::kCentre).determinant() <= 0.0)
    throw NumericalFailure("refine_element: element " + std::to_string(element) +
                           " is degenerate");

  const RefinementTemplate& tmpl = mesh.refinement_template;
  const HexElement parent = mesh.elements[element];
  const int depth = parent.depth + 1;
  std::vector<NodeId> ids(tmpl.nodes.size());
  for (std::size_t j = 0; j < tmpl.nodes.size(); ++j) {
    const hex::Shape w = tmpl.weights.col(static_cast<Eigen::Index>(j));
    bool created = false;
    ids[j] = mesh.find_or_add_node(x * w, depth, &created);
    if (created) {
      result.new_nodes.push_back(ids[j]);
      result.interpolation.push_back({ids[j], parent.nodes, w});
    }
  }
  for (const auto& conn : tmpl.elements) {
    HexElement child;
    for (int i = 0; i < 8; ++i) child.nodes[i] = ids[conn[i]];
    child.depth = depth;
    child.parent = element;
    const auto id = static_cast<ElementId>(mesh.elements.size());
    mesh.elements.push_back(child);
    mesh.elements[element].children.push_back(id);
    result.new_elements.push_back(id);
  }
  mesh.elements[element].active = false;
  return result;
}

void refine_uniform(HexMesh& mesh, int levels) {
  if (levels > mesh.max_depth) mesh.max_depth = levels;
  for (int l = 0; l < levels; ++l)
    for (ElementId e : mesh.active_elements()) refine_element(mesh, e);
}

}  // namespace needlesim

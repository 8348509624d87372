#pragma once

#include "needlesim/types.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace needlesim {

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
  }
  Vec3 size() const { return max - min; }
};

/// Triangulated boundary of the tissue domain.
struct SurfaceGeometry {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  /// Every undirected edge used by exactly two triangles, with opposite
  /// orientation (closed, orientable 2-manifold).
  bool is_watertight(std::string* diagnostic = nullptr) const;

  Aabb bounds() const;

  /// Point-in-polyhedron by ray parity. Only meaningful on watertight input.
  bool contains(const Vec3& p) const;

  static SurfaceGeometry box(const Vec3& min, const Vec3& max);
  /// UV-sphere tessellation of an axis-aligned ellipsoid.
  static SurfaceGeometry ellipsoid(const Vec3& centre, const Vec3& semi_axes, int slices = 48,
                                   int stacks = 24);
  /// Wavefront OBJ (only `v` and triangular/polygonal `f` records are read).
  static SurfaceGeometry load_obj(const std::filesystem::path& path);
};

}  // namespace needlesim

#pragma once

#include "needlesim/hex_mesh.hpp"
#include "needlesim/surface.hpp"
#include "needlesim/t_junctions.hpp"

#include <random>

namespace needlesim::testing {

inline HexMesh box_mesh(const Vec3& lo, const Vec3& hi, std::array<int, 3> res, int max_depth = 3) {
  return voxelize_domain(SurfaceGeometry::box(lo, hi), res, max_depth);
}

inline HexMesh unit_cube() { return box_mesh(Vec3::Zero(), Vec3::Ones(), {1, 1, 1}); }

/// Two face-adjacent unit cubes along x.
inline HexMesh two_cubes() { return box_mesh(Vec3::Zero(), Vec3(2, 1, 1), {2, 1, 1}); }

inline HexMesh phantom_mesh(int levels = 0) {
  HexMesh m = box_mesh(Vec3::Zero(), Vec3(0.04, 0.02, 0.02), {8, 4, 4});
  if (levels > 0) refine_uniform(m, levels);
  return m;
}

inline void refresh_junctions(HexMesh& m) { m.t_junctions = detect_t_junctions(m); }

inline Mat3 rotation(double angle, Vec3 axis) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

inline Mat3 random_rotation(std::mt19937& rng) {
  std::normal_distribution<double> n;
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
}

}  // namespace needlesim::testing

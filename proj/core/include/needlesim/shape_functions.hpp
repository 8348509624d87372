#pragma once

// Trilinear hexahedron on the natural cube [0,1]^3.
//
// Local node ordering (right-handed): bottom face z=0 counter-clockwise seen
// from +z, then the top face in the same order. This matches VTK_HEXAHEDRON.
//
//        7-------6
//       /|      /|
//      4-------5 |
//      | 3-----|-2
//      |/      |/
//      0-------1

#include "needlesim/types.hpp"

#include <array>
#include <optional>

namespace needlesim::hex {

inline constexpr std::array<std::array<int, 3>, 8> kCorners = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

/// Faces as (axis, side, four corners ordered around the face).
struct Face {
  int axis;
  int side;
  std::array<int, 4> corners;
};
inline constexpr std::array<Face, 6> kFaces = {{
    {0, 0, {0, 3, 7, 4}},
    {0, 1, {1, 2, 6, 5}},
    {1, 0, {0, 1, 5, 4}},
    {1, 1, {3, 2, 6, 7}},
    {2, 0, {0, 1, 2, 3}},
    {2, 1, {4, 5, 6, 7}},
}};

inline constexpr std::array<std::array<int, 2>, 12> kEdges = {{
    {0, 1}, {3, 2}, {4, 5}, {7, 6},  // along x
    {0, 3}, {1, 2}, {4, 7}, {5, 6},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

using Shape = Eigen::Matrix<double, 8, 1>;
using ShapeGrad = Eigen::Matrix<double, 8, 3>;
/// Node coordinates stored column-wise, one column per local node.
using Nodes = Eigen::Matrix<double, 3, 8>;

Shape shape(const Vec3& xi);
ShapeGrad shape_grad(const Vec3& xi);

inline const Vec3 kCentre{0.5, 0.5, 0.5};

/// 2x2x2 Gauss-Legendre points on [0,1]^3; each carries weight 1/8.
const std::array<Vec3, 8>& gauss_points();
inline constexpr double kGaussWeight = 0.125;

inline Vec3 map(const Nodes& x, const Vec3& xi) { return x * shape(xi); }
inline Mat3 jacobian(const Nodes& x, const Vec3& xi) { return x * shape_grad(xi); }

/// Gradients of the shape functions with respect to physical coordinates of
/// the element described by `x`, evaluated at natural point `xi`.
ShapeGrad physical_grad(const Nodes& x, const Vec3& xi, double* det_j = nullptr);

double volume(const Nodes& x);

/// Newton inversion of the trilinear map. Returns nothing when the iteration
/// fails to converge; the result may lie outside [0,1]^3.
std::optional<Vec3> inverse_map(const Nodes& x, const Vec3& p, double tol = 1e-13,
                                int max_iterations = 50);

inline bool inside_reference(const Vec3& xi, double tol) {
  return (xi.array() >= -tol).all() && (xi.array() <= 1.0 + tol).all();
}

inline Nodes natural_nodes() {
  Nodes n;
  for (int i = 0; i < 8; ++i)
    n.col(i) = Vec3(kCorners[i][0], kCorners[i][1], kCorners[i][2]);
  return n;
}

}  // namespace needlesim::hex

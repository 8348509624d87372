#include "needlesim/shape_functions.hpp"

#include <Eigen/LU>

#include <cmath>

namespace needlesim::hex {

Shape shape(const Vec3& xi) {
  Shape n;
  for (int i = 0; i < 8; ++i) {
    double v = 1.0;
    for (int d = 0; d < 3; ++d) v *= kCorners[i][d] ? xi[d] : 1.0 - xi[d];
    n[i] = v;
  }
  return n;
}

ShapeGrad shape_grad(const Vec3& xi) {
  ShapeGrad g;
  for (int i = 0; i < 8; ++i) {
    std::array<double, 3> f{}, df{};
    for (int d = 0; d < 3; ++d) {
      f[d] = kCorners[i][d] ? xi[d] : 1.0 - xi[d];
      df[d] = kCorners[i][d] ? 1.0 : -1.0;
    }
    g(i, 0) = df[0] * f[1] * f[2];
    g(i, 1) = f[0] * df[1] * f[2];
    g(i, 2) = f[0] * f[1] * df[2];
  }
  return g;
}

const std::array<Vec3, 8>& gauss_points() {
  static const std::array<Vec3, 8> points = [] {
    const double a = 0.5 - 0.5 / std::sqrt(3.0);
    const double b = 0.5 + 0.5 / std::sqrt(3.0);
    std::array<Vec3, 8> p;
    for (int i = 0; i < 8; ++i)
      p[i] = Vec3(kCorners[i][0] ? b : a, kCorners[i][1] ? b : a, kCorners[i][2] ? b : a);
    return p;
  }();
  return points;
}

ShapeGrad physical_grad(const Nodes& x, const Vec3& xi, double* det_j) {
  const ShapeGrad dn = shape_grad(xi);
  const Mat3 j = x * dn;
  if (det_j) *det_j = j.determinant();
  // dN/dX = dN/dxi * J^{-1}
  return dn * j.inverse();
}

double volume(const Nodes& x) {
  double v = 0.0;
  for (const Vec3& g : gauss_points()) v += kGaussWeight * jacobian(x, g).determinant();
  return v;
}

std::optional<Vec3> inverse_map(const Nodes& x, const Vec3& p, double tol, int max_iterations) {
  Vec3 xi = kCentre;
  const double scale = std::max((x.rowwise().maxCoeff() - x.rowwise().minCoeff()).norm(), 1e-300);
  for (int it = 0; it < max_iterations; ++it) {
    const Vec3 r = map(x, xi) - p;
    if (r.norm() <= tol * scale) return xi;
    const Mat3 j = jacobian(x, xi);
    const double det = j.determinant();
    if (!(std::abs(det) > 0.0)) return std::nullopt;
    xi -= j.inverse() * r;
    if (!xi.allFinite() || xi.cwiseAbs().maxCoeff() > 1e6) return std::nullopt;
  }
  if ((map(x, xi) - p).norm() <= 1e3 * tol * scale) return xi;
  return std::nullopt;
}

}  // namespace needlesim::hex

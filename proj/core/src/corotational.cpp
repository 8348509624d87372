#include "needlesim/corotational.hpp"

#include "needlesim/log.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

namespace needlesim {

Eigen::Matrix<double, 6, 24> strain_displacement(const hex::ShapeGrad& g) {
  Eigen::Matrix<double, 6, 24> b = Eigen::Matrix<double, 6, 24>::Zero();
  for (int i = 0; i < 8; ++i) {
    const int c = 3 * i;
    b(0, c) = g(i, 0);
    b(1, c + 1) = g(i, 1);
    b(2, c + 2) = g(i, 2);
    b(3, c + 1) = g(i, 2);
    b(3, c + 2) = g(i, 1);
    b(4, c) = g(i, 2);
    b(4, c + 2) = g(i, 0);
    b(5, c) = g(i, 1);
    b(5, c + 1) = g(i, 0);
  }
  return b;
}

CorotationalElement make_element(const hex::Nodes& rest, const Material& material) {
  CorotationalElement el;
  el.rest = rest;
  el.stiffness.setZero();
  const Mat6 d = material.hooke();
  for (const Vec3& gp : hex::gauss_points()) {
    double det = 0.0;
    const hex::ShapeGrad g = hex::physical_grad(rest, gp, &det);
    if (det <= 0.0) throw NumericalFailure("hexahedron has a non-positive Jacobian");
    const auto b = strain_displacement(g);
    el.stiffness.noalias() += (hex::kGaussWeight * det) * b.transpose() * d * b;
    el.volume += hex::kGaussWeight * det;
  }
  el.stiffness = 0.5 * (el.stiffness + el.stiffness.transpose()).eval();
  el.centre_grad = hex::physical_grad(rest, hex::kCentre);
  return el;
}

Mat3 deformation_gradient(const CorotationalElement& el, const hex::Nodes& x) {
  // Written as I + grad u so the rest state gives F = I (and R = I) exactly.
  return Mat3::Identity() + (x - el.rest) * el.centre_grad;
}

bool polar_rotation(const Mat3& f, Mat3& r) {
  if (!(f.determinant() > 0.0)) return false;
  Mat3 q = f;
  for (int it = 0; it < 100; ++it) {
    const Mat3 next = 0.5 * (q + q.inverse().transpose());
    const double change = (next - q).norm();
    q = next;
    if (change <= 1e-12 * std::max(1.0, q.norm())) {
      r = q;
      return true;
    }
  }
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r = svd.matrixU() * svd.matrixV().transpose();
  return true;
}

bool extract_rotation(CorotationalElement& el, const hex::Nodes& x) {
  if (polar_rotation(deformation_gradient(el, x), el.rotation)) return true;
  log::warn("inverted element (det F <= 0); reusing previous rotation");
  return false;
}

Vec24 corotated_displacement(const CorotationalElement& el, const hex::Nodes& x) {
  const hex::Nodes local = el.rotation.transpose() * x - el.rest;
  return flatten(local);
}

double element_energy(const CorotationalElement& el, const hex::Nodes& x) {
  const Vec24 d = corotated_displacement(el, x);
  return 0.5 * d.dot(el.stiffness * d);
}

Vec24 internal_force(const CorotationalElement& el, const hex::Nodes& x) {
  const Mat3& r = el.rotation;
  const hex::Nodes y = r.transpose() * x;
  const Vec24 g = el.stiffness * flatten(y - el.rest);
  // The rotation depends on x through the polar decomposition; its variation
  // contributes -R (h x dN_k/dX) with h solving (tr(S) I - S) h = sum y_i x g_i.
  Vec3 c = Vec3::Zero();
  for (int i = 0; i < 8; ++i) c += y.col(i).cross(g.segment<3>(3 * i));
  const Mat3 s = r.transpose() * deformation_gradient(el, x);
  const Mat3 sym = 0.5 * (s + s.transpose());
  const Mat3 gmat = sym.trace() * Mat3::Identity() - sym;
  const Vec3 h = gmat.partialPivLu().solve(c);
  Vec24 f;
  for (int k = 0; k < 8; ++k) {
    const Vec3 gk = el.centre_grad.row(k).transpose();
    f.segment<3>(3 * k) = r * (g.segment<3>(3 * k) - h.cross(gk));
  }
  return f;
}

Mat24 tangent_stiffness(const CorotationalElement& el) {
  const Mat3& r = el.rotation;
  Mat24 k;
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i)
      k.block<3, 3>(3 * i, 3 * j).noalias() = r * el.stiffness.block<3, 3>(3 * i, 3 * j) * r.transpose();
  return k;
}

CentreSample centre_sample(const CorotationalElement& el, const hex::Nodes& x,
                           const Material& material) {
  const hex::Nodes d = el.rotation.transpose() * x - el.rest;
  const Mat3 grad = d * el.centre_grad;
  CentreSample s;
  s.strain = 0.5 * (grad + grad.transpose());
  s.stress = material.stress(s.strain);
  return s;
}

CentreSample centre_sample_world(const CorotationalElement& el, const hex::Nodes& x,
                                 const Material& material) {
  CentreSample s = centre_sample(el, x, material);
  const Mat3& r = el.rotation;
  s.strain = r * s.strain * r.transpose();
  s.stress = r * s.stress * r.transpose();
  return s;
}

}  // namespace needlesim

#include "needlesim/material.hpp"

#include <cmath>

namespace needlesim {

void Material::validate(const std::string& context) const {
  auto bad = [&](const std::string& what) { throw InvalidInput(context + ": " + what); };
  if (!(young > 0.0) || !std::isfinite(young)) bad("Young's modulus must be positive");
  if (!(poisson > -1.0 && poisson < 0.5)) bad("Poisson ratio must lie in (-1, 0.5)");
  if (!(density > 0.0) || !std::isfinite(density)) bad("density must be positive");
  if (!(rayleigh_mass >= 0.0)) bad("Rayleigh mass coefficient must be non-negative");
  if (!(rayleigh_stiffness >= 0.0)) bad("Rayleigh stiffness coefficient must be non-negative");
}

Mat6 Material::hooke() const {
  const double lam = lame_lambda();
  const double mu = shear_modulus();
  Mat6 d = Mat6::Zero();
  d.topLeftCorner<3, 3>().setConstant(lam);
  d.topLeftCorner<3, 3>().diagonal().array() += 2.0 * mu;
  d.bottomRightCorner<3, 3>().diagonal().setConstant(mu);
  return d;
}

Mat3 Material::stress(const Mat3& strain) const {
  const double lam = lame_lambda();
  const double mu = shear_modulus();
  return lam * strain.trace() * Mat3::Identity() + 2.0 * mu * strain;
}

Vec6 to_voigt_strain(const Mat3& e) {
  Vec6 v;
  v << e(0, 0), e(1, 1), e(2, 2), 2.0 * e(1, 2), 2.0 * e(0, 2), 2.0 * e(0, 1);
  return v;
}

Vec6 to_voigt_stress(const Mat3& s) {
  Vec6 v;
  v << s(0, 0), s(1, 1), s(2, 2), s(1, 2), s(0, 2), s(0, 1);
  return v;
}

Mat3 from_voigt_stress(const Vec6& s) {
  Mat3 m;
  m << s[0], s[5], s[4], s[5], s[1], s[3], s[4], s[3], s[2];
  return m;
}

double von_mises(const Mat3& s) {
  const Mat3 dev = s - s.trace() / 3.0 * Mat3::Identity();
  return std::sqrt(1.5 * dev.squaredNorm());
}

}  // namespace needlesim

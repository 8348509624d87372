#pragma once

#include "needlesim/types.hpp"

namespace needlesim {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

struct Material {
  double young = 1.0;          // [Pa]
  double poisson = 0.3;        // [-]
  double density = 1000.0;     // [kg/m^3]
  double rayleigh_mass = 0.1;  // alpha [1/s]
  double rayleigh_stiffness = 0.1;  // beta [s]

  /// Throws InvalidInput naming the offending field.
  void validate(const std::string& context = "material") const;

  double lame_lambda() const { return young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)); }
  double shear_modulus() const { return young / (2.0 * (1.0 + poisson)); }

  /// Isotropic elasticity in Voigt order (xx, yy, zz, yz, xz, xy) with
  /// engineering shear strains.
  Mat6 hooke() const;
  Mat3 stress(const Mat3& strain) const;
};

Vec6 to_voigt_strain(const Mat3& e);
Vec6 to_voigt_stress(const Mat3& s);
Mat3 from_voigt_stress(const Vec6& s);

double von_mises(const Mat3& s);

}  // namespace needlesim

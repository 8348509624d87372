#pragma once

#include "needlesim/material.hpp"
#include "needlesim/shape_functions.hpp"

namespace needlesim {

using Mat24 = Eigen::Matrix<double, 24, 24>;
using Vec24 = Eigen::Matrix<double, 24, 1>;

/// Rest-configuration data of one corotational hexahedron.
struct CorotationalElement {
  hex::Nodes rest;
  Mat24 stiffness;          // K_e, 8-point Gauss
  hex::ShapeGrad centre_grad;  // dN/dX at the element centre
  double volume = 0.0;
  Mat3 rotation = Mat3::Identity();
};

/// Strain-displacement matrix (6x24, Voigt with engineering shears).
Eigen::Matrix<double, 6, 24> strain_displacement(const hex::ShapeGrad& grad);

/// Throws NumericalFailure for a non-positive Jacobian at any Gauss point.
CorotationalElement make_element(const hex::Nodes& rest, const Material& material);

Mat3 deformation_gradient(const CorotationalElement& el, const hex::Nodes& x);

/// Rotation factor of the polar decomposition F = R S. Returns false (and
/// leaves R untouched) when det F <= 0.
bool polar_rotation(const Mat3& f, Mat3& r);

/// Updates `el.rotation` from the current nodes; returns false and keeps the
/// previous rotation (with a warning) for an inverted element.
bool extract_rotation(CorotationalElement& el, const hex::Nodes& x);

inline Vec24 flatten(const hex::Nodes& x) { return Eigen::Map<const Vec24>(x.data()); }

/// Corotated displacement d = R^T x - X.
Vec24 corotated_displacement(const CorotationalElement& el, const hex::Nodes& x);

/// Elastic energy 1/2 d^T K_e d for the stored rotation.
double element_energy(const CorotationalElement& el, const hex::Nodes& x);

/// Internal force, the exact gradient of `element_energy` with R = R(x).
Vec24 internal_force(const CorotationalElement& el, const hex::Nodes& x);

/// Tangent R K_e R^T (rotation held fixed).
Mat24 tangent_stiffness(const CorotationalElement& el);

struct CentreSample {
  Mat3 strain;
  Mat3 stress;
};

/// Strain and stress at the centre in the corotated element frame.
CentreSample centre_sample(const CorotationalElement& el, const hex::Nodes& x,
                           const Material& material);
/// The same sample rotated to the world frame.
CentreSample centre_sample_world(const CorotationalElement& el, const hex::Nodes& x,
                                 const Material& material);

}  // namespace needlesim

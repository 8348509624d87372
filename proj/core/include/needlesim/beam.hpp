#pragma once

#include "needlesim/material.hpp"

#include <Eigen/Geometry>

#include <string>
#include <vector>

namespace needlesim {

using Quat = Eigen::Quaterniond;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;

/// Circular cross-section.
struct BeamSection {
  double radius = 0.0;
  double area = 0.0;
  double inertia = 0.0;  // second moment about a diameter
  double polar = 0.0;    // torsion constant

  static BeamSection circular(double radius);
};

/// Chain of corotational Euler-Bernoulli segments, 6 DOF per node. Node
/// orientations map the material frame to the world; the first material
/// axis runs along the rest segment direction.
struct BeamModel {
  std::string name;
  Material material;
  BeamSection section;
  std::vector<double> rest_length;
  std::vector<Vec3> x;
  std::vector<Quat> q;
  /// Per node: linear velocity (3) followed by world angular velocity (3).
  VecX v;

  static BeamModel straight(std::string name, const Vec3& base, const Vec3& direction,
                            double length, int segments, double radius, const Material& material);

  std::size_t num_nodes() const { return x.size(); }
  std::size_t num_dofs() const { return 6 * x.size(); }
  double length() const;
  void validate() const;
};

/// Classical 12x12 stiffness in the local frame (x axial) for DOFs
/// (u_a, theta_a, u_b, theta_b).
Mat12 beam_stiffness_local(double length, const Material& material, const BeamSection& section);

/// Corotational frame of a segment in the current configuration.
Mat3 segment_frame(const BeamModel& beam, std::size_t segment);

/// Local stiffness rotated to the segment's corotational frame.
Mat12 beam_stiffness(const BeamModel& beam, std::size_t segment);

double segment_energy(const BeamModel& beam, std::size_t segment);
/// Gradient of `segment_energy` w.r.t. (dx_a, phi_a, dx_b, phi_b), with phi a
/// world-frame rotation increment.
Vec12 segment_force(const BeamModel& beam, std::size_t segment);

double beam_energy(const BeamModel& beam);
VecX beam_internal_force(const BeamModel& beam);
MatX beam_global_stiffness(const BeamModel& beam);
VecX beam_lumped_mass(const BeamModel& beam);

struct BeamFrame {
  Vec3 position;
  Vec3 tangent;
  Vec3 normal;
  Vec3 binormal;
};

BeamFrame tip_frame(const BeamModel& beam);
/// Point at rest arclength `s` from the base, linearly interpolated along the
/// current segments. Out-of-range `s` is clamped with a warning.
BeamFrame shaft_point(const BeamModel& beam, double s);

struct BeamProjection {
  std::size_t segment = 0;
  double fraction = 0.0;   // along the segment, in [0,1]
  double arclength = 0.0;  // rest arclength from the base
  Vec3 point;
  double distance = 0.0;
};
/// Closest point of the current centreline to `p`.
BeamProjection project_onto_beam(const BeamModel& beam, const Vec3& p);

/// v += dv, x += tau v, q <- exp(tau omega) q.
void commit_beam(BeamModel& beam, const VecX& dv, double tau);

}  // namespace needlesim

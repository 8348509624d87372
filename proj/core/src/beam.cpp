#include "needlesim/beam.hpp"

#include "needlesim/log.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <numbers>

namespace needlesim {
namespace {

template <typename S>
using V3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using M3 = Eigen::Matrix<S, 3, 3>;

template <typename S>
M3<S> hat(const V3<S>& w) {
  M3<S> m;
  m << S(0), -w.z(), w.y(), w.z(), S(0), -w.x(), -w.y(), w.x(), S(0);
  return m;
}

template <typename S>
M3<S> exp_so3(const V3<S>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S th2 = w.squaredNorm();
  const M3<S> k = hat(w);
  if (th2 < S(1e-12)) return M3<S>::Identity() + k + S(0.5) * k * k;
  const S th = sqrt(th2);
  return M3<S>::Identity() + (sin(th) / th) * k + ((S(1) - cos(th)) / th2) * k * k;
}

template <typename S>
V3<S> log_so3(const M3<S>& r) {
  using std::atan2;
  using std::sqrt;
  const V3<S> s(S(0.5) * (r(2, 1) - r(1, 2)), S(0.5) * (r(0, 2) - r(2, 0)),
                S(0.5) * (r(1, 0) - r(0, 1)));
  const S sin2 = s.squaredNorm();
  const S c = S(0.5) * (r.trace() - S(1));
  if (sin2 < S(1e-12) && c > S(0)) return (S(1) + sin2 / S(6)) * s;
  const S sn = sqrt(sin2);
  return (atan2(sn, c) / sn) * s;
}

/// Rotation taking unit vector a onto unit vector b along the shortest arc.
template <typename S>
M3<S> align(const V3<S>& a, const V3<S>& b) {
  const V3<S> axis = a.cross(b);
  const S c = a.dot(b);
  const M3<S> k = hat(axis);
  return M3<S>::Identity() + k + k * k / (S(1) + c);
}

struct SegmentParams {
  double length;
  double ea, gj, ei;
};

SegmentParams params(const BeamModel& beam, std::size_t s) {
  const double g = beam.material.shear_modulus();
  return {beam.rest_length[s], beam.material.young * beam.section.area, g * beam.section.polar,
          beam.material.young * beam.section.inertia};
}

template <typename S>
M3<S> frame_of(const V3<S>& xa, const V3<S>& xb, const M3<S>& da, const M3<S>& db) {
  const M3<S> rm = da * exp_so3<S>(S(0.5) * log_so3<S>(M3<S>(da.transpose() * db)));
  const V3<S> chord = xb - xa;
  const V3<S> e = chord / chord.norm();
  return align<S>(V3<S>(rm.col(0)), e) * rm;
}

template <typename S>
S energy_of(const SegmentParams& p, const V3<S>& xa, const V3<S>& xb, const M3<S>& da,
            const M3<S>& db) {
  const M3<S> re = frame_of<S>(xa, xb, da, db);
  const V3<S> ta = log_so3<S>(M3<S>(re.transpose() * da));
  const V3<S> tb = log_so3<S>(M3<S>(re.transpose() * db));
  const S stretch = (xb - xa).norm() - S(p.length);
  const S axial = S(0.5 * p.ea / p.length) * stretch * stretch;
  const S twist = S(0.5 * p.gj / p.length) * (tb.x() - ta.x()) * (tb.x() - ta.x());
  const S bend = S(2.0 * p.ei / p.length) *
                 (ta.y() * ta.y() + ta.y() * tb.y() + tb.y() * tb.y() + ta.z() * ta.z() +
                  ta.z() * tb.z() + tb.z() * tb.z());
  return axial + twist + bend;
}

}  // namespace

BeamSection BeamSection::circular(double r) {
  if (!(r > 0.0)) throw InvalidInput("beam radius must be positive");
  const double pi = std::numbers::pi;
  return {r, pi * r * r, pi * std::pow(r, 4) / 4.0, pi * std::pow(r, 4) / 2.0};
}

BeamModel BeamModel::straight(std::string name, const Vec3& base, const Vec3& direction,
                              double length, int segments, double radius,
                              const Material& material) {
  if (segments < 1) throw InvalidInput("beam needs at least one segment");
  if (!(direction.norm() > 0.0)) throw InvalidInput("beam direction must be non-zero");
  BeamModel b;
  b.name = std::move(name);
  b.material = material;
  b.section = BeamSection::circular(radius);
  const Vec3 t = direction.normalized();
  const Quat q0 = Quat::FromTwoVectors(Vec3::UnitX(), t).normalized();
  for (int i = 0; i <= segments; ++i) {
    b.x.push_back(base + t * (length * i / segments));
    b.q.push_back(q0);
  }
  b.rest_length.assign(static_cast<std::size_t>(segments), length / segments);
  b.v = VecX::Zero(static_cast<Eigen::Index>(6 * b.x.size()));
  b.validate();
  return b;
}

double BeamModel::length() const {
  double l = 0.0;
  for (double s : rest_length) l += s;
  return l;
}

void BeamModel::validate() const {
  material.validate("beam '" + name + "'");
  if (x.size() < 2) throw InvalidInput("beam '" + name + "' needs at least two nodes");
  if (q.size() != x.size() || rest_length.size() + 1 != x.size())
    throw InvalidInput("beam '" + name + "' has inconsistent arrays");
  for (double l : rest_length)
    if (!(l >= 1e-9)) throw InvalidInput("beam '" + name + "' has a segment shorter than 1e-9 m");
  for (const Quat& r : q)
    if (std::abs(r.norm() - 1.0) > 1e-10)
      throw InvalidInput("beam '" + name + "' has a non-unit orientation");
  if (!(section.radius > 0.0)) throw InvalidInput("beam '" + name + "' needs a positive radius");
}

Mat12 beam_stiffness_local(double l, const Material& m, const BeamSection& sec) {
  if (!(l >= 1e-9)) throw InvalidInput("beam segment shorter than 1e-9 m");
  const double ea = m.young * sec.area / l;
  const double gj = m.shear_modulus() * sec.polar / l;
  const double ei = m.young * sec.inertia;
  Mat12 k = Mat12::Zero();
  // DOF indices: u_a 0-2, theta_a 3-5, u_b 6-8, theta_b 9-11.
  k(0, 0) = k(6, 6) = ea;
  k(0, 6) = k(6, 0) = -ea;
  k(3, 3) = k(9, 9) = gj;
  k(3, 9) = k(9, 3) = -gj;
  const double a = 12.0 * ei / (l * l * l), b = 6.0 * ei / (l * l), c = 4.0 * ei / l,
               d = 2.0 * ei / l;
  // Bending in the x-y plane: (v_a, rz_a, v_b, rz_b) = (1, 5, 7, 11).
  {
    const int idx[4] = {1, 5, 7, 11};
    const double kb[4][4] = {{a, b, -a, b}, {b, c, -b, d}, {-a, -b, a, -b}, {b, d, -b, c}};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) k(idx[i], idx[j]) = kb[i][j];
  }
  // Bending in the x-z plane: (w_a, ry_a, w_b, ry_b) = (2, 4, 8, 10).
  {
    const int idx[4] = {2, 4, 8, 10};
    const double kb[4][4] = {{a, -b, -a, -b}, {-b, c, b, d}, {-a, b, a, b}, {-b, d, b, c}};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) k(idx[i], idx[j]) = kb[i][j];
  }
  return k;
}

Mat3 segment_frame(const BeamModel& beam, std::size_t s) {
  return frame_of<double>(beam.x[s], beam.x[s + 1], beam.q[s].toRotationMatrix(),
                          beam.q[s + 1].toRotationMatrix());
}

Mat12 beam_stiffness(const BeamModel& beam, std::size_t s) {
  const Mat12 kl = beam_stiffness_local(beam.rest_length[s], beam.material, beam.section);
  const Mat3 r = segment_frame(beam, s);
  Mat12 t = Mat12::Zero();
  for (int i = 0; i < 4; ++i) t.block<3, 3>(3 * i, 3 * i) = r;
  return t * kl * t.transpose();
}

double segment_energy(const BeamModel& beam, std::size_t s) {
  return energy_of<double>(params(beam, s), beam.x[s], beam.x[s + 1],
                           beam.q[s].toRotationMatrix(), beam.q[s + 1].toRotationMatrix());
}

Vec12 segment_force(const BeamModel& beam, std::size_t s) {
  using AD = Eigen::AutoDiffScalar<Vec12>;
  Eigen::Matrix<AD, 12, 1> z;
  for (int i = 0; i < 12; ++i) z[i] = AD(0.0, 12, i);
  const V3<AD> xa = beam.x[s].cast<AD>() + z.segment<3>(0);
  const V3<AD> xb = beam.x[s + 1].cast<AD>() + z.segment<3>(6);
  const M3<AD> da = exp_so3<AD>(z.segment<3>(3)) * beam.q[s].toRotationMatrix().cast<AD>();
  const M3<AD> db = exp_so3<AD>(z.segment<3>(9)) * beam.q[s + 1].toRotationMatrix().cast<AD>();
  const AD e = energy_of<AD>(params(beam, s), xa, xb, da, db);
  return e.derivatives();
}

double beam_energy(const BeamModel& beam) {
  double e = 0.0;
  for (std::size_t s = 0; s < beam.rest_length.size(); ++s) e += segment_energy(beam, s);
  return e;
}

VecX beam_internal_force(const BeamModel& beam) {
  VecX f = VecX::Zero(static_cast<Eigen::Index>(beam.num_dofs()));
  for (std::size_t s = 0; s < beam.rest_length.size(); ++s)
    f.segment<12>(static_cast<Eigen::Index>(6 * s)) += segment_force(beam, s);
  return f;
}

MatX beam_global_stiffness(const BeamModel& beam) {
  const auto n = static_cast<Eigen::Index>(beam.num_dofs());
  MatX k = MatX::Zero(n, n);
  for (std::size_t s = 0; s < beam.rest_length.size(); ++s)
    k.block<12, 12>(static_cast<Eigen::Index>(6 * s), static_cast<Eigen::Index>(6 * s)) +=
        beam_stiffness(beam, s);
  return k;
}

VecX beam_lumped_mass(const BeamModel& beam) {
  const double rho = beam.material.density;
  VecX m = VecX::Zero(static_cast<Eigen::Index>(beam.num_dofs()));
  for (std::size_t s = 0; s < beam.rest_length.size(); ++s) {
    const double h = 0.5 * beam.rest_length[s];
    const double mass = rho * beam.section.area * h;
    // Rotational inertia of the half segment about its end, plus torsion.
    const double inertia = rho * h * (beam.section.area * h * h / 3.0 + beam.section.polar);
    for (std::size_t node : {s, s + 1}) {
      m.segment<3>(static_cast<Eigen::Index>(6 * node)).array() += mass;
      m.segment<3>(static_cast<Eigen::Index>(6 * node + 3)).array() += inertia;
    }
  }
  return m;
}

namespace {

BeamFrame frame_at(const BeamModel& beam, std::size_t s, double f) {
  BeamFrame fr;
  fr.position = (1.0 - f) * beam.x[s] + f * beam.x[s + 1];
  fr.tangent = (beam.x[s + 1] - beam.x[s]).normalized();
  const Quat qm = beam.q[s].slerp(f, beam.q[s + 1]);
  Vec3 n = qm * Vec3::UnitY();
  n = (n - n.dot(fr.tangent) * fr.tangent).normalized();
  fr.normal = n;
  fr.binormal = fr.tangent.cross(n);
  return fr;
}

}  // namespace

BeamFrame tip_frame(const BeamModel& beam) {
  return frame_at(beam, beam.rest_length.size() - 1, 1.0);
}

BeamFrame shaft_point(const BeamModel& beam, double s) {
  const double total = beam.length();
  if (s < 0.0 || s > total) {
    log::warn("shaft_point: arclength ", s, " outside [0, ", total, "] on beam '", beam.name,
              "'; clamped");
    s = std::clamp(s, 0.0, total);
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < beam.rest_length.size(); ++k) {
    const double l = beam.rest_length[k];
    if (s <= acc + l || k + 1 == beam.rest_length.size())
      return frame_at(beam, k, std::clamp((s - acc) / l, 0.0, 1.0));
    acc += l;
  }
  return frame_at(beam, 0, 0.0);
}

BeamProjection project_onto_beam(const BeamModel& beam, const Vec3& p) {
  BeamProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (std::size_t k = 0; k < beam.rest_length.size(); ++k) {
    const Vec3 a = beam.x[k], b = beam.x[k + 1];
    const Vec3 ab = b - a;
    const double f = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    const Vec3 c = a + f * ab;
    const double d = (p - c).norm();
    if (d < best.distance) best = {k, f, acc + f * beam.rest_length[k], c, d};
    acc += beam.rest_length[k];
  }
  return best;
}

void commit_beam(BeamModel& beam, const VecX& dv, double tau) {
  if (!dv.allFinite()) throw NumericalFailure("non-finite beam velocity update on '" + beam.name + "'");
  beam.v += dv;
  for (std::size_t i = 0; i < beam.x.size(); ++i) {
    beam.x[i] += tau * beam.v.segment<3>(static_cast<Eigen::Index>(6 * i));
    const Vec3 w = tau * beam.v.segment<3>(static_cast<Eigen::Index>(6 * i + 3));
    const Mat3 r = exp_so3<double>(w);
    beam.q[i] = Quat(r * beam.q[i].toRotationMatrix()).normalized();
  }
}

}  // namespace needlesim

#include "needlesim/spr.hpp"

#include "needlesim/log.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <set>

namespace needlesim {

double RecoveredField::global_error() const {
  double s = 0.0;
  for (double e : eta) s += e * e;
  return std::sqrt(s);
}

namespace {

// Fits value(p) = a + b.(p - origin)/h and returns the fitted value at origin,
// or nothing when the centres do not span 3D.
std::optional<VecX> fit_linear(const std::vector<int>& patch, const std::vector<Vec3>& centres,
                               const MatX& values, const Vec3& origin, double h) {
  if (patch.size() < 4) return std::nullopt;
  MatX a(static_cast<Eigen::Index>(patch.size()), 4);
  MatX rhs(static_cast<Eigen::Index>(patch.size()), values.cols());
  for (std::size_t i = 0; i < patch.size(); ++i) {
    a(i, 0) = 1.0;
    a.block<1, 3>(i, 1) = ((centres[patch[i]] - origin) / h).transpose();
    rhs.row(i) = values.row(patch[i]);
  }
  Eigen::ColPivHouseholderQR<MatX> qr(a);
  qr.setThreshold(1e-8);
  if (qr.rank() < 4) return std::nullopt;
  const MatX coeff = qr.solve(rhs);
  return VecX(coeff.row(0).transpose());
}

}  // namespace

MatX recover_nodal(const HexMesh& mesh, const std::vector<ElementId>& elements,
                   const std::vector<Vec3>& centres, const MatX& values) {
  const std::size_t nn = mesh.nodes.size();
  std::vector<std::vector<int>> node_patch(nn);
  for (std::size_t k = 0; k < elements.size(); ++k)
    for (NodeId n : mesh.elements[elements[k]].nodes) node_patch[n].push_back(static_cast<int>(k));

  std::vector<double> volume(elements.size());
  for (std::size_t k = 0; k < elements.size(); ++k) volume[k] = mesh.rest_volume(elements[k]);

  std::vector<char> is_slave(nn, 0);
  for (const auto& tj : mesh.t_junctions) is_slave[tj.slave] = 1;

  const double h = mesh.grid.cell_size();
  MatX out = MatX::Zero(static_cast<Eigen::Index>(nn), values.cols());
  for (std::size_t n = 0; n < nn; ++n) {
    if (is_slave[n]) continue;
    const auto& patch = node_patch[n];
    if (patch.empty())
      throw NumericalFailure("SPR: node " + std::to_string(n) + " has an empty patch");
    const Vec3& p = mesh.nodes[n].rest;
    if (auto v = fit_linear(patch, centres, values, p, h)) {
      out.row(static_cast<Eigen::Index>(n)) = v->transpose();
      continue;
    }
    // Boundary nodes: widen the patch by one ring of neighbours.
    std::set<int> ring(patch.begin(), patch.end());
    for (int k : patch)
      for (NodeId m : mesh.elements[elements[k]].nodes)
        for (int q : node_patch[m]) ring.insert(q);
    const std::vector<int> wide(ring.begin(), ring.end());
    if (auto v = fit_linear(wide, centres, values, p, h)) {
      out.row(static_cast<Eigen::Index>(n)) = v->transpose();
      continue;
    }
    VecX acc = VecX::Zero(values.cols());
    double vol = 0.0;
    for (int k : patch) {
      acc += volume[k] * values.row(k).transpose();
      vol += volume[k];
    }
    out.row(static_cast<Eigen::Index>(n)) = (acc / vol).transpose();
  }
  for (const auto& fj : flatten_t_junctions(mesh.t_junctions)) {
    VecX acc = VecX::Zero(values.cols());
    for (const auto& [m, w] : fj.masters) acc += w * out.row(m).transpose();
    out.row(fj.slave) = acc.transpose();
  }
  return out;
}

double element_error(const CorotationalElement& el, const hex::Nodes& x, const Material& material,
                     const std::array<Mat3, 8>& strain_s, const std::array<Mat3, 8>& stress_s) {
  const hex::Nodes d = el.rotation.transpose() * x - el.rest;
  const Mat3& r = el.rotation;
  double sum = 0.0;
  for (const Vec3& gp : hex::gauss_points()) {
    double det = 0.0;
    const hex::ShapeGrad g = hex::physical_grad(el.rest, gp, &det);
    const Mat3 grad = d * g;
    const Mat3 eps_local = 0.5 * (grad + grad.transpose());
    const Mat3 eps_h = r * eps_local * r.transpose();
    const Mat3 sig_h = r * material.stress(eps_local) * r.transpose();
    const hex::Shape n = hex::shape(gp);
    Mat3 eps_s = Mat3::Zero(), sig_s = Mat3::Zero();
    for (int i = 0; i < 8; ++i) {
      eps_s += n[i] * strain_s[i];
      sig_s += n[i] * stress_s[i];
    }
    sum += hex::kGaussWeight * det * (eps_h - eps_s).cwiseProduct(sig_h - sig_s).sum();
  }
  return std::sqrt(std::max(0.0, sum));
}

RecoveredField recover_spr(const HexMesh& mesh, const TissueModel& model, const VecX& x) {
  const auto& active = model.active();
  const auto samples = model.centre_samples(x);
  std::vector<Vec3> centres(active.size());
  MatX values(static_cast<Eigen::Index>(active.size()), 18);
  for (std::size_t k = 0; k < active.size(); ++k) {
    centres[k] = hex::map(model.elements()[k].rest, hex::kCentre);
    values.block<1, 9>(k, 0) = Eigen::Map<const Eigen::Matrix<double, 1, 9>>(samples[k].strain.data());
    values.block<1, 9>(k, 9) = Eigen::Map<const Eigen::Matrix<double, 1, 9>>(samples[k].stress.data());
  }
  const MatX nodal = recover_nodal(mesh, active, centres, values);

  RecoveredField field;
  field.strain.resize(mesh.nodes.size());
  field.stress.resize(mesh.nodes.size());
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
    field.strain[n] = Eigen::Map<const Mat3>(VecX(nodal.block(n, 0, 1, 9).transpose()).data());
    field.stress[n] = Eigen::Map<const Mat3>(VecX(nodal.block(n, 9, 1, 9).transpose()).data());
  }
  field.eta.assign(mesh.elements.size(), 0.0);
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto& conn = model.connectivity(k);
    std::array<Mat3, 8> es, ss;
    for (int i = 0; i < 8; ++i) {
      es[i] = field.strain[conn[i]];
      ss[i] = field.stress[conn[i]];
    }
    const double eta = element_error(model.elements()[k], model.gather(x, k), model.material(), es, ss);
    field.eta[active[k]] = eta;
    field.eta_max = std::max(field.eta_max, eta);
  }
  return field;
}

std::vector<int> mark_elements(const std::vector<double>& errors, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw InvalidInput("theta must lie in (0, 1)");
  std::vector<int> out;
  const double top = errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end());
  if (!(top > 0.0)) return out;
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i] >= theta * top) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<ElementId> mark_elements(const HexMesh& mesh, const RecoveredField& field, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw InvalidInput("theta must lie in (0, 1)");
  std::vector<ElementId> out;
  if (!(field.eta_max > 0.0)) return out;
  int capped = 0;
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    if (!mesh.elements[e].active || field.eta[e] < theta * field.eta_max) continue;
    if (mesh.elements[e].depth >= mesh.max_depth) {
      ++capped;
      continue;
    }
    out.push_back(static_cast<ElementId>(e));
  }
  if (capped > 0) log::debug(capped, " marked elements already at maximum depth");
  return out;
}

}  // namespace needlesim

#include "needlesim/t_junctions.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <unordered_map>

namespace needlesim {
namespace {

// Classifies `xi` against the boundary of the reference cube. Returns the
// number of coordinates pinned to 0 or 1, or -1 when outside.
int boundary_order(const Vec3& xi, double tol, std::array<int, 3>& pinned) {
  int count = 0;
  for (int d = 0; d < 3; ++d) {
    if (xi[d] < -tol || xi[d] > 1.0 + tol) return -1;
    pinned[d] = -1;
    if (std::abs(xi[d]) <= tol) pinned[d] = 0;
    else if (std::abs(xi[d] - 1.0) <= tol) pinned[d] = 1;
    count += pinned[d] >= 0 ? 1 : 0;
  }
  return count;
}

int corner_index(int a, int b, int c) {
  for (int i = 0; i < 8; ++i)
    if (hex::kCorners[i][0] == a && hex::kCorners[i][1] == b && hex::kCorners[i][2] == c) return i;
  return -1;
}

}  // namespace

std::vector<TJunction> detect_t_junctions(const HexMesh& mesh) {
  const double h = mesh.grid.cell_size();
  const double tol_xi = 1e-9;

  // Bucket nodes on the base grid so each element only tests nearby nodes.
  std::unordered_map<long long, std::vector<NodeId>> buckets;
  const auto& ext = mesh.grid.extents;
  auto bucket_of = [&](const Vec3& p) {
    const Vec3 r = (p - mesh.grid.origin).cwiseQuotient(mesh.grid.spacing);
    std::array<long long, 3> c{};
    for (int d = 0; d < 3; ++d) c[d] = static_cast<long long>(std::floor(r[d]));
    return c;
  };
  auto flat = [&](long long i, long long j, long long k) {
    return i + (ext[0] + 3LL) * (j + (ext[1] + 3LL) * k);
  };
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
    const auto c = bucket_of(mesh.nodes[n].rest);
    buckets[flat(c[0], c[1], c[2])].push_back(static_cast<NodeId>(n));
  }

  struct Best {
    ElementId element = kNoElement;
    double volume = 0.0;
    Vec3 xi;
    std::array<int, 3> pinned{};
  };
  std::vector<Best> best(mesh.nodes.size());

  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const HexElement& el = mesh.elements[e];
    if (!el.active) continue;
    const hex::Nodes x = mesh.rest_nodes(static_cast<ElementId>(e));
    const double vol = hex::volume(x);
    const Vec3 lo = x.rowwise().minCoeff().array() - 1e-9 * h;
    const Vec3 hi = x.rowwise().maxCoeff().array() + 1e-9 * h;
    const auto b0 = bucket_of(lo), b1 = bucket_of(hi);
    for (long long k = b0[2]; k <= b1[2]; ++k)
      for (long long j = b0[1]; j <= b1[1]; ++j)
        for (long long i = b0[0]; i <= b1[0]; ++i) {
          const auto it = buckets.find(flat(i, j, k));
          if (it == buckets.end()) continue;
          for (NodeId n : it->second) {
            if (std::find(el.nodes.begin(), el.nodes.end(), n) != el.nodes.end()) continue;
            const Vec3& p = mesh.nodes[n].rest;
            if ((p.array() < lo.array()).any() || (p.array() > hi.array()).any()) continue;
            const auto xi = hex::inverse_map(x, p);
            if (!xi) continue;
            std::array<int, 3> pinned{};
            const int order = boundary_order(*xi, tol_xi, pinned);
            if (order != 1 && order != 2) continue;
            Best& b = best[n];
            if (b.element == kNoElement || vol > b.volume * (1.0 + 1e-12)) b = {static_cast<ElementId>(e), vol, *xi, pinned};
          }
        }
  }

  std::vector<TJunction> out;
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
    const Best& b = best[n];
    if (b.element == kNoElement) continue;
    const HexElement& el = mesh.elements[b.element];
    TJunction tj;
    tj.slave = static_cast<NodeId>(n);
    std::vector<int> free_axes;
    for (int d = 0; d < 3; ++d)
      if (b.pinned[d] < 0) free_axes.push_back(d);
    // Enumerate the corners of the edge (1 free axis) or face (2 free axes).
    const int count = 1 << free_axes.size();
    for (int m = 0; m < count; ++m) {
      std::array<int, 3> c{};
      double w = 1.0;
      for (int d = 0; d < 3; ++d) c[d] = b.pinned[d];
      for (std::size_t a = 0; a < free_axes.size(); ++a) {
        const int d = free_axes[a];
        c[d] = (m >> a) & 1;
        const double t = std::clamp(b.xi[d], 0.0, 1.0);
        w *= c[d] ? t : 1.0 - t;
      }
      tj.masters.push_back(el.nodes[corner_index(c[0], c[1], c[2])]);
      tj.weights.push_back(w);
    }
    out.push_back(std::move(tj));
  }
  return out;
}

std::vector<FlatJunction> flatten_t_junctions(const std::vector<TJunction>& junctions) {
  std::unordered_map<NodeId, const TJunction*> by_slave;
  for (const auto& tj : junctions) by_slave[tj.slave] = &tj;

  std::unordered_map<NodeId, std::map<NodeId, double>> memo;
  std::unordered_map<NodeId, int> visiting;
  // Depth-first substitution; chains are short (bounded by refinement depth).
  std::function<const std::map<NodeId, double>&(NodeId)> expand =
      [&](NodeId s) -> const std::map<NodeId, double>& {
    if (auto it = memo.find(s); it != memo.end()) return it->second;
    if (visiting[s]++) throw NumericalFailure("cyclic T-junction dependency at node " + std::to_string(s));
    std::map<NodeId, double> result;
    const TJunction& tj = *by_slave.at(s);
    for (std::size_t k = 0; k < tj.masters.size(); ++k) {
      const NodeId m = tj.masters[k];
      if (by_slave.count(m)) {
        for (const auto& [mm, w] : expand(m)) result[mm] += tj.weights[k] * w;
      } else {
        result[m] += tj.weights[k];
      }
    }
    std::erase_if(result, [](const auto& kv) { return std::abs(kv.second) < 1e-15; });
    return memo[s] = std::move(result);
  };

  std::vector<FlatJunction> out;
  out.reserve(junctions.size());
  for (const auto& tj : junctions) out.push_back({tj.slave, expand(tj.slave)});
  return out;
}

SparseMatrix build_t_matrix(const std::vector<TJunction>& junctions, std::size_t num_nodes) {
  const auto flat = flatten_t_junctions(junctions);
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < flat.size(); ++r) {
    for (int d = 0; d < 3; ++d) {
      const auto row = static_cast<int>(3 * r + d);
      trips.emplace_back(row, 3 * flat[r].slave + d, 1.0);
      for (const auto& [m, w] : flat[r].masters) trips.emplace_back(row, 3 * m + d, -w);
    }
  }
  SparseMatrix t(static_cast<Eigen::Index>(3 * flat.size()),
                 static_cast<Eigen::Index>(3 * num_nodes));
  t.setFromTriplets(trips.begin(), trips.end());
  return t;
}

SparseMatrix build_prolongation(const std::vector<TJunction>& junctions, std::size_t num_nodes,
                                std::vector<int>* free_dof) {
  const auto flat = flatten_t_junctions(junctions);
  std::vector<int> reduced(num_nodes, 0);
  for (const auto& fj : flat) reduced[fj.slave] = -1;
  int next = 0;
  for (auto& r : reduced)
    if (r == 0) r = next++;
    else r = -1;

  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t n = 0; n < num_nodes; ++n)
    if (reduced[n] >= 0)
      for (int d = 0; d < 3; ++d) trips.emplace_back(3 * n + d, 3 * reduced[n] + d, 1.0);
  for (const auto& fj : flat)
    for (const auto& [m, w] : fj.masters)
      for (int d = 0; d < 3; ++d) trips.emplace_back(3 * fj.slave + d, 3 * reduced[m] + d, w);
  SparseMatrix p(static_cast<Eigen::Index>(3 * num_nodes), 3 * next);
  p.setFromTriplets(trips.begin(), trips.end());
  if (free_dof) {
    free_dof->assign(3 * num_nodes, -1);
    for (std::size_t n = 0; n < num_nodes; ++n)
      if (reduced[n] >= 0)
        for (int d = 0; d < 3; ++d) (*free_dof)[3 * n + d] = 3 * reduced[n] + d;
  }
  return p;
}

}  // namespace needlesim

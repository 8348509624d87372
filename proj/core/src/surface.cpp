#include "needlesim/surface.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace needlesim {
namespace {

// Moller-Trumbore; returns the ray parameter of a hit with t > 0.
bool ray_hits_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                       const Vec3& c) {
  constexpr double kEps = 1e-15;
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < kEps * e1.norm() * e2.norm()) return false;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  return e2.dot(q) * inv > 0.0;
}

}  // namespace

bool SurfaceGeometry::is_watertight(std::string* diagnostic) const {
  auto fail = [&](const std::string& msg) {
    if (diagnostic) *diagnostic = msg;
    return false;
  };
  if (triangles.empty()) return fail("surface has no triangles");
  std::map<std::pair<int, int>, int> directed;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3];
      if (a < 0 || b < 0 || a >= static_cast<int>(vertices.size()) ||
          b >= static_cast<int>(vertices.size()))
        return fail("triangle " + std::to_string(t) + " references a missing vertex");
      if (a == b) return fail("triangle " + std::to_string(t) + " is degenerate");
      if (++directed[{a, b}] > 1)
        return fail("directed edge (" + std::to_string(a) + "," + std::to_string(b) +
                    ") used twice: surface is non-manifold or inconsistently oriented");
    }
  }
  for (const auto& [edge, count] : directed) {
    if (!directed.count({edge.second, edge.first}))
      return fail("edge (" + std::to_string(edge.first) + "," + std::to_string(edge.second) +
                  ") is a boundary edge: surface is not closed");
  }
  if (diagnostic) diagnostic->clear();
  return true;
}

Aabb SurfaceGeometry::bounds() const {
  Aabb box;
  for (const Vec3& v : vertices) box.extend(v);
  return box;
}

bool SurfaceGeometry::contains(const Vec3& p) const {
  // Direction chosen off-axis so rays through grid-aligned data avoid edges.
  static const Vec3 kDir = Vec3(1.0, 0.3137254901960784, 0.1715728752538099).normalized();
  int crossings = 0;
  for (const auto& tri : triangles)
    if (ray_hits_triangle(p, kDir, vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]))
      ++crossings;
  return crossings % 2 == 1;
}

SurfaceGeometry SurfaceGeometry::box(const Vec3& lo, const Vec3& hi) {
  SurfaceGeometry s;
  for (int i = 0; i < 8; ++i) {
    // Same corner ordering as the hexahedron.
    static constexpr int c[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    s.vertices.emplace_back(c[i][0] ? hi.x() : lo.x(), c[i][1] ? hi.y() : lo.y(),
                            c[i][2] ? hi.z() : lo.z());
  }
  // Outward-facing quads split into triangles.
  const int quads[6][4] = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                           {2, 3, 7, 6}, {1, 2, 6, 5}, {0, 4, 7, 3}};
  for (const auto& q : quads) {
    s.triangles.push_back({q[0], q[1], q[2]});
    s.triangles.push_back({q[0], q[2], q[3]});
  }
  return s;
}

SurfaceGeometry SurfaceGeometry::ellipsoid(const Vec3& centre, const Vec3& semi, int slices,
                                           int stacks) {
  if (slices < 3 || stacks < 2) throw InvalidInput("ellipsoid tessellation too coarse");
  SurfaceGeometry s;
  const double pi = std::numbers::pi;
  s.vertices.push_back(centre + Vec3(0, 0, semi.z()));
  for (int i = 1; i < stacks; ++i) {
    const double phi = pi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double th = 2.0 * pi * j / slices;
      s.vertices.push_back(centre + Vec3(semi.x() * std::sin(phi) * std::cos(th),
                                         semi.y() * std::sin(phi) * std::sin(th),
                                         semi.z() * std::cos(phi)));
    }
  }
  s.vertices.push_back(centre - Vec3(0, 0, semi.z()));
  const int south = static_cast<int>(s.vertices.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) s.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      s.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      s.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  for (int j = 0; j < slices; ++j)
    s.triangles.push_back({south, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  return s;
}

SurfaceGeometry SurfaceGeometry::load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open surface mesh '" + path.string() + "'");
  SurfaceGeometry s;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z()))
        throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      s.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        const int idx = std::stoi(tok.substr(0, tok.find('/')));
        poly.push_back(idx > 0 ? idx - 1 : static_cast<int>(s.vertices.size()) + idx);
      }
      if (poly.size() < 3)
        throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": bad face");
      for (std::size_t k = 1; k + 1 < poly.size(); ++k)
        s.triangles.push_back({poly[0], poly[k], poly[k + 1]});
    }
  }
  return s;
}

}  // namespace needlesim

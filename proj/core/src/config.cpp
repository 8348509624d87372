#include "needlesim/config.hpp"

#include "needlesim/surface.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace needlesim {

Vec3 TrajectoryConfig::velocity(int k, double tau) const {
  const Vec3 d = direction.normalized();
  const int insert_steps = speed > 0.0 ? static_cast<int>(std::llround(travel / (speed * tau))) : 0;
  if (k < insert_steps) return speed * d;
  if (retract_step >= 0 && k >= retract_step && retract_speed > 0.0) {
    const int back = static_cast<int>(std::llround(retract_travel / (retract_speed * tau)));
    if (k < retract_step + back) return -retract_speed * d;
  }
  return Vec3::Zero();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> numbers(const std::string& value, std::size_t count, const std::string& where) {
  std::istringstream is(value);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw InvalidInput(where + ": '" + tok + "' is not a number");
    out.push_back(v);
  }
  if (out.size() != count)
    throw InvalidInput(where + ": expected " + std::to_string(count) + " number(s), got " +
                       std::to_string(out.size()));
  return out;
}

double number(const std::string& v, const std::string& where) { return numbers(v, 1, where)[0]; }

int integer(const std::string& v, const std::string& where) {
  const double d = number(v, where);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw InvalidInput(where + ": expected an integer");
  return static_cast<int>(d);
}

Vec3 vec3(const std::string& v, const std::string& where) {
  const auto n = numbers(v, 3, where);
  return {n[0], n[1], n[2]};
}

bool boolean(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidInput(where + ": expected true or false");
}

bool material_key(Material& m, const std::string& key, const std::string& v, const std::string& where) {
  if (key == "young") m.young = number(v, where);
  else if (key == "poisson") m.poisson = number(v, where);
  else if (key == "density") m.density = number(v, where);
  else if (key == "rayleigh_mass") m.rayleigh_mass = number(v, where);
  else if (key == "rayleigh_stiffness") m.rayleigh_stiffness = number(v, where);
  else return false;
  return true;
}

NeedleConfig& needle_named(ScenarioConfig& c, const std::string& name) {
  for (auto& n : c.needles)
    if (n.name == name) return n;
  c.needles.push_back({});
  c.needles.back().name = name;
  c.needles.back().material = {50e6, 0.3, 1000.0, 0.1, 0.1};
  return c.needles.back();
}

void apply(ScenarioConfig& c, const std::string& key, const std::string& v, const std::string& where,
           const std::filesystem::path& base_dir) {
  auto prefix = [&](const std::string& p) { return key.rfind(p, 0) == 0; };
  if (key == "name") c.name = v;
  else if (key == "steps") c.steps = integer(v, where);
  else if (key == "tau") c.tau = number(v, where);
  else if (key == "adaptive") c.adaptive = boolean(v, where);
  else if (key == "theta") c.theta = number(v, where);
  else if (key == "max_depth") c.max_depth = integer(v, where);
  else if (key == "uniform_refine") c.uniform_refine = integer(v, where);
  else if (key == "adapt_stride") c.adapt_stride = integer(v, where);
  else if (key == "vtk_every") c.vtk_every = integer(v, where);
  else if (key == "tjunction_solver") {
    if (v == "condensed") c.tjunction_solver = TJunctionMode::kCondensed;
    else if (v == "lagrange") c.tjunction_solver = TJunctionMode::kLagrange;
    else throw InvalidInput(where + ": tjunction_solver must be 'condensed' or 'lagrange'");
  } else if (key == "gravity") c.gravity = vec3(v, where);
  else if (key == "geometry") c.geometry = v;
  else if (key == "geometry.min") c.box_min = vec3(v, where);
  else if (key == "geometry.max") c.box_max = vec3(v, where);
  else if (key == "geometry.center") c.centre = vec3(v, where);
  else if (key == "geometry.semi_axes") c.semi_axes = vec3(v, where);
  else if (key == "geometry.path") {
    const std::filesystem::path p(v);
    c.surface_path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  } else if (key == "grid.resolution") {
    const auto n = numbers(v, 3, where);
    for (int d = 0; d < 3; ++d) {
      if (n[d] != std::floor(n[d])) throw InvalidInput(where + ": resolution must be integers");
      c.resolution[d] = static_cast<int>(n[d]);
    }
  } else if (prefix("tissue.")) {
    if (!material_key(c.tissue, key.substr(7), v, where)) throw InvalidInput(where + ": unknown key '" + key + "'");
  } else if (prefix("needle.")) {
    const auto rest = key.substr(7);
    const auto dot = rest.find('.');
    if (dot == std::string::npos || dot == 0) throw InvalidInput(where + ": expected needle.<name>.<field>");
    NeedleConfig& n = needle_named(c, rest.substr(0, dot));
    const auto field = rest.substr(dot + 1);
    if (field == "length") n.length = number(v, where);
    else if (field == "radius") n.radius = number(v, where);
    else if (field == "segments") n.segments = integer(v, where);
    else if (field == "nested_in") n.nested_in = v;
    else if (field == "release_step") n.release_step = integer(v, where);
    else if (!material_key(n.material, field, v, where))
      throw InvalidInput(where + ": unknown key '" + key + "'");
  } else if (key == "interaction.mu") c.interaction.mu = number(v, where);
  else if (key == "interaction.puncture") c.interaction.puncture = number(v, where);
  else if (key == "interaction.cutting") c.interaction.cutting = number(v, where);
  else if (key == "interaction.shaft_spacing") c.interaction.shaft_spacing = number(v, where);
  else if (key == "interaction.penetration_tolerance") c.interaction.penetration_tolerance = number(v, where);
  else if (key == "trajectory.tip_start") c.trajectory.tip_start = vec3(v, where);
  else if (key == "trajectory.direction") c.trajectory.direction = vec3(v, where);
  else if (key == "trajectory.speed") c.trajectory.speed = number(v, where);
  else if (key == "trajectory.travel") c.trajectory.travel = number(v, where);
  else if (key == "trajectory.retract_step") c.trajectory.retract_step = integer(v, where);
  else if (key == "trajectory.retract_speed") c.trajectory.retract_speed = number(v, where);
  else if (key == "trajectory.retract_travel") c.trajectory.retract_travel = number(v, where);
  else if (key == "pgs.tolerance") c.pgs.tolerance = number(v, where);
  else if (key == "pgs.max_iterations") c.pgs.max_iterations = integer(v, where);
  else if (prefix("probe.")) c.probes.push_back({key.substr(6), vec3(v, where)});
  else if (key == "target") c.target = vec3(v, where);
  else if (key == "target.needle") c.target_needle = v;
  else if (prefix("fixed.")) {
    const auto n = numbers(v, 6, where);
    c.fixed.push_back({key.substr(6), {{n[0], n[1], n[2]}, {n[3], n[4], n[5]}}, Vec3::Zero()});
  } else if (prefix("preload.")) {
    const auto n = numbers(v, 9, where);
    c.preload.push_back({key.substr(8), {{n[0], n[1], n[2]}, {n[3], n[4], n[5]}}, {n[6], n[7], n[8]}});
  } else {
    throw InvalidInput(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  auto check_material = [&](const Material& m, const std::string& ctx) {
    try {
      m.validate(ctx);
    } catch (const InvalidInput& e) {
      errors.emplace_back(e.what());
    }
  };
  check(steps >= 0, "steps must be non-negative");
  check(tau > 0.0, "tau must be positive");
  check(theta > 0.0 && theta < 1.0, "theta must lie in (0, 1)");
  check(max_depth >= 0, "max_depth must be non-negative");
  check(uniform_refine >= 0, "uniform_refine must be non-negative");
  check(adapt_stride >= 1, "adapt_stride must be at least 1");
  check(vtk_every >= 0, "vtk_every must be non-negative");
  check(geometry == "box" || geometry == "ellipsoid" || geometry == "obj",
        "geometry must be box, ellipsoid or obj");
  if (geometry == "box") check((box_max - box_min).minCoeff() > 0.0, "geometry.max must exceed geometry.min");
  if (geometry == "ellipsoid") check(semi_axes.minCoeff() > 0.0, "ellipsoid semi-axes must be positive");
  if (geometry == "obj") check(!surface_path.empty(), "geometry.path is required for obj geometry");
  check(std::all_of(resolution.begin(), resolution.end(), [](int r) { return r >= 1; }),
        "grid.resolution must be at least 1 per axis");
  check_material(tissue, "tissue");
  try {
    interaction.validate();
  } catch (const InvalidInput& e) {
    errors.emplace_back(e.what());
  }
  check(pgs.tolerance > 0.0 && pgs.max_iterations >= 1, "pgs settings must be positive");
  for (const auto& n : needles) {
    check_material(n.material, "needle." + n.name);
    check(n.length > 0.0, "needle." + n.name + ".length must be positive");
    check(n.radius > 0.0, "needle." + n.name + ".radius must be positive");
    check(n.segments >= 1, "needle." + n.name + ".segments must be at least 1");
    if (!n.nested_in.empty()) {
      const bool host = std::any_of(needles.begin(), needles.end(), [&](const NeedleConfig& o) {
        return o.name == n.nested_in && o.nested_in.empty();
      });
      check(host, "needle." + n.name + ".nested_in must name a top-level needle");
    }
  }
  if (!target_needle.empty())
    check(std::any_of(needles.begin(), needles.end(), [&](const auto& n) { return n.name == target_needle; }),
          "target.needle names no needle");
  check(trajectory.direction.norm() > 0.0, "trajectory.direction must be non-zero");
  check(trajectory.speed >= 0.0 && trajectory.retract_speed >= 0.0, "trajectory speeds must be non-negative");
  check(trajectory.travel >= 0.0 && trajectory.retract_travel >= 0.0, "trajectory travels must be non-negative");

  // Geometric checks need the surface.
  if (errors.empty()) {
    try {
      SurfaceGeometry s = geometry == "box"        ? SurfaceGeometry::box(box_min, box_max)
                          : geometry == "ellipsoid" ? SurfaceGeometry::ellipsoid(centre, semi_axes)
                                                    : SurfaceGeometry::load_obj(surface_path);
      const Aabb bb = s.bounds();
      if (!needles.empty()) check(!s.contains(trajectory.tip_start), "trajectory.tip_start must lie outside the tissue");
      for (const auto& p : probes) check(bb.contains(p.position), "probe." + p.name + " lies outside the tissue bounding box");
      if (target) check(bb.contains(*target), "target lies outside the tissue bounding box");
    } catch (const InvalidInput& e) {
      errors.emplace_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid scenario '" + name + "':";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw InvalidInput(msg);
  }
}

ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  ScenarioConfig c;
  c.tissue = {10e6, 0.4, 1000.0, 0.1, 0.1};
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> errors;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (seen.count(key)) {
      errors.push_back(where + ": duplicate key '" + key + "' (first on line " + std::to_string(seen[key]) + ")");
      continue;
    }
    seen[key] = line_no;
    try {
      apply(c, key, value, where, base_dir);
    } catch (const InvalidInput& e) {
      errors.emplace_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "scenario parse errors:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw InvalidInput(msg);
  }
  if (c.trajectory.retract_travel == 0.0) c.trajectory.retract_travel = c.trajectory.travel;
  if (c.target_needle.empty() && !c.needles.empty()) c.target_needle = c.needles.back().name;
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open scenario file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  ScenarioConfig c = parse_scenario(ss.str(), path.parent_path());
  if (c.name == "scenario") c.name = path.stem().string();
  return c;
}

}  // namespace needlesim

#pragma once

#include "needlesim/dynamics.hpp"
#include "needlesim/interaction.hpp"
#include "needlesim/material.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace needlesim {

struct BoxRegion {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
  }
};

struct NamedBox {
  std::string name;
  BoxRegion box;
  Vec3 displacement = Vec3::Zero();
};

struct NamedPoint {
  std::string name;
  Vec3 position;
};

struct NeedleConfig {
  std::string name;
  double length = 0.032;
  double radius = 1e-3;
  int segments = 16;
  Material material;
  /// Rides inside this needle (shielded, same base drive) until `release_step`.
  std::string nested_in;
  int release_step = -1;
};

/// Base-node drive: advance along `direction` at `speed` for `travel`, then
/// from `retract_step` withdraw at `retract_speed` for `retract_travel`.
struct TrajectoryConfig {
  Vec3 tip_start = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  double speed = 0.02;
  double travel = 0.0;
  int retract_step = -1;
  double retract_speed = 0.02;
  double retract_travel = 0.0;

  /// Base velocity during step `k` (0-based) for a step size `tau`.
  Vec3 velocity(int k, double tau) const;
};

struct ScenarioConfig {
  std::string name = "scenario";
  // Run control.
  int steps = 100;
  double tau = 0.01;
  bool adaptive = true;
  double theta = 0.3;
  int max_depth = 3;
  int uniform_refine = 0;
  int adapt_stride = 1;
  int vtk_every = 0;
  TJunctionMode tjunction_solver = TJunctionMode::kCondensed;
  Vec3 gravity = Vec3::Zero();

  // Geometry.
  std::string geometry = "box";
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3(0.04, 0.02, 0.02);
  Vec3 centre = Vec3::Zero();
  Vec3 semi_axes = Vec3::Ones();
  std::filesystem::path surface_path;
  std::array<int, 3> resolution{8, 4, 4};

  Material tissue;
  std::vector<NeedleConfig> needles;
  InteractionParameters interaction;
  TrajectoryConfig trajectory;
  PgsOptions pgs;

  std::vector<NamedPoint> probes;
  std::optional<Vec3> target;
  std::string target_needle;
  std::vector<NamedBox> fixed;
  std::vector<NamedBox> preload;

  /// Throws InvalidInput listing every violated rule.
  void validate() const;
};

/// Parses flat `key = value` text; `#` starts a comment. Unknown keys and
/// malformed values are rejected with line numbers. Relative surface paths
/// are resolved against `base_dir`.
ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);

}  // namespace needlesim

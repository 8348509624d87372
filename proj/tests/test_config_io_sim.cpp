#include "helpers.hpp"

#include "needlesim/config.hpp"
#include "needlesim/io.hpp"
#include "needlesim/log.hpp"
#include "needlesim/simulation.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace needlesim;
using namespace needlesim::testing;

namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = fs::path(NEEDLESIM_SOURCE_DIR) / "scenarios";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("needlesim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Value of the line following `keyword` in a legacy VTK file.
std::string vtk_line(const std::string& text, const std::string& keyword) {
  const auto at = text.find(keyword);
  if (at == std::string::npos) return {};
  return text.substr(at, text.find('\n', at) - at);
}

const char* kMinimal = R"(
steps = 10
geometry = box
geometry.min = 0 0 0
geometry.max = 0.04 0.02 0.02
grid.resolution = 8 4 4
tissue.young = 10e6
tissue.poisson = 0.4
needle.n.length = 0.032
needle.n.radius = 0.001
needle.n.segments = 16
needle.n.young = 50e6
needle.n.poisson = 0.3
interaction.puncture = 0.05
interaction.cutting = 0.03
trajectory.tip_start = -0.001 0.010625 0.010625
trajectory.direction = 1 0 0
trajectory.speed = 0.02
trajectory.travel = 0.021
fixed.right = 0.04 -1 -1 1 1 1
probe.a = 0.002 0.012625 0.010625
)";

ScenarioConfig phantom(int steps) {
  ScenarioConfig c = load_scenario(kScenarios / "phantom.cfg");
  c.steps = steps;
  return c;
}

}  // namespace

TEST(Config, ReferenceScenariosAreAccepted) {
  const ScenarioConfig p = load_scenario(kScenarios / "phantom.cfg");
  EXPECT_EQ(p.tissue.young, 10e6);
  EXPECT_EQ(p.needles.at(0).material.young, 50e6);
  EXPECT_EQ(p.tissue.poisson, 0.4);
  EXPECT_EQ(p.needles.at(0).radius, 0.001);
  EXPECT_EQ(p.needles.at(0).length, 0.032);
  EXPECT_EQ(p.theta, 0.3);
  const ScenarioConfig d = load_scenario(kScenarios / "dbs.cfg");
  EXPECT_EQ(d.tissue.young, 6e3);
  EXPECT_EQ(d.tissue.poisson, 0.45);
  ASSERT_EQ(d.needles.size(), 2u);
  EXPECT_EQ(d.needles[0].material.young, 10e9);
  EXPECT_EQ(d.needles[0].radius, 0.003);
  EXPECT_EQ(d.needles[1].radius, 0.0007);
  EXPECT_EQ(d.interaction.mu, 0.05);
  EXPECT_EQ(d.interaction.puncture, 0.01);
  EXPECT_EQ(d.interaction.cutting, 0.01);
  EXPECT_EQ(d.theta, 0.6);
  EXPECT_TRUE(d.target.has_value());
}

TEST(Config, RejectsInvalidInput) {
  EXPECT_NO_THROW(parse_scenario(kMinimal));
  EXPECT_THROW(parse_scenario(std::string(kMinimal) + "tissue.poisson = 0.5\n"), InvalidInput);
  EXPECT_THROW(parse_scenario(std::string(kMinimal) + "tissue.colour = red\n"), InvalidInput);
  EXPECT_THROW(parse_scenario(std::string(kMinimal) + "steps = 12\n"), InvalidInput);
  EXPECT_THROW(parse_scenario(std::string(kMinimal) + "theta = abc\n"), InvalidInput);
  EXPECT_THROW(parse_scenario(std::string(kMinimal) + "theta = 1.5\n"), InvalidInput);
  EXPECT_THROW(parse_scenario(std::string(kMinimal) + "probe.far = 1 1 1\n"), InvalidInput);
  EXPECT_THROW(parse_scenario(std::string(kMinimal) + "not a key value line\n"), InvalidInput);
  EXPECT_THROW(load_scenario("/nonexistent/scenario.cfg"), InvalidInput);
}

TEST(Config, DiagnosticsNameTheLine) {
  try {
    parse_scenario("steps = 3\nbogus = 1\n");
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(Trajectory, InsertThenRetract) {
  TrajectoryConfig t;
  t.direction = Vec3(0, 0, -2);
  t.speed = 0.05;
  t.travel = 0.005;
  t.retract_step = 20;
  t.retract_speed = 0.1;
  t.retract_travel = 0.002;
  EXPECT_LT((t.velocity(0, 0.01) - Vec3(0, 0, -0.05)).norm(), 1e-15);
  EXPECT_LT((t.velocity(9, 0.01) - Vec3(0, 0, -0.05)).norm(), 1e-15);
  EXPECT_EQ(t.velocity(10, 0.01), Vec3::Zero());
  EXPECT_LT((t.velocity(20, 0.01) - Vec3(0, 0, 0.1)).norm(), 1e-15);
  EXPECT_LT((t.velocity(21, 0.01) - Vec3(0, 0, 0.1)).norm(), 1e-15);
  EXPECT_EQ(t.velocity(22, 0.01), Vec3::Zero());
}

TEST(Export, SingleElementVtk) {
  const HexMesh mesh = unit_cube();
  const TissueModel model(mesh, {1e3, 0.3, 1000, 0, 0});
  const MechanicalState s = MechanicalState::at_rest(mesh);
  const fs::path p = scratch("vtk") / "one.vtk";
  export_vtk(mesh, model, s, RecoveredField{}, p);
  const std::string text = slurp(p);
  EXPECT_EQ(text.rfind("# vtk DataFile Version", 0), 0u);
  EXPECT_EQ(vtk_line(text, "POINTS"), "POINTS 8 double");
  EXPECT_EQ(vtk_line(text, "CELLS"), "CELLS 1 9");
  EXPECT_EQ(vtk_line(text, "CELL_TYPES"), "CELL_TYPES 1");
  const auto types = text.find("CELL_TYPES 1\n");
  EXPECT_EQ(text.substr(types + 13, 2), "12");
  EXPECT_NE(text.find("SCALARS eta double"), std::string::npos);
  EXPECT_NE(text.find("SCALARS von_mises double"), std::string::npos);
  EXPECT_NE(text.find("VECTORS displacement double"), std::string::npos);
}

TEST(Export, RefinedMeshNodeCount) {
  HexMesh mesh = phantom_mesh();
  refine_element(mesh, 17);
  refresh_junctions(mesh);
  const TissueModel model(mesh, {1e3, 0.3, 1000, 0, 0});
  const fs::path p = scratch("vtk_refined") / "mesh.vtk";
  export_vtk(mesh, model, MechanicalState::at_rest(mesh), RecoveredField{}, p);
  const std::string text = slurp(p);
  EXPECT_EQ(vtk_line(text, "POINTS"), "POINTS 244 double");
  EXPECT_EQ(vtk_line(text, "CELLS"), "CELLS 135 1215");
}

TEST(Export, EmptyTraceIsHeaderOnly) {
  const fs::path p = scratch("traces") / "traces.csv";
  export_traces({}, {"1", "1A"}, true, p);
  EXPECT_EQ(slurp(p), "step,time,dofs,eta_max,1,1A,tip_target_distance\n");
  EXPECT_EQ(trace_header({}, false), "step,time,dofs,eta_max");
}

TEST(Export, UnwritablePathNamesThePath) {
  const HexMesh mesh = unit_cube();
  const TissueModel model(mesh, {1e3, 0.3, 1000, 0, 0});
  try {
    export_vtk(mesh, model, MechanicalState::at_rest(mesh), RecoveredField{}, "/nonexistent/dir/a.vtk");
    FAIL() << "expected Error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/a.vtk"), std::string::npos);
  }
}

TEST(Simulation, UniformResolutionDofCounts) {
  ScenarioConfig c = phantom(1);
  c.adaptive = false;
  for (auto [levels, dofs] : {std::pair{0, 675}, std::pair{1, 4131}, std::pair{2, 28611}}) {
    c.uniform_refine = levels;
    Simulation sim(c);
    EXPECT_EQ(sim.dofs(), static_cast<std::size_t>(dofs));
  }
}

TEST(Simulation, ZeroSpeedLeavesProbesAtRest) {
  ScenarioConfig c = phantom(30);
  c.trajectory.speed = 0.0;
  Simulation sim(c);
  sim.run(c.steps);
  for (const auto& r : sim.records())
    for (double p : r.probes) EXPECT_EQ(p, 0.0);
  EXPECT_EQ(sim.dofs(), 675u);
}

TEST(Simulation, RunsAreDeterministic) {
  ScenarioConfig c = phantom(25);
  c.vtk_every = 10;
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  needlesim::log::set_level(needlesim::log::Level::kSilent);
  ASSERT_EQ(run_simulation(c, a), 0);
  ASSERT_EQ(run_simulation(c, b), 0);
  needlesim::log::set_level(needlesim::log::Level::kWarning);
  const std::string ta = slurp(a / "traces.csv");
  EXPECT_EQ(ta, slurp(b / "traces.csv"));
  EXPECT_EQ(std::count(ta.begin(), ta.end(), '\n'), 26);
  EXPECT_TRUE(fs::exists(a / "mesh_0.vtk"));
  EXPECT_TRUE(fs::exists(a / "mesh_10.vtk"));
  EXPECT_TRUE(fs::exists(a / "mesh_20.vtk"));
  EXPECT_TRUE(fs::exists(a / "mesh_25.vtk"));
  EXPECT_FALSE(fs::exists(a / "mesh_5.vtk"));
  EXPECT_TRUE(fs::exists(a / "constraints.csv"));
}

TEST(Simulation, InvalidConfigExitsNonZero) {
  ScenarioConfig c = phantom(5);
  c.tissue.poisson = 0.5;
  needlesim::log::set_level(needlesim::log::Level::kSilent);
  EXPECT_NE(run_simulation(c, scratch("invalid")), 0);
  needlesim::log::set_level(needlesim::log::Level::kWarning);
}

namespace {

// Invariants checked after every step of a coupled run.
void check_step_invariants(const Simulation& sim, bool rows_current) {
  const auto& cfg = sim.config();
  const double tau = cfg.tau;
  const MechanicalState& s = sim.state();
  for (const auto& j : flatten_t_junctions(sim.mesh().t_junctions)) {
    Vec3 interp = Vec3::Zero();
    for (const auto& [m, w] : j.masters) interp += w * s.velocity(m);
    EXPECT_LT((s.velocity(j.slave) - interp).norm(), 1e-8) << "slave " << j.slave;
  }
  const auto& needle = sim.needles().at(0);
  const Vec3 drive = cfg.trajectory.velocity(sim.current_step() - 1, tau);
  EXPECT_LT((needle.beam.v.segment<3>(0) - drive).norm(), 1e-12);

  const ConstraintSet& set = sim.last_constraints();
  const VecX& lambda = sim.last_pgs().lambda;
  if (set.rows == 0) return;
  ASSERT_EQ(lambda.size(), set.rows);
  VecX u = VecX::Zero(set.rows);
  if (rows_current) {
    u += set.tissue_jacobian(s.x.size()) * s.v;
    for (std::size_t b = 0; b < sim.needles().size(); ++b)
      u += set.beam_jacobian(b, sim.needles()[b].beam.num_dofs()) * sim.needles()[b].beam.v;
  }
  const VecX target = set.target_vector();
  for (std::size_t k = 0; k < set.blocks.size(); ++k) {
    const auto& blk = set.blocks[k];
    const double bound = blk.bound(lambda);
    using Type = ConstraintBlock::Type;
    if (blk.type == Type::kFriction || blk.type == Type::kFrictionDisc) {
      const double mag = blk.size == 2 ? lambda.segment<2>(blk.first).norm() : std::abs(lambda[blk.first]);
      EXPECT_LE(mag / tau, bound / tau + 1e-10);
    }
    if (blk.type == Type::kUnilateral) {
      const int i = blk.first;
      EXPECT_GE(lambda[i], 0.0);
      EXPECT_LE(lambda[i] / tau, bound / tau + 1e-10);
      const bool capped = std::isfinite(bound) && lambda[i] >= bound - 1e-12;
      if (rows_current && !capped) {
        const double gap = tau * (u[i] - target[i]);
        EXPECT_GE(gap, -1e-8) << "row " << i;
        EXPECT_LE(std::abs(gap * lambda[i] / tau), 1e-10) << "row " << i;
      }
    }
  }
}

}  // namespace

TEST(Simulation, StepInvariantsUniform) {
  ScenarioConfig c = phantom(60);
  c.adaptive = false;
  Simulation sim(c);
  int contact_steps = 0;
  for (int k = 0; k < c.steps; ++k) {
    sim.step();
    check_step_invariants(sim, true);
    contact_steps += sim.last_constraints().rows > 0;
  }
  EXPECT_GT(contact_steps, 40);
  EXPECT_EQ(sim.needles()[0].tip.phase, TipPhase::kInserted);
}

TEST(Simulation, StepInvariantsAdaptive) {
  ScenarioConfig c = phantom(40);
  Simulation sim(c);
  for (int k = 0; k < c.steps; ++k) {
    sim.step();
    check_step_invariants(sim, sim.last_adapt().refined == 0);
  }
  EXPECT_GT(sim.dofs(), 675u);
  EXPECT_FALSE(sim.mesh().t_junctions.empty());
}

TEST(Simulation, TraceRecordsAreMonotone) {
  ScenarioConfig c = phantom(20);
  Simulation sim(c);
  sim.run(c.steps);
  ASSERT_EQ(sim.records().size(), 20u);
  for (std::size_t i = 0; i < sim.records().size(); ++i) {
    const auto& r = sim.records()[i];
    EXPECT_EQ(r.step, static_cast<int>(i) + 1);
    EXPECT_NEAR(r.time, c.tau * static_cast<double>(i + 1), 1e-12);
    EXPECT_EQ(r.dofs, 3 * (r.dofs / 3));
    EXPECT_EQ(r.probes.size(), c.probes.size());
  }
  EXPECT_GE(sim.peak_dofs(), sim.dofs());
}

TEST(Simulation, StepInvariantsThroughReleaseAndRetraction) {
  ScenarioConfig c = load_scenario(kScenarios / "dbs.cfg");
  c.steps = 200;
  Simulation sim(c);
  for (int k = 0; k < c.steps; ++k) {
    sim.step();
    check_step_invariants(sim, sim.last_adapt().refined == 0);
  }
  const auto& electrode = sim.needles().at(1);
  EXPECT_TRUE(electrode.released);
  EXPECT_EQ(electrode.tip.phase, TipPhase::kInserted);
  // The cannula is withdrawing while the released electrode stays put.
  EXPECT_GT(sim.needles()[0].beam.v.segment<3>(0).z(), 0.0);
  EXPECT_LT(electrode.beam.v.segment<3>(0).norm(), 0.01);
}

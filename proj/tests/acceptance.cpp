// Runs every acceptance criterion and prints one PASS/FAIL line each.

#include "helpers.hpp"
#include "oracles.hpp"

#include "needlesim/adaptivity.hpp"
#include "needlesim/config.hpp"
#include "needlesim/dynamics.hpp"
#include "needlesim/log.hpp"
#include "needlesim/simulation.hpp"
#include "needlesim/spr.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>

using namespace needlesim;
using namespace needlesim::testing;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const fs::path kScenarios = fs::path(NEEDLESIM_SOURCE_DIR) / "scenarios";

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int hard_failures = 0;

void report(int id, const char* title, const Outcome& o, bool soft = false) {
  std::printf("criterion %2d %s%s: %s: %s\n", id, o.pass ? "PASS" : "FAIL",
              soft && !o.pass ? " (soft)" : "", title, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass && !soft) ++hard_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ScenarioConfig phantom() { return load_scenario(kScenarios / "phantom.cfg"); }

// --- 1 ---------------------------------------------------------------------

Outcome dof_counts() {
  const auto t0 = Clock::now();
  ScenarioConfig c = phantom();
  c.adaptive = false;
  std::vector<std::size_t> got;
  for (int levels : {0, 1, 2}) {
    c.uniform_refine = levels;
    got.push_back(Simulation(c).dofs());
  }
  const double t = seconds_since(t0);
  const bool ok = got == std::vector<std::size_t>{675, 4131, 28611} && t < 60.0;
  return {ok, fmt("%zu / %zu / %zu DOFs (expected 675 / 4131 / 28611) in %.1f s", got[0], got[1], got[2], t)};
}

// --- 2 ---------------------------------------------------------------------

HexMesh graded_phantom(std::mt19937& rng, double fraction) {
  HexMesh mesh = phantom_mesh();
  auto active = mesh.active_elements();
  std::shuffle(active.begin(), active.end(), rng);
  active.resize(static_cast<std::size_t>(fraction * static_cast<double>(active.size())));
  for (ElementId e : active) refine_element(mesh, e);
  refresh_junctions(mesh);
  return mesh;
}

bool on_box_boundary(const Vec3& p) {
  return p.x() < 1e-12 || p.x() > 0.04 - 1e-12 || p.y() < 1e-12 || p.y() > 0.02 - 1e-12 ||
         p.z() < 1e-12 || p.z() > 0.02 - 1e-12;
}

Outcome patch_tests() {
  const Material mat{10e6, 0.4, 1000, 0.1, 0.01};
  HexMesh mesh = phantom_mesh(1);
  TissueModel model(mesh, mat);
  const Mat3 r = rotation(1.3, Vec3(1, -2, 0.5));
  VecX x(3 * static_cast<Eigen::Index>(mesh.nodes.size()));
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n)
    x.segment<3>(3 * n) = r * mesh.nodes[n].rest + Vec3(0.01, -0.02, 0.005);
  model.update_rotations(x);
  const double volume = 0.04 * 0.02 * 0.02;
  const double force = model.internal_force(x).norm();
  const double force_bound = 1e-8 * mat.young * std::pow(volume, 2.0 / 3.0);

  std::mt19937 rng(11);
  HexMesh graded = graded_phantom(rng, 0.2);
  TissueModel gmodel(graded, mat);
  MechanicalState s = MechanicalState::at_rest(graded);
  const Mat3 a = (Mat3() << 2e-3, 1e-3, 0, -5e-4, 1e-3, 2e-4, 3e-4, 0, -1e-3).finished();
  const Vec3 c(1e-4, -2e-4, 5e-5);
  for (std::size_t n = 0; n < graded.nodes.size(); ++n)
    if (on_box_boundary(graded.nodes[n].rest)) s.fix_node(static_cast<NodeId>(n), a * graded.nodes[n].rest + c);
  solve_static(gmodel, s, graded, VecX::Zero(s.x.size()), 1e-13);
  double err = 0.0, scale = 0.0;
  for (std::size_t n = 0; n < graded.nodes.size(); ++n) {
    const Vec3 u = a * graded.nodes[n].rest + c;
    err = std::max(err, (s.displacement(static_cast<NodeId>(n)) - u).norm());
    scale = std::max(scale, u.norm());
  }
  const bool ok = force <= force_bound && err <= 1e-9 * scale;
  return {ok, fmt("rigid |f_int| = %.2e N (bound %.2e); affine static error %.2e relative (bound 1e-9)",
                  force, force_bound, err / scale)};
}

// --- 3 ---------------------------------------------------------------------

Outcome spr_exactness() {
  std::mt19937 rng(5);
  double worst = 0.0;
  std::size_t elements = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const HexMesh mesh = graded_phantom(rng, 0.15);
    TissueModel model(mesh, {10e6, 0.4, 1000, 0, 0});
    std::uniform_real_distribution<double> u(-2e-3, 2e-3);
    Mat3 a;
    for (auto& v : a.reshaped()) v = u(rng);
    const Mat3 r = random_rotation(rng);
    VecX x(3 * static_cast<Eigen::Index>(mesh.nodes.size()));
    for (std::size_t n = 0; n < mesh.nodes.size(); ++n)
      x.segment<3>(3 * n) = r * (mesh.nodes[n].rest + a * mesh.nodes[n].rest);
    model.update_rotations(x);
    const RecoveredField f = recover_spr(mesh, model, x);
    for (ElementId e : mesh.active_elements()) worst = std::max(worst, f.eta[e]);
    elements += mesh.num_active();
  }
  return {worst <= 1e-10, fmt("max eta_e = %.2e over %zu elements of 3 graded meshes (bound 1e-10)", worst, elements)};
}

// --- 4 ---------------------------------------------------------------------

Outcome tjunction_continuity() {
  std::mt19937 rng(19);
  const HexMesh mesh = graded_phantom(rng, 0.2);
  TissueModel model(mesh, {10e6, 0.4, 1000, 0, 0});
  MechanicalState s = MechanicalState::at_rest(mesh);
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n)
    if (mesh.nodes[n].rest.x() > 0.04 - 1e-12) s.fix_node(static_cast<NodeId>(n));
  VecX f = model.dof_mass();
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] *= i % 3 == 2 ? -500.0 : (i % 3 == 1 ? 100.0 : 0.0);
  const auto rep = solve_static(model, s, mesh, f);
  double worst = 0.0, sag = 0.0;
  const auto flat = flatten_t_junctions(mesh.t_junctions);
  for (const auto& j : flat) {
    Vec3 interp = Vec3::Zero();
    for (const auto& [m, w] : j.masters) interp += w * s.displacement(m);
    worst = std::max(worst, (s.displacement(j.slave) - interp).norm());
  }
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) sag = std::max(sag, s.displacement(static_cast<NodeId>(n)).norm());
  const bool ok = rep.converged && !flat.empty() && worst <= 1e-8 && sag > 1e-6;
  return {ok, fmt("%zu slaves, max mismatch %.2e m (bound 1e-8) under max displacement %.2e m", flat.size(), worst, sag)};
}

// --- 5 ---------------------------------------------------------------------

Outcome pgs_correctness() {
  using Type = ConstraintBlock::Type;
  std::mt19937 rng(2025);
  std::uniform_real_distribution<double> u(-1, 1), pos(0.05, 1.0);
  PgsOptions opt;
  opt.tolerance = 1e-13;
  opt.max_iterations = 20000;
  double worst = 0.0;
  int systems = 0, unmatched = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 6;
    MatX g(n, n);
    for (auto& x : g.reshaped()) x = u(rng);
    const MatX w = 0.3 * g * g.transpose() / n + MatX::Identity(n, n);
    VecX b(n), target(n);
    for (int i = 0; i < n; ++i) {
      b[i] = u(rng);
      target[i] = 0.2 * u(rng);
    }
    std::vector<ConstraintBlock> blocks;
    std::vector<int> normal;
    for (int i = 0; i < n; ++i) {
      const int kind = std::uniform_int_distribution<int>(0, 3)(rng);
      if (kind == 0) blocks.push_back(ConstraintBlock::bilateral(i));
      if (kind == 1) blocks.push_back(ConstraintBlock::unilateral(i));
      if (kind == 2) blocks.push_back(ConstraintBlock::unilateral(i, pos(rng)));
      if (kind == 1 || kind == 2) normal.push_back(i);
      if (kind == 3) blocks.push_back(ConstraintBlock::friction(i, 0.0, {}, pos(rng)));
    }
    for (auto& blk : blocks)
      if (blk.type == Type::kFriction && !normal.empty()) {
        blk.mu = 0.3 * pos(rng);
        blk.ref = {normal[static_cast<std::size_t>(blk.first) % normal.size()]};
      }
    const auto oracle = enumerate_regimes(w, b, target, blocks);
    const auto r = pgs_solve(w, b, target, blocks, opt);
    double best = kUnbounded;
    for (const VecX& l : oracle) best = std::min(best, (l - r.lambda).cwiseAbs().maxCoeff());
    if (oracle.empty() || !r.converged) ++unmatched;
    else worst = std::max(worst, best);
    ++systems;
  }

  // Complementarity and cone on contact-like systems (normal row + disc).
  double comp = 0.0, cone = 0.0, pen = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 6;
    MatX g(n, n);
    for (auto& x : g.reshaped()) x = u(rng);
    const MatX w = 0.2 * g * g.transpose() / n + MatX::Identity(n, n);
    VecX b(n);
    for (auto& x : b) x = u(rng);
    const double mu = 0.5 * pos(rng);
    const std::vector<ConstraintBlock> blocks{
        ConstraintBlock::unilateral(0), ConstraintBlock::friction_disc(1, mu, {0}),
        ConstraintBlock::unilateral(3), ConstraintBlock::friction_disc(4, mu, {3})};
    const auto r = pgs_solve(w, b, VecX::Zero(n), blocks, opt);
    const VecX vel = b + w * r.lambda;
    for (int c : {0, 3}) {
      pen = std::max(pen, -vel[c]);
      pen = std::max(pen, -r.lambda[c]);
      comp = std::max(comp, std::abs(vel[c] * r.lambda[c]));
      cone = std::max(cone, r.lambda.segment<2>(c + 1).norm() - mu * r.lambda[c]);
    }
  }
  const bool ok = unmatched == 0 && worst <= 1e-8 && pen <= 1e-8 && comp <= 1e-10 && cone <= 1e-10;
  return {ok, fmt("%d systems, max |lambda - oracle| = %.1e (bound 1e-8), %d unmatched; "
                  "max penetration %.1e, |gap*lambda| %.1e, cone excess %.1e",
                  systems, worst, unmatched, pen, comp, cone)};
}

// --- 6 ---------------------------------------------------------------------

Outcome energy_dissipation() {
  std::mt19937 rng(6);
  HexMesh mesh = graded_phantom(rng, 0.1);
  TissueModel model(mesh, {10e6, 0.4, 1000, 0, 0});
  MechanicalState s = MechanicalState::at_rest(mesh);
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n)
    if (mesh.nodes[n].rest.x() > 0.04 - 1e-12) s.fix_node(static_cast<NodeId>(n));
  std::vector<int> free_dof;
  const SparseMatrix p = build_prolongation(mesh.t_junctions, mesh.nodes.size(), &free_dof);
  VecX uc = VecX::Zero(p.cols());
  std::normal_distribution<double> noise(0.0, 1e-4);
  for (std::size_t i = 0; i < free_dof.size(); ++i)
    if (free_dof[i] >= 0 && !s.fixed[i]) uc[free_dof[i]] = noise(rng);
  s.x = s.x0 + p * uc;
  TissueIntegrator integ;
  integ.set_topology(mesh, TJunctionMode::kCondensed);
  const double tau = 0.01;
  double e = total_energy(model, s);
  const double e0 = e;
  double worst = -kUnbounded;
  for (int k = 0; k < 500; ++k) {
    commit_step(s, integ.prepare(model, s, VecX::Zero(s.x.size()), tau), tau);
    const double e1 = total_energy(model, s);
    worst = std::max(worst, e1 - e);
    e = e1;
  }
  return {worst <= 1e-10, fmt("500 undamped steps, max per-step energy change %.2e J (bound +1e-10), E %.3e -> %.3e J",
                              worst, e0, e)};
}

// --- 7, 8, 10: phantom runs ----------------------------------------------------

struct PhantomRun {
  std::vector<TraceRecord> records;
  std::vector<double> at_depth;  // probe displacements when the tip reached the matched depth
  double depth_tip = 0.0;
  bool inserted_at_depth = false;
  std::size_t peak_dofs = 0;
  double seconds = 0.0;
};

constexpr double kMatchedDepth = 0.005;  // tip 5 mm past the entry face

PhantomRun run_phantom(const ScenarioConfig& c) {
  PhantomRun out;
  const auto t0 = Clock::now();
  Simulation sim(c);
  bool captured = false;
  for (int k = 0; k < c.steps; ++k) {
    const TraceRecord& r = sim.step();
    const Vec3 tip = sim.needles()[0].beam.x.back();
    if (!captured && tip.x() >= kMatchedDepth) {
      out.at_depth = r.probes;
      out.depth_tip = tip.x();
      out.inserted_at_depth = sim.needles()[0].tip.phase == TipPhase::kInserted;
      captured = true;
    }
  }
  out.records = sim.records();
  out.peak_dofs = sim.peak_dofs();
  out.seconds = seconds_since(t0);
  return out;
}

std::size_t probe_index(const ScenarioConfig& c, const std::string& name) {
  for (std::size_t i = 0; i < c.probes.size(); ++i)
    if (c.probes[i].name == name) return i;
  throw InvalidInput("no probe named " + name);
}

Outcome mesh_ordering(const ScenarioConfig& c, const std::array<PhantomRun, 3>& uniform) {
  const std::size_t p1 = probe_index(c, "1");
  bool ok = true;
  std::string d = "probe 1 at tip depth 5 mm:";
  for (const auto& run : uniform) {
    ok &= run.inserted_at_depth && !run.at_depth.empty();
    d += fmt(" %.4e", run.at_depth.empty() ? -1.0 : run.at_depth[p1]);
  }
  if (!ok) return {false, d + " (matched depth not reached after puncture)"};
  const bool mesh_order = uniform[1].at_depth[p1] <= uniform[0].at_depth[p1] &&
                          uniform[2].at_depth[p1] <= uniform[1].at_depth[p1];
  d += mesh_order ? " (non-increasing)" : " (increases with refinement)";
  const auto& fine = uniform[2].at_depth;
  const double v1 = fine[p1], va = fine[probe_index(c, "1A")], vc = fine[probe_index(c, "1C")],
               ve = fine[probe_index(c, "1E")];
  const bool radial = v1 >= va && va >= vc && vc >= ve;
  d += fmt("; fine radial 1/1A/1C/1E %.3e %.3e %.3e %.3e (%s)", v1, va, vc, ve, radial ? "ordered" : "not ordered");
  return {mesh_order && radial, d};
}

Outcome adaptive_agreement(const ScenarioConfig& c, const PhantomRun& adaptive, const PhantomRun& fine) {
  const std::size_t p1 = probe_index(c, "1");
  const double a = adaptive.records.back().probes[p1];
  const double f = fine.records.back().probes[p1];
  const double rel = std::abs(a - f) / f;
  const std::size_t fine_dofs = fine.records.back().dofs;
  const double ratio = static_cast<double>(adaptive.peak_dofs) / static_cast<double>(fine_dofs);
  const bool ok = rel <= 0.10 && ratio <= 0.40 && adaptive.seconds < 600.0;
  return {ok, fmt("probe 1 at end %.4e vs fine %.4e (%.1f%%, bound 10%%); peak DOFs %zu = %.1f%% of %zu "
                  "(bound 40%%; reference count 1461 not reached); %.1f s",
                  a, f, 100.0 * rel, adaptive.peak_dofs, 100.0 * ratio, fine_dofs, adaptive.seconds)};
}

Outcome realtime(const PhantomRun& adaptive) {
  double sum = 0.0, worst = 0.0;
  for (const auto& r : adaptive.records) {
    sum += r.wall_seconds;
    worst = std::max(worst, r.wall_seconds);
  }
  const double mean = sum / static_cast<double>(adaptive.records.size());
  return {mean <= 0.05, fmt("adaptive phantom mean %.1f ms per step, max %.1f ms, peak %zu DOFs (bound 50 ms)",
                            1e3 * mean, 1e3 * worst, adaptive.peak_dofs)};
}

// --- 9 ---------------------------------------------------------------------

struct DbsRun {
  std::vector<TraceRecord> records;
  int first_inserted = -1;
  std::size_t peak_dofs = 0;
};

DbsRun run_dbs(ScenarioConfig c) {
  DbsRun out;
  Simulation sim(c);
  for (int k = 0; k < c.steps; ++k) {
    const TraceRecord& r = sim.step();
    if (out.first_inserted < 0 && sim.needles()[0].tip.phase == TipPhase::kInserted) out.first_inserted = r.step;
  }
  out.records = sim.records();
  out.peak_dofs = sim.peak_dofs();
  return out;
}

Outcome dbs_reduction() {
  const auto t0 = Clock::now();
  ScenarioConfig c = load_scenario(kScenarios / "dbs.cfg");
  const DbsRun adaptive = run_dbs(c);
  c.adaptive = false;
  c.uniform_refine = 1;
  const DbsRun fine = run_dbs(c);
  if (adaptive.first_inserted < 0 || fine.first_inserted < 0)
    return {false, "cannula never punctured the surface"};
  const int from = std::max(adaptive.first_inserted, fine.first_inserted);
  double worst = 0.0, min_d = kUnbounded;
  for (std::size_t i = 0; i < adaptive.records.size(); ++i) {
    const auto& a = adaptive.records[i];
    const auto& f = fine.records[i];
    if (!a.tip_target_distance || !f.tip_target_distance) return {false, "missing tip-target distance"};
    min_d = std::min(min_d, *a.tip_target_distance);
    if (a.step >= from) worst = std::max(worst, std::abs(*a.tip_target_distance - *f.tip_target_distance) / *f.tip_target_distance);
  }
  const std::size_t fine_dofs = fine.peak_dofs;
  const double ratio = static_cast<double>(adaptive.peak_dofs) / static_cast<double>(fine_dofs);
  const double final_d = *adaptive.records.back().tip_target_distance;
  const bool ok = worst <= 0.15 && ratio <= 0.35;
  return {ok, fmt("tip-target error <= %.1f%% from step %d (bound 15%%); peak DOFs %zu vs %zu fine = %.1f%% "
                  "(bound 35%%, reduction x%.1f); distance min %.2f mm, final %.2f mm (%s); %.0f s",
                  100.0 * worst, from, adaptive.peak_dofs, fine_dofs, 100.0 * ratio, 1.0 / ratio, 1e3 * min_d,
                  1e3 * final_d, final_d > min_d ? "recoil" : "no recoil", seconds_since(t0))};
}

}  // namespace

int main() {
  log::set_level(log::Level::kError);
  std::printf("needlesim acceptance (solver backend: %s)\n", SpdSolver::backend());

  report(1, "uniform DOF counts", dof_counts());
  report(2, "corotational patch tests", patch_tests());
  report(3, "SPR exactness on affine fields", spr_exactness());
  report(4, "T-junction continuity", tjunction_continuity());
  report(5, "constraint solver vs enumeration", pgs_correctness());
  report(6, "backward Euler dissipation", energy_dissipation());

  const ScenarioConfig c = phantom();
  std::array<PhantomRun, 3> uniform;
  for (int levels = 0; levels < 3; ++levels) {
    ScenarioConfig u = c;
    u.adaptive = false;
    u.uniform_refine = levels;
    uniform[static_cast<std::size_t>(levels)] = run_phantom(u);
  }
  const PhantomRun adaptive = run_phantom(c);
  report(7, "mesh-convergence ordering", mesh_ordering(c, uniform));
  report(8, "adaptive vs uniform phantom", adaptive_agreement(c, adaptive, uniform[2]));
  report(9, "DBS problem-size reduction", dbs_reduction());
  report(10, "real-time feasibility", realtime(adaptive), true);

  std::printf("%d hard criteria failed\n", hard_failures);
  return hard_failures == 0 ? 0 : 1;
}

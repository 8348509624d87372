#include "needlesim/coupled_solver.hpp"
#include "needlesim/dynamics.hpp"
#include "needlesim/hex_mesh.hpp"
#include "needlesim/spr.hpp"
#include "needlesim/surface.hpp"
#include "needlesim/tissue.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace needlesim;

namespace {

const Material kTissue{10e6, 0.4, 1000, 0.1, 0.01};

HexMesh phantom(int levels) {
  HexMesh m = voxelize_domain(SurfaceGeometry::box(Vec3::Zero(), Vec3(0.04, 0.02, 0.02)), {8, 4, 4}, 3);
  if (levels > 0) refine_uniform(m, levels);
  return m;
}

// Small random deformation so rotations and stresses are non-trivial.
VecX perturbed(const HexMesh& mesh, double amplitude) {
  std::mt19937 rng(1);
  std::normal_distribution<double> n(0.0, amplitude);
  VecX x(3 * static_cast<Eigen::Index>(mesh.nodes.size()));
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    x.segment<3>(3 * i) = mesh.nodes[i].rest + Vec3(n(rng), n(rng), n(rng));
  return x;
}

}  // namespace

static void BM_StiffnessAssembly(benchmark::State& state) {
  const HexMesh mesh = phantom(static_cast<int>(state.range(0)));
  TissueModel model(mesh, kTissue);
  const VecX x = perturbed(mesh, 1e-5);
  for (auto _ : state) {
    model.update_rotations(x);
    benchmark::DoNotOptimize(model.assemble_stiffness().nonZeros());
  }
  state.counters["dofs"] = static_cast<double>(model.num_dofs());
}
BENCHMARK(BM_StiffnessAssembly)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_InternalForce(benchmark::State& state) {
  const HexMesh mesh = phantom(static_cast<int>(state.range(0)));
  TissueModel model(mesh, kTissue);
  const VecX x = perturbed(mesh, 1e-5);
  model.update_rotations(x);
  for (auto _ : state) benchmark::DoNotOptimize(model.internal_force(x).norm());
  state.counters["dofs"] = static_cast<double>(model.num_dofs());
}
BENCHMARK(BM_InternalForce)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Factorisation(benchmark::State& state) {
  const HexMesh mesh = phantom(static_cast<int>(state.range(0)));
  TissueModel model(mesh, kTissue);
  MechanicalState s = MechanicalState::at_rest(mesh);
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n)
    if (mesh.nodes[n].rest.x() > 0.04 - 1e-12) s.fix_node(static_cast<NodeId>(n));
  TissueIntegrator integ;
  integ.set_topology(mesh, TJunctionMode::kCondensed);
  const VecX f = VecX::Zero(s.x.size());
  for (auto _ : state) benchmark::DoNotOptimize(integ.prepare(model, s, f, 0.01).size());
  state.counters["dofs"] = static_cast<double>(model.num_dofs());
  state.SetLabel(SpdSolver::backend());
}
BENCHMARK(BM_Factorisation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_PgsContacts(benchmark::State& state) {
  const int contacts = static_cast<int>(state.range(0));
  const int n = 3 * contacts;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  MatX g(n, n);
  for (auto& x : g.reshaped()) x = u(rng);
  const MatX w = 0.2 * g * g.transpose() / n + MatX::Identity(n, n);
  VecX b(n);
  for (auto& x : b) x = u(rng);
  std::vector<ConstraintBlock> blocks;
  for (int c = 0; c < contacts; ++c) {
    blocks.push_back(ConstraintBlock::unilateral(3 * c));
    blocks.push_back(ConstraintBlock::friction_disc(3 * c + 1, 0.3, {3 * c}));
  }
  for (auto _ : state) benchmark::DoNotOptimize(pgs_solve(w, b, VecX::Zero(n), blocks).lambda.sum());
}
BENCHMARK(BM_PgsContacts)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

static void BM_SprRecovery(benchmark::State& state) {
  const HexMesh mesh = phantom(static_cast<int>(state.range(0)));
  TissueModel model(mesh, kTissue);
  const VecX x = perturbed(mesh, 1e-5);
  model.update_rotations(x);
  for (auto _ : state) benchmark::DoNotOptimize(recover_spr(mesh, model, x).eta_max);
  state.counters["elements"] = static_cast<double>(mesh.num_active());
}
BENCHMARK(BM_SprRecovery)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_RefineElement(benchmark::State& state) {
  for (auto _ : state) {
    state.PauseTiming();
    HexMesh mesh = phantom(0);
    state.ResumeTiming();
    for (ElementId e = 0; e < 32; ++e) refine_element(mesh, e);
    mesh.t_junctions = detect_t_junctions(mesh);
    benchmark::DoNotOptimize(mesh.t_junctions.size());
  }
}
BENCHMARK(BM_RefineElement)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

#pragma once

#include "needlesim/adaptivity.hpp"
#include "needlesim/beam.hpp"
#include "needlesim/config.hpp"
#include "needlesim/dynamics.hpp"
#include "needlesim/interaction.hpp"
#include "needlesim/spr.hpp"

#include <Eigen/Cholesky>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace needlesim {

struct ConstraintDiagnostics {
  int rows = 0;
  int surface = 0;
  int tip = 0;
  int shaft = 0;
  int tjunction = 0;
  int sticking = 0;
  int sliding = 0;
  int cutting = 0;
  double max_penetration = 0.0;
  int pgs_iterations = 0;
  bool pgs_converged = true;
};

struct TraceRecord {
  int step = 0;
  double time = 0.0;
  std::size_t dofs = 0;         // 3 x tissue nodes (hanging nodes included)
  std::size_t slave_nodes = 0;  // hanging nodes, constrained by T rows
  std::size_t needle_dofs = 0;
  double eta_max = 0.0;
  std::vector<double> probes;   // displacement magnitude [m]
  std::optional<double> tip_target_distance;
  ConstraintDiagnostics constraints;
  std::vector<TipPhase> tip_phases;
  double wall_seconds = 0.0;
};

struct NeedleRuntime {
  NeedleConfig config;
  BeamModel beam;
  int host = -1;  // index of the needle this one rides in, or -1
  bool released = false;
  TipState tip;
  std::vector<MaterialPoint> shaft_points;
  std::size_t shaft_path_size = 0;

  bool nested() const { return host >= 0; }
  /// Shielded needles travel inside their host and take no tissue rows.
  bool shielded() const { return nested() && !released; }
};

class Simulation {
 public:
  explicit Simulation(ScenarioConfig config);

  /// Advances one step and returns its trace record.
  const TraceRecord& step();
  void run(int steps, const std::function<void(const TraceRecord&)>& on_step = {});

  const ScenarioConfig& config() const { return config_; }
  const HexMesh& mesh() const { return mesh_; }
  const MechanicalState& state() const { return state_; }
  TissueModel& model() { return model_; }
  const TissueModel& model() const { return model_; }
  const TissueIntegrator& integrator() const { return integrator_; }
  const std::vector<NeedleRuntime>& needles() const { return needles_; }
  const std::vector<TraceRecord>& records() const { return records_; }
  const ConstraintSet& last_constraints() const { return constraints_; }
  const PgsResult& last_pgs() const { return pgs_; }
  /// Most recent error field (recomputed if the mesh changed since).
  const RecoveredField& field();
  const std::vector<MaterialPoint>& probes() const { return probes_; }
  std::optional<MaterialPoint> target() const { return target_; }
  int current_step() const { return step_; }
  std::size_t dofs() const { return 3 * mesh_.nodes.size(); }
  std::size_t peak_dofs() const { return peak_dofs_; }
  const AdaptReport& last_adapt() const { return last_adapt_; }

  Vec3 probe_displacement(std::size_t i) const;

 private:
  void topology_changed();
  TraceRecord make_record(double wall) const;
  VecX beam_free_motion(NeedleRuntime& n, const Vec3& drive, Eigen::LLT<MatX>& llt,
                        std::vector<char>& fixed);

  ScenarioConfig config_;
  HexMesh mesh_;
  MechanicalState state_;
  TissueModel model_;
  TissueIntegrator integrator_;
  std::vector<BoundaryFace> boundary_;
  std::vector<NeedleRuntime> needles_;
  std::vector<MaterialPoint> probes_;
  std::vector<Vec3> probe_reference_;
  std::optional<MaterialPoint> target_;
  ConstraintSet constraints_;
  PgsResult pgs_;
  std::vector<std::vector<int>> needle_tip_rows_;  // per needle: row ids (surface or tip)
  RecoveredField field_;
  bool field_valid_ = false;
  AdaptReport last_adapt_;
  std::vector<TraceRecord> records_;
  std::size_t peak_dofs_ = 0;
  int step_ = 0;
};

/// Runs `config` for its configured steps, writing traces.csv,
/// constraints.csv and VTK snapshots into `out_dir`. Returns the process
/// exit status (0 on success); partial outputs are flushed on failure.
int run_simulation(const ScenarioConfig& config, const std::filesystem::path& out_dir);

}  // namespace needlesim

#pragma once

#include "needlesim/simulation.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace needlesim {

/// Legacy ASCII VTK unstructured grid of the active hexahedra at the
/// current configuration. Cell data: eta, von_mises. Point data:
/// displacement. `field` may be empty, in which case eta is written as 0.
void export_vtk(const HexMesh& mesh, const TissueModel& model, const MechanicalState& state,
                const RecoveredField& field, const std::filesystem::path& path);

/// Trace CSV header: step,time,dofs,eta_max, one column per probe, then
/// tip_target_distance when a target is configured.
std::string trace_header(const std::vector<std::string>& probe_names, bool has_target);
std::string trace_row(const TraceRecord& record, bool has_target);

void export_traces(const std::vector<TraceRecord>& records,
                   const std::vector<std::string>& probe_names, bool has_target,
                   const std::filesystem::path& path);

/// Constraint diagnostics CSV, one row per step.
std::string constraint_header();
std::string constraint_row(const TraceRecord& record);

/// Streams trace rows, flushing after each write.
class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& path, const std::vector<std::string>& probe_names,
              bool has_target);
  void write(const TraceRecord& record);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  bool has_target_;
};

class ConstraintLogWriter {
 public:
  explicit ConstraintLogWriter(const std::filesystem::path& path);
  void write(const TraceRecord& record);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

}  // namespace needlesim

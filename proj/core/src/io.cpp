#include "needlesim/io.hpp"

#include <cstdio>
#include <sstream>

namespace needlesim {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void export_vtk(const HexMesh& mesh, const TissueModel& model, const MechanicalState& state,
                const RecoveredField& field, const std::filesystem::path& path) {
  const std::size_t n = mesh.nodes.size();
  if (static_cast<std::size_t>(state.x.size()) != 3 * n)
    throw InvalidInput("export_vtk: state size does not match the mesh");
  const auto active = mesh.active_elements();
  std::vector<double> vm(mesh.elements.size(), 0.0);
  if (model.active().size() == active.size() && !active.empty()) {
    const auto samples = model.centre_samples(state.x);
    for (std::size_t k = 0; k < samples.size(); ++k) vm[model.active()[k]] = von_mises(samples[k].stress);
  }

  std::ofstream out = open_out(path);
  out << "# vtk DataFile Version 3.0\nneedlesim mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n << " double\n";
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = state.position(static_cast<NodeId>(i));
    out << num(p.x()) << ' ' << num(p.y()) << ' ' << num(p.z()) << '\n';
  }
  out << "CELLS " << active.size() << ' ' << 9 * active.size() << '\n';
  for (ElementId e : active) {
    out << 8;
    for (NodeId v : mesh.elements[e].nodes) out << ' ' << v;
    out << '\n';
  }
  out << "CELL_TYPES " << active.size() << '\n';
  for (std::size_t i = 0; i < active.size(); ++i) out << "12\n";
  out << "CELL_DATA " << active.size() << "\nSCALARS eta double 1\nLOOKUP_TABLE default\n";
  for (ElementId e : active)
    out << num(static_cast<std::size_t>(e) < field.eta.size() ? field.eta[e] : 0.0) << '\n';
  out << "SCALARS von_mises double 1\nLOOKUP_TABLE default\n";
  for (ElementId e : active) out << num(vm[e]) << '\n';
  out << "POINT_DATA " << n << "\nVECTORS displacement double\n";
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 u = state.position(static_cast<NodeId>(i)) - mesh.nodes[i].rest;
    out << num(u.x()) << ' ' << num(u.y()) << ' ' << num(u.z()) << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string trace_header(const std::vector<std::string>& probe_names, bool has_target) {
  std::string h = "step,time,dofs,eta_max";
  for (const auto& p : probe_names) h += "," + p;
  if (has_target) h += ",tip_target_distance";
  return h;
}

std::string trace_row(const TraceRecord& r, bool has_target) {
  std::ostringstream os;
  os << r.step << ',' << num(r.time) << ',' << r.dofs << ',' << num(r.eta_max);
  for (double p : r.probes) os << ',' << num(p);
  if (has_target) os << ',' << (r.tip_target_distance ? num(*r.tip_target_distance) : "");
  return os.str();
}

void export_traces(const std::vector<TraceRecord>& records,
                   const std::vector<std::string>& probe_names, bool has_target,
                   const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << trace_header(probe_names, has_target) << '\n';
  for (const auto& r : records) out << trace_row(r, has_target) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string constraint_header() {
  return "step,rows,surface,tip,shaft,tjunction,sticking,sliding,cutting,max_penetration,"
         "pgs_iterations,pgs_converged,slave_nodes,needle_dofs,tip_phases,wall_ms";
}

std::string constraint_row(const TraceRecord& r) {
  const auto& c = r.constraints;
  std::ostringstream os;
  os << r.step << ',' << c.rows << ',' << c.surface << ',' << c.tip << ',' << c.shaft << ','
     << c.tjunction << ',' << c.sticking << ',' << c.sliding << ',' << c.cutting << ','
     << num(c.max_penetration) << ',' << c.pgs_iterations << ',' << (c.pgs_converged ? 1 : 0) << ','
     << r.slave_nodes << ',' << r.needle_dofs << ',';
  for (std::size_t i = 0; i < r.tip_phases.size(); ++i) os << (i ? ";" : "") << to_string(r.tip_phases[i]);
  os << ',' << num(1e3 * r.wall_seconds);
  return os.str();
}

TraceWriter::TraceWriter(const std::filesystem::path& path,
                         const std::vector<std::string>& probe_names, bool has_target)
    : out_(open_out(path)), has_target_(has_target) {
  out_ << trace_header(probe_names, has_target) << '\n';
  out_.flush();
}

void TraceWriter::write(const TraceRecord& record) {
  out_ << trace_row(record, has_target_) << '\n';
  out_.flush();
}

ConstraintLogWriter::ConstraintLogWriter(const std::filesystem::path& path) : out_(open_out(path)) {
  out_ << constraint_header() << '\n';
  out_.flush();
}

void ConstraintLogWriter::write(const TraceRecord& record) {
  out_ << constraint_row(record) << '\n';
  out_.flush();
}

}  // namespace needlesim

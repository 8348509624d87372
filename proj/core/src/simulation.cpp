#include "needlesim/simulation.hpp"

#include "needlesim/io.hpp"
#include "needlesim/log.hpp"
#include "needlesim/surface.hpp"

#include <chrono>
#include <fstream>

namespace needlesim {

namespace {

SurfaceGeometry make_surface(const ScenarioConfig& c) {
  if (c.geometry == "box") return SurfaceGeometry::box(c.box_min, c.box_max);
  if (c.geometry == "ellipsoid") return SurfaceGeometry::ellipsoid(c.centre, c.semi_axes);
  return SurfaceGeometry::load_obj(c.surface_path);
}

void apply_boxes(const HexMesh& mesh, MechanicalState& state, const std::vector<NamedBox>& boxes) {
  const double tol = 1e-9 * mesh.grid.cell_size();
  for (const auto& b : boxes) {
    int count = 0;
    for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
      if (!b.box.contains(mesh.nodes[n].rest, tol)) continue;
      state.fix_node(static_cast<NodeId>(n), b.displacement);
      ++count;
    }
    if (count == 0) log::warn("region '", b.name, "' holds no mesh nodes");
    log::info("region '", b.name, "': ", count, " nodes held");
  }
}

Vec3 segment_tangent(const BeamModel& beam, std::size_t s) {
  return (beam.x[s + 1] - beam.x[s]).normalized();
}

constexpr double kCutAdvance = 1e-12;

}  // namespace

Simulation::Simulation(ScenarioConfig config) : config_(std::move(config)) {
  config_.validate();
  const SurfaceGeometry surface = make_surface(config_);
  mesh_ = voxelize_domain(surface, config_.resolution, config_.max_depth);
  if (config_.uniform_refine > 0) refine_uniform(mesh_, config_.uniform_refine);
  mesh_.max_depth = std::max(config_.max_depth, config_.uniform_refine);
  log::info("mesh: ", mesh_.num_active(), " active elements, ", mesh_.nodes.size(), " nodes, ",
            mesh_.t_junctions.size(), " hanging");

  state_ = MechanicalState::at_rest(mesh_);
  apply_boxes(mesh_, state_, config_.fixed);
  apply_boxes(mesh_, state_, config_.preload);
  model_.rebuild(mesh_, config_.tissue);
  integrator_.set_topology(mesh_, config_.tjunction_solver);
  boundary_ = mesh_.boundary_faces();

  if (!config_.preload.empty()) {
    VecX f_ext = model_.dof_mass();
    for (Eigen::Index i = 0; i < f_ext.size(); ++i) f_ext[i] *= config_.gravity[i % 3];
    const auto rep = solve_static(model_, state_, mesh_, f_ext);
    if (!rep.converged)
      log::warn("preload relaxation stopped after ", rep.iterations, " iterations (residual ",
                rep.residual, ")");
    else
      log::info("preload relaxed in ", rep.iterations, " iterations");
  }

  for (const auto& p : config_.probes) {
    const auto mp = mesh_.locate_rest(p.position);
    if (!mp) throw InvalidInput("probe '" + p.name + "' lies outside the tissue");
    probes_.push_back(*mp);
    probe_reference_.push_back(current_position(mesh_, state_.x, *mp));
  }
  if (config_.target) {
    const auto mp = mesh_.locate_rest(*config_.target);
    if (!mp) throw InvalidInput("target lies outside the tissue");
    target_ = *mp;
  }

  const Vec3 dir = config_.trajectory.direction.normalized();
  for (const auto& nc : config_.needles) {
    NeedleRuntime n;
    n.config = nc;
    const Vec3 base = config_.trajectory.tip_start - nc.length * dir;
    n.beam = BeamModel::straight(nc.name, base, dir, nc.length, nc.segments, nc.radius, nc.material);
    needles_.push_back(std::move(n));
  }
  for (auto& n : needles_) {
    if (n.config.nested_in.empty()) continue;
    for (std::size_t h = 0; h < needles_.size(); ++h)
      if (needles_[h].config.name == n.config.nested_in) n.host = static_cast<int>(h);
    if (n.host < 0) throw InvalidInput("needle '" + n.config.name + "' nested in unknown needle");
  }
  needle_tip_rows_.resize(needles_.size());
  peak_dofs_ = dofs();
}

Vec3 Simulation::probe_displacement(std::size_t i) const {
  return current_position(mesh_, state_.x, probes_[i]) - probe_reference_[i];
}

const RecoveredField& Simulation::field() {
  if (!field_valid_) {
    model_.update_rotations(state_.x);
    field_ = recover_spr(mesh_, model_, state_.x);
    field_valid_ = true;
  }
  return field_;
}

void Simulation::topology_changed() {
  model_.rebuild(mesh_, config_.tissue);
  integrator_.set_topology(mesh_, config_.tjunction_solver);
  boundary_ = mesh_.boundary_faces();
  for (auto& p : probes_) p = mesh_.descend(p);
  if (target_) target_ = mesh_.descend(*target_);
  for (auto& n : needles_) {
    if (n.tip.surface_anchor.element != kNoElement) n.tip.surface_anchor = mesh_.descend(n.tip.surface_anchor);
    if (n.tip.tip_anchor.element != kNoElement) n.tip.tip_anchor = mesh_.descend(n.tip.tip_anchor);
    n.shaft_points.clear();
    n.shaft_path_size = 0;
  }
  field_valid_ = false;
  peak_dofs_ = std::max(peak_dofs_, dofs());
}

VecX Simulation::beam_free_motion(NeedleRuntime& n, const Vec3& drive, Eigen::LLT<MatX>& llt,
                                  std::vector<char>& fixed) {
  const double tau = config_.tau;
  const BeamModel& b = n.beam;
  const auto dofs = static_cast<Eigen::Index>(b.num_dofs());
  const MatX k = beam_global_stiffness(b);
  const VecX m = beam_lumped_mass(b);
  const VecX f_int = beam_internal_force(b);
  const double alpha = b.material.rayleigh_mass, beta = b.material.rayleigh_stiffness;
  VecX f_ext = VecX::Zero(dofs);
  for (std::size_t i = 0; i < b.num_nodes(); ++i)
    f_ext.segment<3>(static_cast<Eigen::Index>(6 * i)) = m[static_cast<Eigen::Index>(6 * i)] * config_.gravity;

  MatX a = (tau * beta + tau * tau) * k;
  a.diagonal() += (1.0 + tau * alpha) * m;
  VecX rhs = tau * (f_ext - f_int - alpha * m.cwiseProduct(b.v) - beta * (k * b.v)) - tau * tau * (k * b.v);

  fixed.assign(static_cast<std::size_t>(dofs), 0);
  VecX value = VecX::Zero(dofs);
  const bool driven = !n.nested() || !n.released;
  if (driven) {
    for (int d = 0; d < 6; ++d) fixed[d] = 1;
    value.head<3>() = drive - b.v.head<3>();
    value.segment<3>(3) = -b.v.segment<3>(3);
  }
  apply_dirichlet(a, rhs, fixed, value);
  llt.compute(a);
  if (llt.info() != Eigen::Success) throw NumericalFailure("beam system of '" + b.name + "' is not positive definite");
  return llt.solve(rhs);
}

const TraceRecord& Simulation::step() {
  const auto t0 = std::chrono::steady_clock::now();
  const double tau = config_.tau;
  const int k = step_;
  const auto& ip = config_.interaction;
  const Vec3 drive = config_.trajectory.velocity(k, tau);

  // Electrode release: the nested needle keeps its position and takes over
  // its own tip anchor inside the shared channel.
  for (auto& n : needles_) {
    if (!n.nested() || n.released || n.config.release_step < 0 || k < n.config.release_step) continue;
    n.released = true;
    const auto& host = needles_[n.host];
    n.tip.phase = host.tip.phase == TipPhase::kInserted ? TipPhase::kInserted : TipPhase::kFree;
    if (n.tip.phase == TipPhase::kInserted) {
      bool inside = false;
      n.tip.tip_anchor = locate_current(model_, state_.x, n.beam.x.back(), &inside);
      n.tip.path = host.tip.path;
    }
    log::info("step ", k, ": needle '", n.config.name, "' released (", to_string(n.tip.phase), ")");
  }

  // Free motion of the tissue and needles.
  VecX f_ext = model_.dof_mass();
  for (Eigen::Index i = 0; i < f_ext.size(); ++i) f_ext[i] *= config_.gravity[i % 3];
  const VecX dv_tissue = integrator_.prepare(model_, state_, f_ext, tau);

  std::vector<Eigen::LLT<MatX>> beam_llt(needles_.size());
  std::vector<std::vector<char>> beam_fixed(needles_.size());
  std::vector<VecX> dv_beam(needles_.size());
  for (std::size_t i = 0; i < needles_.size(); ++i) {
    const Vec3 d = needles_[i].nested() && needles_[i].released ? Vec3::Zero() : drive;
    dv_beam[i] = beam_free_motion(needles_[i], d, beam_llt[i], beam_fixed[i]);
  }

  // Constraint rows.
  std::vector<const BeamModel*> beams;
  for (const auto& n : needles_) beams.push_back(&n.beam);
  ConstraintBuilder builder(mesh_, state_, beams, tau);
  auto& set = builder.set();
  for (auto& r : needle_tip_rows_) r.clear();
  const double spacing = ip.shaft_spacing;

  for (std::size_t ni = 0; ni < needles_.size(); ++ni) {
    auto& n = needles_[ni];
    if (n.shielded()) continue;
    const int beam = static_cast<int>(ni);
    const BeamFrame tf = tip_frame(n.beam);
    const BeamProjection tp = tip_projection(n.beam);
    auto& rows = needle_tip_rows_[ni];

    if (n.tip.phase == TipPhase::kFree) {
      const Vec3 v_tip = n.beam.v.segment<3>(static_cast<Eigen::Index>(6 * (n.beam.num_nodes() - 1))) +
                         dv_beam[ni].segment<3>(static_cast<Eigen::Index>(6 * (n.beam.num_nodes() - 1)));
      const Vec3 a = tf.position;
      const Vec3 b = a + tau * v_tip + ip.penetration_tolerance * tf.tangent;
      if (const auto hit = find_surface_crossing(mesh_, boundary_, state_.x, a, b)) {
        n.tip.phase = TipPhase::kOnSurface;
        n.tip.surface_anchor = hit->anchor;
        n.tip.surface_normal = hit->normal;
        log::info("step ", k, ": needle '", n.config.name, "' touches the surface");
      }
    }

    if (n.tip.phase == TipPhase::kOnSurface) {
      const Vec3 ps = current_position(mesh_, state_.x, n.tip.surface_anchor);
      const Vec3 nrm = n.tip.surface_normal;
      const double gap = nrm.dot(tf.position - ps);
      if (gap > spacing) {
        const auto tr = update_tip_state(n.tip.phase, TipForces{0.0, 0.0, 0.0, false, true}, ip);
        n.tip.phase = tr.phase;
      } else {
        const auto [t1, t2] = complete_frame(nrm);
        ConstraintPoint cp;
        cp.kind = ConstraintKind::kSurface;
        cp.beam = beam;
        cp.frame.col(0) = nrm;
        cp.frame.col(1) = t1;
        cp.frame.col(2) = t2;
        cp.anchor = n.tip.surface_anchor;
        cp.needle = tp;
        cp.gap = gap;
        cp.first_row = set.rows;
        cp.num_rows = 3;
        const int rn = builder.add_row(nrm, beam, tp, n.tip.surface_anchor, gap);
        builder.add_row(t1, beam, tp, n.tip.surface_anchor, t1.dot(tf.position - ps));
        builder.add_row(t2, beam, tp, n.tip.surface_anchor, t2.dot(tf.position - ps));
        set.blocks.push_back(ConstraintBlock::unilateral(rn, tau * ip.puncture));
        set.blocks.push_back(ConstraintBlock::friction_disc(rn + 1, ip.mu, {rn}));
        set.points.push_back(cp);
        rows = {rn};
      }
    } else if (n.tip.phase == TipPhase::kInserted && n.tip.tip_anchor.element != kNoElement) {
      const Vec3 pa = current_position(mesh_, state_.x, n.tip.tip_anchor);
      const Vec3 t = tf.tangent;
      const double axial_gap = t.dot(pa - tf.position);
      if (axial_gap < 0.5 * spacing) {
        const Vec3 n1 = tf.normal, n2 = tf.binormal;
        ConstraintPoint cp;
        cp.kind = ConstraintKind::kTip;
        cp.beam = beam;
        cp.frame.col(0) = -t;
        cp.frame.col(1) = n1;
        cp.frame.col(2) = n2;
        cp.anchor = n.tip.tip_anchor;
        cp.needle = tp;
        cp.gap = axial_gap;
        cp.first_row = set.rows;
        cp.num_rows = 3;
        // Lateral rows precede the axial row so its bound sees converged
        // lateral multipliers.
        const int r1 = builder.add_row(n1, beam, tp, n.tip.tip_anchor, n1.dot(tf.position - pa));
        const int r2 = builder.add_row(n2, beam, tp, n.tip.tip_anchor, n2.dot(tf.position - pa));
        const int ra = builder.add_row(-t, beam, tp, n.tip.tip_anchor, axial_gap);
        set.blocks.push_back(ConstraintBlock::bilateral(r1));
        set.blocks.push_back(ConstraintBlock::bilateral(r2));
        set.blocks.push_back(ConstraintBlock::unilateral(ra, tau * ip.cutting, ip.mu, {r1, r2}));
        // Point records store the rows in frame order (axial, lateral, lateral).
        cp.first_row = r1;
        set.points.push_back(cp);
        rows = {ra, r1, r2};
      }
    }
  }

  // Shaft rows along each channel: the host takes a point while it covers
  // it, a released nested needle otherwise.
  for (std::size_t ci = 0; ci < needles_.size(); ++ci) {
    auto& ch = needles_[ci];
    if (ch.nested()) continue;
    if (ch.tip.path.size() >= 2 && ch.shaft_path_size != ch.tip.path.size()) {
      ch.shaft_points = place_shaft_constraints(mesh_, ch.tip.path, spacing);
      ch.shaft_path_size = ch.tip.path.size();
    }
    const double path_len = ch.tip.path_length();
    std::vector<int> candidates{static_cast<int>(ci)};
    for (std::size_t j = 0; j < needles_.size(); ++j)
      if (needles_[j].host == static_cast<int>(ci) && needles_[j].released) candidates.push_back(static_cast<int>(j));
    for (std::size_t s = 0; s < ch.shaft_points.size(); ++s) {
      if ((s + 1) * spacing > path_len - 0.25 * spacing) break;
      const MaterialPoint& mp = ch.shaft_points[s];
      const Vec3 pt = current_position(mesh_, state_.x, mp);
      for (int c : candidates) {
        const BeamModel& b = needles_[c].beam;
        const BeamProjection proj = project_onto_beam(b, pt);
        const bool past_tip = proj.arclength >= b.length() - 1e-12;
        const bool before_base = proj.segment == 0 && proj.fraction <= 0.0;
        const double capture = std::max(spacing, 4.0 * needles_[c].config.radius);
        if (past_tip || before_base || proj.distance > capture) continue;
        const Vec3 t = segment_tangent(b, proj.segment);
        const auto [n1, n2] = complete_frame(t);
        ConstraintPoint cp;
        cp.kind = ConstraintKind::kShaft;
        cp.beam = c;
        cp.frame.col(0) = t;
        cp.frame.col(1) = n1;
        cp.frame.col(2) = n2;
        cp.anchor = mp;
        cp.needle = proj;
        cp.first_row = set.rows;
        cp.num_rows = 3;
        const int r1 = builder.add_row(n1, c, proj, mp, n1.dot(proj.point - pt));
        const int r2 = builder.add_row(n2, c, proj, mp, n2.dot(proj.point - pt));
        const int ra = builder.add_row(t, c, proj, mp, 0.0);
        set.blocks.push_back(ConstraintBlock::bilateral(r1));
        set.blocks.push_back(ConstraintBlock::bilateral(r2));
        set.blocks.push_back(ConstraintBlock::friction(ra, ip.mu, {r1, r2}));
        set.points.push_back(cp);
        break;
      }
    }
  }

  // Hanging-node rows when the junctions stay in the system.
  int t_rows = 0;
  if (integrator_.mode() == TJunctionMode::kLagrange && !mesh_.t_junctions.empty()) {
    const SparseMatrix& tm = integrator_.t_matrix();
    const auto& fixed = integrator_.effective_fixed();
    const VecX value = tm * state_.x;
    for (Eigen::Index r = 0; r < tm.rows(); ++r) {
      std::vector<std::pair<int, double>> coeffs;
      bool slave_fixed = false;
      for (SparseMatrix::InnerIterator it(tm, r); it; ++it) {
        if (it.value() == 1.0 && fixed[it.col()]) slave_fixed = true;
        coeffs.emplace_back(static_cast<int>(it.col()), it.value());
      }
      if (slave_fixed) continue;
      const int row = builder.add_tissue_row(coeffs, value[r]);
      set.blocks.push_back(ConstraintBlock::bilateral(row));
      ++t_rows;
    }
  }

  constraints_ = builder.finish();
  ConstraintDiagnostics diag;
  diag.rows = constraints_.rows;
  diag.tjunction = t_rows;

  VecX dv_t = dv_tissue;
  if (constraints_.rows > 0) {
    std::vector<BodyBlock> bodies;
    bodies.push_back({constraints_.tissue_jacobian(model_.num_dofs()), state_.v + dv_tissue,
                      [this](const MatX& r) { return integrator_.solve(r); }});
    for (std::size_t i = 0; i < needles_.size(); ++i) {
      const auto& fx = beam_fixed[i];
      const auto& llt = beam_llt[i];
      bodies.push_back({constraints_.beam_jacobian(i, needles_[i].beam.num_dofs()),
                        needles_[i].beam.v + dv_beam[i], [&fx, &llt](const MatX& r) {
                          MatX rr = r;
                          for (Eigen::Index q = 0; q < rr.rows(); ++q)
                            if (fx[q]) rr.row(q).setZero();
                          return MatX(llt.solve(rr));
                        }});
    }
    const CoupledSystem sys = assemble_coupled(bodies, constraints_.rows);
    const VecX target = constraints_.target_vector();
    const CoupledSolution sol = solve_constraints(sys, constraints_.blocks, target, config_.pgs);
    pgs_ = sol.pgs;
    if (!pgs_.converged)
      log::warn("step ", k, ": PGS stopped at ", pgs_.iterations, " iterations (change ",
                pgs_.max_change, ")");
    dv_t += sol.dv[0];
    for (std::size_t i = 0; i < needles_.size(); ++i) dv_beam[i] += sol.dv[1 + i];
    diag.pgs_iterations = pgs_.iterations;
    diag.pgs_converged = pgs_.converged;

    const VecX u = sys.free_velocity + sys.w * pgs_.lambda;
    VecX row_bound = VecX::Constant(constraints_.rows, kUnbounded);
    for (const auto& b : constraints_.blocks)
      if (b.type == ConstraintBlock::Type::kUnilateral) row_bound[b.first] = b.bound(pgs_.lambda);
    for (auto& cp : constraints_.points) {
      for (int r = 0; r < cp.num_rows; ++r) cp.lambda[r] = pgs_.lambda[cp.first_row + r] / tau;
      if (cp.kind == ConstraintKind::kTip) {
        // Stored lateral-first; present in frame order.
        const Vec3 l = cp.lambda;
        cp.lambda = Vec3(l[2], l[0], l[1]);
      }
      int unilateral_row = -1;
      if (cp.kind == ConstraintKind::kSurface) unilateral_row = cp.first_row;
      if (cp.kind == ConstraintKind::kTip) unilateral_row = cp.first_row + 2;
      // A row sitting on its cap is breaking through, not penetrating.
      if (unilateral_row >= 0 && pgs_.lambda[unilateral_row] >=
                                     row_bound[unilateral_row] - config_.pgs.saturation_tolerance)
        unilateral_row = -1;
      if (unilateral_row >= 0) {
        const double post_gap = tau * (u[unilateral_row] - target[unilateral_row]);
        diag.max_penetration = std::max(diag.max_penetration, -post_gap);
      }
      switch (cp.kind) {
        case ConstraintKind::kSurface: ++diag.surface; break;
        case ConstraintKind::kTip: ++diag.tip; break;
        case ConstraintKind::kShaft: ++diag.shaft; break;
        case ConstraintKind::kTJunction: break;
      }
    }
  } else {
    pgs_ = PgsResult{};
    pgs_.converged = true;
  }

  // Threshold logic on the solved multipliers.
  for (std::size_t ni = 0; ni < needles_.size(); ++ni) {
    auto& n = needles_[ni];
    const auto& rows = needle_tip_rows_[ni];
    if (rows.empty()) continue;
    if (n.tip.phase == TipPhase::kOnSurface) {
      TipForces f;
      f.surface_normal = pgs_.lambda[rows[0]] / tau;
      const auto tr = update_tip_state(n.tip.phase, f, ip);
      if (tr.punctured) {
        n.tip.phase = TipPhase::kInserted;
        n.tip.tip_anchor = n.tip.surface_anchor;
        n.tip.path = {mesh_.rest_position(n.tip.surface_anchor)};
        log::info("step ", k, ": needle '", n.config.name, "' punctures the surface");
      }
    } else if (n.tip.phase == TipPhase::kInserted && rows.size() == 3) {
      TipForces f;
      f.tip_axial = pgs_.lambda[rows[0]] / tau;
      f.tip_lateral = Vec3(pgs_.lambda[rows[1]], pgs_.lambda[rows[2]], 0.0).norm() / tau;
      const auto tr = update_tip_state(n.tip.phase, f, ip);
      n.tip.cutting = tr.cuts;
    } else {
      n.tip.cutting = false;
    }
  }
  for (auto& cp : constraints_.points) {
    const Vec3& l = cp.lambda;
    switch (cp.kind) {
      case ConstraintKind::kSurface: {
        const double bound = ip.mu * std::max(l[0], 0.0);
        cp.state = Vec3(0.0, l[1], l[2]).norm() >= bound - ip.threshold_tolerance && bound > 0.0
                       ? ConstraintState::kSliding : ConstraintState::kSticking;
        break;
      }
      case ConstraintKind::kTip:
        cp.state = needles_[cp.beam].tip.cutting ? ConstraintState::kCutting : ConstraintState::kSticking;
        break;
      case ConstraintKind::kShaft: {
        const double bound = ip.mu * Vec3(0.0, l[1], l[2]).norm();
        cp.state = std::abs(l[0]) >= bound - ip.threshold_tolerance ? ConstraintState::kSliding
                                                                    : ConstraintState::kSticking;
        break;
      }
      case ConstraintKind::kTJunction: cp.state = ConstraintState::kSticking; break;
    }
    if (cp.state == ConstraintState::kSticking) ++diag.sticking;
    if (cp.state == ConstraintState::kSliding) ++diag.sliding;
    if (cp.state == ConstraintState::kCutting) ++diag.cutting;
  }

  // Commit.
  commit_step(state_, dv_t, tau);
  for (std::size_t i = 0; i < needles_.size(); ++i) commit_beam(needles_[i].beam, dv_beam[i], tau);
  for (auto& n : needles_)
    if (n.shielded()) {
      const auto& host = needles_[n.host].beam;
      n.beam.x = host.x;
      n.beam.q = host.q;
      n.beam.v = host.v;
    }

  // A cutting tip re-anchors where it stopped and extends the channel.
  for (auto& n : needles_) {
    if (n.tip.phase != TipPhase::kInserted || !n.tip.cutting) continue;
    const Vec3 tip = n.beam.x.back();
    const Vec3 pa = current_position(mesh_, state_.x, n.tip.tip_anchor);
    if (tip_frame(n.beam).tangent.dot(tip - pa) <= kCutAdvance) continue;
    bool inside = false;
    const MaterialPoint mp = locate_current(model_, state_.x, tip, &inside);
    n.tip.tip_anchor = mp;
    auto& path = n.nested() ? needles_[n.host].tip.path : n.tip.path;
    const Vec3 rest = mesh_.rest_position(mp);
    if (path.empty() || (rest - path.back()).norm() > 1e-9 * mesh_.grid.cell_size()) path.push_back(rest);
  }
  field_valid_ = false;

  // Estimate and adapt.
  last_adapt_ = AdaptReport{};
  last_adapt_.dofs_before = last_adapt_.dofs_after = dofs();
  const bool adapt_now = config_.adaptive && (k + 1) % std::max(config_.adapt_stride, 1) == 0;
  field();
  // Below a strain-equivalent of 1e-12 the estimate is rounding noise.
  const double noise = 1e-12 * std::sqrt(config_.tissue.young * mesh_.total_active_volume());
  if (adapt_now && field_.eta_max > noise) {
    const auto marked = mark_elements(mesh_, field_, config_.theta);
    if (!marked.empty()) {
      last_adapt_ = refine_and_transfer(mesh_, state_, marked);
      if (last_adapt_.refined > 0) topology_changed();
    }
  }

  ++step_;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  TraceRecord rec = make_record(wall);
  rec.constraints = diag;
  records_.push_back(std::move(rec));
  return records_.back();
}

TraceRecord Simulation::make_record(double wall) const {
  TraceRecord r;
  r.step = step_;
  r.time = step_ * config_.tau;
  r.dofs = dofs();
  r.slave_nodes = mesh_.t_junctions.size();
  for (const auto& n : needles_) r.needle_dofs += n.beam.num_dofs();
  r.eta_max = field_.eta_max;
  for (std::size_t i = 0; i < probes_.size(); ++i) r.probes.push_back(probe_displacement(i).norm());
  if (target_) {
    int idx = static_cast<int>(needles_.size()) - 1;
    for (std::size_t i = 0; i < needles_.size(); ++i)
      if (needles_[i].config.name == config_.target_needle) idx = static_cast<int>(i);
    if (idx >= 0)
      r.tip_target_distance = (needles_[idx].beam.x.back() - current_position(mesh_, state_.x, *target_)).norm();
  }
  for (const auto& n : needles_) r.tip_phases.push_back(n.tip.phase);
  r.wall_seconds = wall;
  return r;
}

void Simulation::run(int steps, const std::function<void(const TraceRecord&)>& on_step) {
  for (int i = 0; i < steps; ++i) {
    const auto& rec = step();
    if (on_step) on_step(rec);
  }
}

int run_simulation(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    log::error("cannot create output directory ", out_dir.string(), ": ", ec.message());
    return 1;
  }
  std::unique_ptr<Simulation> sim;
  try {
    sim = std::make_unique<Simulation>(config);
  } catch (const InvalidInput& e) {
    log::error(e.what());
    return 1;
  }

  std::vector<std::string> probe_names;
  for (const auto& p : config.probes) probe_names.push_back(p.name);
  const bool has_target = config.target.has_value();
  TraceWriter traces(out_dir / "traces.csv", probe_names, has_target);
  ConstraintLogWriter diag(out_dir / "constraints.csv");

  auto snapshot = [&](int step) {
    export_vtk(sim->mesh(), sim->model(), sim->state(), sim->field(),
               out_dir / ("mesh_" + std::to_string(step) + ".vtk"));
  };
  try {
    if (config.vtk_every > 0) snapshot(0);
    for (int i = 0; i < config.steps; ++i) {
      const TraceRecord& rec = sim->step();
      traces.write(rec);
      diag.write(rec);
      if (config.vtk_every > 0 && rec.step % config.vtk_every == 0) snapshot(rec.step);
    }
    if (config.vtk_every > 0 && config.steps % config.vtk_every != 0) snapshot(config.steps);
  } catch (const std::exception& e) {
    log::error("step ", sim->current_step(), ": ", e.what());
    traces.flush();
    diag.flush();
    return 2;
  }
  log::info("finished ", config.steps, " steps; peak DOFs ", sim->peak_dofs());
  return 0;
}

}  // namespace needlesim

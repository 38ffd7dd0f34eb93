#pragma once
// Experiment drivers shared by the command-line runner and the acceptance
// checks: refinement ladders against the closed-form expanding profile, the
// wall-bounded band study with node insertion on the contact planes, and the
// two contact demonstrations (merging bumps, random round obstacles).
#include <mmvem/meshgen.hpp>
#include <mmvem/mmvem.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace mmvem {

// ---------------------------------------------------------------------------
// Refinement-ladder bookkeeping
// ---------------------------------------------------------------------------

struct LevelResult {
  int level = 0;
  idx n_dof = 0;          // nodes of the final mesh (insertions included)
  double h_mean = 0.0;    // of the generated mesh, before any motion
  double dt = 0.0;
  double sol_error = 0.0;
  double mesh_error = 0.0;
  double theta_drift = 0.0;  // max relative drift of the conserved total
};

// Fires after each finished level so partial tables survive a failure.
using LevelHook = std::function<void(const LevelResult&)>;

// Convergence rates between consecutive rows; entry 0 is NaN (no predecessor).
struct LadderRates {
  std::vector<double> sol;
  std::vector<double> mesh;
};

inline LadderRates ladder_rates(const std::vector<LevelResult>& rows) {
  LadderRates rates;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rates.sol.assign(rows.size(), nan);
  rates.mesh.assign(rows.size(), nan);
  std::vector<double> hs, es, em;
  for (const LevelResult& r : rows) {
    hs.push_back(r.h_mean);
    es.push_back(r.sol_error);
    em.push_back(r.mesh_error);
  }
  if (rows.size() >= 2) {
    const std::vector<double> rs = eoc(es, hs), rm = eoc(em, hs);
    for (std::size_t k = 0; k < rs.size(); ++k) {
      rates.sol[k + 1] = rs[k];
      rates.mesh[k + 1] = rm[k];
    }
  }
  return rates;
}

inline double max_theta_drift(const std::vector<StepDiagnostics>& history, double theta0) {
  double drift = 0.0;
  for (const StepDiagnostics& d : history)
    drift = std::max(drift, std::abs(d.theta - theta0) / std::abs(theta0));
  return drift;
}

// ---------------------------------------------------------------------------
// Shared stepping loop
// ---------------------------------------------------------------------------

// Per-step probe: the mesh the step started from, the scratch holding the
// potential and velocity used (indexed by that mesh), and the diagnostics.
using StepProbe =
    std::function<void(const PolyMesh&, const StepScratch&, const StepDiagnostics&)>;

struct LoopResult {
  PolyMesh mesh;  // last valid advanced mesh
  std::vector<StepDiagnostics> history;
  int steps = 0;
  bool degenerated = false;
  std::string termination = "completed";
};

// Steps from the state's current time to config.t_end like run(), but keeps
// the last valid mesh when a step fails (catch_degeneration) and exposes the
// per-step velocity to a probe. The hook fires on the output cadence and on
// the final step.
inline LoopResult stepping_loop(PolyMesh mesh, MonitorState& state, const ObstacleSet& obstacles,
                                const SimConfig& config, const SnapshotHook& hook = {},
                                const StepProbe& probe = {}, bool catch_degeneration = false) {
  validate_config(config);
  LoopResult out;
  out.mesh = std::move(mesh);
  StepScratch scratch;
  int empty_steps = 0;
  const double horizon = config.t_end;
  const double t_tol = 1e-12 * std::max(1.0, std::abs(horizon));
  while (state.time < horizon - t_tol) {
    StepOutcome so;
    try {
      so = step(out.mesh, state, obstacles, config, horizon - state.time, &scratch);
      if (so.diag.dt_used <= t_tol && ++empty_steps >= 100)
        throw ContactError("time stepping stalled: contact clipping produced 100 empty steps");
      if (so.diag.dt_used > t_tol) empty_steps = 0;
    } catch (const Error& e) {
      if (!catch_degeneration) throw;
      out.degenerated = true;
      out.termination = e.what();
      return out;
    }
    if (probe) probe(out.mesh, scratch, so.diag);
    out.mesh = std::move(so.mesh);
    ++out.steps;
    const bool final_step = !(state.time < horizon - t_tol);
    if (hook &&
        (final_step || (config.output_every > 0 && out.steps % config.output_every == 0)))
      hook(out.steps, out.mesh, state, so.diag);
    out.history.push_back(std::move(so.diag));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expanding-disc refinement ladder
// ---------------------------------------------------------------------------

struct ConvergenceSpec {
  GenSpec::Kind mesh_kind = GenSpec::Kind::cvt;
  int levels = 4;
  int base_cells = 200;       // element count x4 per level
  std::uint64_t mesh_seed = 7;
  int lloyd_iters = 100;
  double extra_time = 0.01;   // runs from the reference time to t0 + extra
  double dt_divisor = 250.0;  // coarsest dt = h_mean^2 / divisor, then /4 per level
  SimConfig::Recovery recovery = SimConfig::Recovery::ale;
};

inline void validate_spec(const ConvergenceSpec& s) {
  if (s.levels < 1) throw ConfigError("refinement ladder needs at least one level");
  if (s.base_cells < 4) throw ConfigError("base cell count must be at least 4");
  if (!(s.extra_time > 0.0)) throw ConfigError("run duration must be positive");
  if (!(s.dt_divisor > 0.0)) throw ConfigError("time-step divisor must be positive");
}

// Generates one disc mesh of the ladder, stamped with the family's reference
// time so initialization starts the clock there.
inline PolyMesh ladder_disc_mesh(const ConvergenceSpec& spec, int level,
                                 const SimilarityParams& params = {}) {
  GenSpec g;
  g.kind = spec.mesh_kind;
  g.domain = GenSpec::Domain::disc;
  g.r0 = params.r0;
  g.target_cells = spec.base_cells;
  for (int l = 0; l < level; ++l) g.target_cells *= 4;
  g.rng_seed = spec.mesh_seed + static_cast<std::uint64_t>(level);
  g.lloyd_iters = spec.lloyd_iters;
  PolyMesh mesh = generate(g);
  mesh.mesh_time = params.t0();
  return mesh;
}

// Runs the expanding-disc study level by level: start from the closed-form
// profile at its reference time, advance with a fixed step to t0+extra, and
// measure the solution error (mean nodal deviation), the front-tracking error
// (mean boundary-radius deviation), and the conservation drift.
inline std::vector<LevelResult> run_convergence(const ConvergenceSpec& spec,
                                                const LevelHook& on_level = {}) {
  validate_spec(spec);
  const SimilarityParams params{};  // m=1 planar disc family
  std::vector<LevelResult> rows;
  double dt_level = 0.0;
  for (int level = 0; level < spec.levels; ++level) {
    PolyMesh mesh = ladder_disc_mesh(spec, level, params);
    const double h = mean_cell_diameter(mesh);
    dt_level = level == 0 ? h * h / spec.dt_divisor : dt_level / 4.0;

    SimConfig cfg;
    cfg.m = params.m;
    cfg.dt_policy = SimConfig::DtPolicy::fixed;
    cfg.dt = dt_level;
    cfg.recovery_mode = spec.recovery;
    cfg.t_end = params.t0() + spec.extra_time;

    MonitorState state = initialize(mesh, ic_similarity(params), cfg);
    const double theta0 = state.theta;
    RunResult res = run(mesh, state, ObstacleSet{}, cfg);

    LevelResult row;
    row.level = level;
    row.n_dof = res.mesh.n_nodes();
    row.h_mean = h;
    row.dt = dt_level;
    row.sol_error = sol_error(state.rho, exact_similarity_reference(cfg.t_end, res.mesh, params));
    row.mesh_error = mesh_error(res.mesh, cfg.t_end, params, MeshErrorKind::radial);
    row.theta_drift = max_theta_drift(res.history, theta0);
    rows.push_back(row);
    if (on_level) on_level(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Wall-bounded band study (node insertion on the contact planes)
// ---------------------------------------------------------------------------

struct PlaneContactSpec {
  int levels = 3;
  int base_cells = 200;          // element count x4 per level
  int base_wall_intervals = 32;  // facing-side vertex spacing 1/N, x2 per level
  std::uint64_t mesh_seed = 7;
  int lloyd_iters = 100;
  double extra_time = 0.1;  // runs from the band family's reference time
  double dt_divisor = 250.0;
};

struct PlaneContactLevel {
  LevelResult result;
  double max_wall_vx = 0.0;  // largest |x-velocity| seen on a wall node
  int pivot_insertions = 0;
  int pivot_removals = 0;  // absorbed at corners or reinstated behind a slide
  std::vector<StepDiagnostics> history;
};

using PlaneContactHook = std::function<void(const PlaneContactLevel&)>;

// One level of the band-between-walls study. The gas starts as the band
// profile on the unit square, already touching both walls; as it expands
// vertically the boundary slides along the walls and picks up the walls'
// facing vertices as pivot insertions. Errors are measured against the
// one-dimensional member of the closed-form family.
inline PlaneContactLevel run_plane_contact_level(const PlaneContactSpec& spec, int level,
                                                 double dt, const SnapshotHook& hook = {}) {
  SimilarityParams band;
  band.d = 1;
  GenSpec g;
  g.kind = GenSpec::Kind::cvt;
  g.domain = GenSpec::Domain::square;
  g.side = 1.0;
  g.target_cells = spec.base_cells;
  for (int l = 0; l < level; ++l) g.target_cells *= 4;
  g.rng_seed = spec.mesh_seed + static_cast<std::uint64_t>(level);
  g.lloyd_iters = spec.lloyd_iters;
  PolyMesh mesh = generate(g);
  mesh.mesh_time = band.t0();
  const double h = mean_cell_diameter(mesh);

  ObstacleSet obs;
  obs.loops = plane_walls(-0.5, 0.5, spec.base_wall_intervals << level);
  // the square's side nodes rest on the walls from the start; tag them before
  // sampling so the first recovery does not pin them to zero
  apply_contact_classes(mesh, obs);

  SimConfig cfg;
  cfg.m = band.m;
  cfg.dt_policy = SimConfig::DtPolicy::fixed;
  cfg.dt = dt;
  cfg.t_end = band.t0() + spec.extra_time;

  MonitorState state = initialize(mesh, ic_1d_type(), cfg);
  const double theta0 = state.theta;

  PlaneContactLevel out;
  const StepProbe probe = [&](const PolyMesh& pre, const StepScratch& scratch,
                              const StepDiagnostics& diag) {
    for (const auto& [n, nrm] : contact_normals(pre, obs))
      if (std::abs(nrm.x) > 0.99)
        out.max_wall_vx = std::max(
            out.max_wall_vx, std::abs(scratch.velocity(2 * static_cast<Eigen::Index>(n))));
    for (const ContactEvent& ev : diag.events) {
      if (ev.kind == "pivot") ++out.pivot_insertions;
      if (ev.kind == "absorb" || ev.kind == "coalesce") ++out.pivot_removals;
    }
  };
  LoopResult res = stepping_loop(std::move(mesh), state, obs, cfg, hook, probe);

  out.result.level = level;
  out.result.n_dof = res.mesh.n_nodes();
  out.result.h_mean = h;
  out.result.dt = dt;
  out.result.sol_error =
      sol_error(state.rho, exact_similarity_reference(cfg.t_end, res.mesh, band));
  out.result.mesh_error = mesh_error(res.mesh, cfg.t_end, band, MeshErrorKind::vertical_band);
  out.result.theta_drift = max_theta_drift(res.history, theta0);
  out.history = std::move(res.history);
  return out;
}

inline std::vector<PlaneContactLevel> run_plane_contact(const PlaneContactSpec& spec,
                                                        const PlaneContactHook& on_level = {}) {
  if (spec.levels < 1) throw ConfigError("refinement ladder needs at least one level");
  if (!(spec.dt_divisor > 0.0)) throw ConfigError("time-step divisor must be positive");
  std::vector<PlaneContactLevel> rows;
  double dt_level = 0.0;
  for (int level = 0; level < spec.levels; ++level) {
    if (level == 0) {
      // coarsest step from the coarsest mesh size, halved resolution -> /4
      GenSpec g;
      g.kind = GenSpec::Kind::cvt;
      g.domain = GenSpec::Domain::square;
      g.side = 1.0;
      g.target_cells = spec.base_cells;
      g.rng_seed = spec.mesh_seed;
      g.lloyd_iters = spec.lloyd_iters;
      const double h0 = mean_cell_diameter(generate(g));
      dt_level = h0 * h0 / spec.dt_divisor;
    } else {
      dt_level /= 4.0;
    }
    rows.push_back(run_plane_contact_level(spec, level, dt_level));
    if (on_level) on_level(rows.back());
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Contact demonstrations
// ---------------------------------------------------------------------------

struct DemoSpec {
  int target_cells = 800;  // total cell budget (split across parts)
  std::uint64_t mesh_seed = 7;
  int lloyd_iters = 100;
  double extra_time = 0.0;  // duration past the family reference time; the
                            // two-bump demo instead runs to t_end_absolute
  double t_end_absolute = 1.0;
  int snapshot_every = 0;
  double c_dt = 1.0 / 250.0;
  // obstacle placement (round-obstacle demo only)
  std::uint64_t obstacle_seed = 1;
  int n_obstacles = 3;
  double obstacle_rmin = 0.06;
  double obstacle_rmax = 0.12;
  double center_rmin = 0.56;
  double center_rmax = 0.72;
};

struct DemoReport {
  PolyMesh mesh;  // last valid advanced mesh
  double end_time = 0.0;
  int steps = 0;
  bool degenerated = false;
  std::string termination = "completed";
  double theta_drift = 0.0;
  int merges = 0;
  int pivot_insertions = 0;
  int pivot_removals = 0;
  double first_merge_time = std::numeric_limits<double>::quiet_NaN();
  double first_pivot_time = std::numeric_limits<double>::quiet_NaN();
  int boundary_components = 0;
  std::vector<std::pair<double, ContactEvent>> events;  // (state time, event)
  std::vector<StepDiagnostics> history;
};

namespace experimentsdetail {

inline void tally_events(DemoReport& rep) {
  for (const StepDiagnostics& d : rep.history)
    for (const ContactEvent& ev : d.events) {
      if (ev.kind == "self") {
        if (rep.merges++ == 0) rep.first_merge_time = d.time;
      } else if (ev.kind == "pivot") {
        if (rep.pivot_insertions++ == 0) rep.first_pivot_time = d.time;
      } else if (ev.kind == "absorb" || ev.kind == "coalesce") {
        ++rep.pivot_removals;
      }
      rep.events.emplace_back(d.time, ev);
    }
}

}  // namespace experimentsdetail

// Two compact bumps released side by side: they expand, touch, and merge into
// a single connected region. Interior nodes follow the smoothed (harmonic)
// velocity so the merged region keeps a usable mesh.
inline DemoReport run_two_bump_demo(const DemoSpec& spec, const SnapshotHook& hook = {}) {
  const SimilarityParams params{};
  GenSpec g;
  g.kind = GenSpec::Kind::cvt;
  g.domain = GenSpec::Domain::disc;
  g.r0 = params.r0;
  g.target_cells = std::max(4, spec.target_cells / 2);
  g.lloyd_iters = spec.lloyd_iters;
  g.rng_seed = spec.mesh_seed;
  const PolyMesh left = translated(generate(g), {-0.8, 0.0});
  g.rng_seed = spec.mesh_seed + 1;
  const PolyMesh right = translated(generate(g), {0.8, 0.0});
  PolyMesh mesh = disjoint_union(left, right);
  mesh.mesh_time = params.t0();

  SimConfig cfg;
  cfg.m = params.m;
  cfg.dt_policy = SimConfig::DtPolicy::h_scaled;
  cfg.c_dt = spec.c_dt;
  cfg.interior_velocity = SimConfig::InteriorVelocity::harmonic;
  cfg.t_end = spec.t_end_absolute;
  cfg.output_every = spec.snapshot_every;
  cfg.abort_on_negative = false;  // qualitative run; conservation is checked

  MonitorState state = initialize(mesh, ic_two_bumps(), cfg);
  const double theta0 = state.theta;
  LoopResult res = stepping_loop(std::move(mesh), state, ObstacleSet{}, cfg, hook, {},
                                 /*catch_degeneration=*/true);

  DemoReport rep;
  rep.mesh = std::move(res.mesh);
  rep.end_time = state.time;
  rep.steps = res.steps;
  rep.degenerated = res.degenerated;
  rep.termination = res.termination;
  rep.theta_drift = max_theta_drift(res.history, theta0);
  rep.history = std::move(res.history);
  experimentsdetail::tally_events(rep);
  rep.boundary_components = validate(rep.mesh).n_boundary_components;
  return rep;
}

// Seeded random round obstacles in the path of an expanding disc. Obstacles
// clear the initial support and each other; their polygon resolution follows
// the mesh size. Throws after too many rejected draws (overcrowded spec).
inline ObstacleSet random_round_obstacles(const DemoSpec& spec, double h_mean) {
  if (spec.n_obstacles < 0) throw ConfigError("obstacle count must be nonnegative");
  if (!(spec.obstacle_rmin > 0.0) || spec.obstacle_rmax < spec.obstacle_rmin)
    throw ConfigError("obstacle radius range is empty");
  Rng rng(spec.obstacle_seed);
  struct Disc {
    Point2 c;
    double r;
  };
  std::vector<Disc> placed;
  int attempts = 0;
  while (static_cast<int>(placed.size()) < spec.n_obstacles) {
    if (++attempts > 1000 * std::max(1, spec.n_obstacles))
      throw ConfigError("could not place the requested obstacles; relax the ranges");
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double cr = rng.uniform(spec.center_rmin, spec.center_rmax);
    const double r = rng.uniform(spec.obstacle_rmin, spec.obstacle_rmax);
    const Disc cand{{cr * std::cos(ang), cr * std::sin(ang)}, r};
    if (cr - r < 0.52) continue;  // clear of the initial support
    bool ok = true;
    for (const Disc& d : placed)
      if (dist(d.c, cand.c) < d.r + cand.r + 0.03) ok = false;
    if (!ok) continue;
    placed.push_back(cand);
  }
  ObstacleSet obs;
  for (const Disc& d : placed) {
    const int n_sides =
        std::max(16, static_cast<int>(std::ceil(2.0 * M_PI * d.r / std::max(h_mean, 1e-12))));
    obs.loops.push_back(circle_obstacle(d.c, d.r, n_sides));
  }
  return obs;
}

// Expanding disc meeting seeded random round obstacles: the front wraps the
// obstacles, inserting pivot nodes at their vertices and absorbing them again
// as boundary nodes take over the corners. Mesh degeneration terminates the
// run cleanly with the last valid mesh retained.
inline DemoReport run_obstacle_demo(const DemoSpec& spec, const SnapshotHook& hook = {},
                                    ObstacleSet* obstacles_out = nullptr) {
  const SimilarityParams params{};
  GenSpec g;
  g.kind = GenSpec::Kind::cvt;
  g.domain = GenSpec::Domain::disc;
  g.r0 = params.r0;
  g.target_cells = spec.target_cells;
  g.lloyd_iters = spec.lloyd_iters;
  g.rng_seed = spec.mesh_seed;
  PolyMesh mesh = generate(g);
  mesh.mesh_time = params.t0();

  const ObstacleSet obs = random_round_obstacles(spec, mean_cell_diameter(mesh));
  if (obstacles_out) *obstacles_out = obs;

  SimConfig cfg;
  cfg.m = params.m;
  cfg.dt_policy = SimConfig::DtPolicy::h_scaled;
  cfg.c_dt = spec.c_dt;
  cfg.interior_velocity = SimConfig::InteriorVelocity::harmonic;
  cfg.t_end = params.t0() + (spec.extra_time > 0.0 ? spec.extra_time : 0.2);
  cfg.output_every = spec.snapshot_every;
  cfg.abort_on_negative = false;  // qualitative run; conservation is checked

  MonitorState state = initialize(mesh, ic_similarity(params), cfg);
  const double theta0 = state.theta;
  LoopResult res = stepping_loop(std::move(mesh), state, obs, cfg, hook, {},
                                 /*catch_degeneration=*/true);

  DemoReport rep;
  rep.mesh = std::move(res.mesh);
  rep.end_time = state.time;
  rep.steps = res.steps;
  rep.degenerated = res.degenerated;
  rep.termination = res.termination;
  rep.theta_drift = max_theta_drift(res.history, theta0);
  rep.history = std::move(res.history);
  experimentsdetail::tally_events(rep);
  rep.boundary_components = validate(rep.mesh).n_boundary_components;
  return rep;
}

}  // namespace mmvem

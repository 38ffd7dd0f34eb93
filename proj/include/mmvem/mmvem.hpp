#pragma once
// Forward-Euler time stepper for the velocity-based moving-mesh scheme.
//
// One step is a strict pipeline on the current mesh: solve the mass-weighted
// potential problem, reconstruct the nodal velocity by a global L2
// projection of the potential gradient, optionally replace interior
// velocities with a harmonic extension of the boundary ones, form the
// monitor rate, then advance mesh and monitor together by the same
// contact-clipped increment and recover the density on the advanced mesh.
// The driver is single-threaded and deterministic.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mmvem/contact.hpp"
#include "mmvem/element.hpp"
#include "mmvem/errors.hpp"
#include "mmvem/geometry.hpp"
#include "mmvem/mesh.hpp"
#include "mmvem/pme.hpp"
#include "mmvem/solver.hpp"
#include "mmvem/state.hpp"

namespace mmvem {

struct SimConfig {
  double m = 1.0;  // nonlinearity exponent of the density flux, > 0

  // Step-size policy: a fixed increment, or one rescaled from the current
  // mean cell diameter so refinement studies shrink the step automatically.
  enum class DtPolicy { fixed, h_scaled };
  DtPolicy dt_policy = DtPolicy::h_scaled;
  double dt = 1e-4;           // fixed policy: the requested step
  double c_dt = 1.0 / 250.0;  // h_scaled policy: dt = c_dt * h_mean^2

  // ale propagates the monitor with its rate equation; direct freezes the
  // monitor between steps and recovers the density from it unchanged.
  enum class Recovery { ale, direct };
  Recovery recovery_mode = Recovery::ale;

  // lagrangian moves every node with the reconstructed velocity; harmonic
  // keeps boundary nodes Lagrangian but smooths the interior movement.
  enum class InteriorVelocity { lagrangian, harmonic };
  InteriorVelocity interior_velocity = InteriorVelocity::lagrangian;

  double t_end = 0.0625;
  int output_every = 0;  // snapshot cadence in steps; 0 emits only the final state

  bool abort_on_negative = true;      // stop when recovery undershoots zero
  double negative_density_tol = 1e-9; // undershoot allowance relative to max density
};

inline void validate_config(const SimConfig& c) {
  if (!(c.m > 0.0)) throw ConfigError("density exponent m must be positive");
  if (!(c.t_end > 0.0)) throw ConfigError("t_end must be positive");
  if (c.dt_policy == SimConfig::DtPolicy::fixed && !(c.dt > 0.0))
    throw ConfigError("fixed time step must be positive");
  if (c.dt_policy == SimConfig::DtPolicy::h_scaled && !(c.c_dt > 0.0))
    throw ConfigError("time step coefficient must be positive");
  if (c.output_every < 0) throw ConfigError("output cadence must be nonnegative");
  if (!(c.negative_density_tol >= 0.0))
    throw ConfigError("negative-density tolerance must be nonnegative");
}

// Nodal samples of the initial density, its weak monitor distribution, and
// the conserved total. Identically zero data has no mass to transport and is
// rejected.
inline MonitorState initialize(const PolyMesh& mesh, const DensityEvaluator& rho0,
                               const SimConfig& config) {
  validate_config(config);
  if (!rho0) throw ConfigError("initialize needs a density evaluator");
  MonitorState st;
  st.time = mesh.mesh_time;
  st.rho.resize(mesh.n_nodes());
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    const double val = rho0(mesh.coords[n]);
    if (!(val >= 0.0))
      throw ConfigError("initial density must be nonnegative and finite at every node");
    st.rho(n) = val;
  }
  st.mu = monitor_from_density(mesh, st.rho);
  st.theta = st.mu.sum();
  if (!(st.theta > 0.0))
    throw ConfigError("initial density is identically zero: nothing to evolve");
  return st;
}

namespace driverdetail {

// Element projections built once per step and shared by every stage that
// assembles on the pre-advance mesh.
struct CellCache {
  std::vector<ElementProjections> P;
  double h_mean = 0.0;
};

inline CellCache build_cell_cache(const PolyMesh& mesh) {
  CellCache cache;
  cache.P.resize(static_cast<std::size_t>(mesh.n_cells()));
  std::vector<Point2> verts;
  double diam_sum = 0.0;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    mesh.cell_coords(c, verts);
    auto& P = cache.P[static_cast<std::size_t>(c)];
    build_projections(verts, P);
    diam_sum += P.geom.diameter;
  }
  if (mesh.n_cells() > 0) cache.h_mean = diam_sum / static_cast<double>(mesh.n_cells());
  return cache;
}

inline void gather(const PolyMesh& mesh, idx c, const Eigen::VectorXd& field,
                   Eigen::VectorXd& out) {
  const auto cell = mesh.cell(c);
  out.resize(static_cast<Eigen::Index>(cell.size()));
  for (std::size_t i = 0; i < cell.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = field(cell[i]);
}

inline void gather(const PolyMesh& mesh, idx c, const std::vector<double>& field,
                   Eigen::VectorXd& out) {
  const auto cell = mesh.cell(c);
  out.resize(static_cast<Eigen::Index>(cell.size()));
  for (std::size_t i = 0; i < cell.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = field[static_cast<std::size_t>(cell[i])];
}

inline double min_cell_area(const PolyMesh& mesh) {
  double amin = std::numeric_limits<double>::infinity();
  std::vector<Point2> verts;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    mesh.cell_coords(c, verts);
    amin = std::min(amin, shoelace_area(verts));
  }
  return amin;
}

}  // namespace driverdetail

// Mass-weighted potential solve. The weak form carries the zero-flux
// boundary condition naturally, so no boundary rows are constrained here;
// the velocity constraints at contact are applied where the velocity itself
// is solved. The kernel contains the constants, so one node is pinned to fix
// the additive gauge: the lowest-index interior node whose row is nonempty,
// for determinism, falling back to any nonempty row and finally to node 0.
// Nodes whose every incident cell carries zero density have empty rows and
// are pinned to keep the system definite; if vacuum splits the support into
// several islands, islands beyond the gauged one keep a floating constant,
// which the velocity reconstruction cannot see.
inline Eigen::VectorXd solve_potential(const PolyMesh& mesh,
                                       const driverdetail::CellCache& cache,
                                       const Eigen::VectorXd& rho, double m,
                                       const Eigen::VectorXd* warm = nullptr,
                                       SolveReport* report = nullptr) {
  Eigen::VectorXd rho_e;
  GlobalSystem sys = assemble_scalar_system(
      mesh, [&](idx c, Eigen::MatrixXd& local, Eigen::VectorXd& rhs_local) {
        driverdetail::gather(mesh, c, rho, rho_e);
        local_potential_forms(cache.P[static_cast<std::size_t>(c)], rho_e, m, local, rhs_local);
      });
  idx gauge = -1;
  for (idx n = 0; n < mesh.n_nodes() && gauge < 0; ++n)
    if (mesh.node_class[n] == NodeClass::Interior && sys.matrix.coeff(n, n) != 0.0) gauge = n;
  for (idx n = 0; n < mesh.n_nodes() && gauge < 0; ++n)
    if (sys.matrix.coeff(n, n) != 0.0) gauge = n;
  if (gauge < 0) gauge = 0;
  pin_dof(sys, gauge, 0.0);
  for (idx n = 0; n < mesh.n_nodes(); ++n)
    if (n != gauge && sys.matrix.coeff(n, n) == 0.0) pin_dof(sys, n, 0.0);
  return solve_spd(sys, warm, report);
}

// Global L2 projection of the potential gradient onto the nodal velocity
// space, with tangential-only movement at obstacle contact and pinned pivot
// nodes.
inline VelocityField reconstruct_velocity(const PolyMesh& mesh,
                                          const driverdetail::CellCache& cache,
                                          const Eigen::VectorXd& phi,
                                          const ObstacleSet& obstacles,
                                          const Eigen::VectorXd* warm = nullptr,
                                          Eigen::VectorXd* interleaved = nullptr,
                                          SolveReport* report = nullptr) {
  Eigen::VectorXd phi_e;
  GlobalSystem sys = assemble_vector_system(
      mesh, [&](idx c, Eigen::MatrixXd& local, Eigen::MatrixXd& rhs_local) {
        const auto& P = cache.P[static_cast<std::size_t>(c)];
        local_velocity_mass(P, local);
        driverdetail::gather(mesh, c, phi, phi_e);
        local_velocity_coupling(P, phi_e, rhs_local);
      });
  for (const auto& [node, n_hat] : contact_normals(mesh, obstacles))
    constrain_normal(sys, node, n_hat);
  for (idx n = 0; n < mesh.n_nodes(); ++n)
    if (mesh.node_class[n] == NodeClass::Pivot) {
      pin_dof(sys, 2 * n, 0.0);
      pin_dof(sys, 2 * n + 1, 0.0);
    }
  Eigen::VectorXd u = solve_spd(sys, warm, report);
  VelocityField v;
  v.vx.resize(static_cast<std::size_t>(mesh.n_nodes()));
  v.vy.resize(static_cast<std::size_t>(mesh.n_nodes()));
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    v.vx[static_cast<std::size_t>(n)] = u(2 * n);
    v.vy[static_cast<std::size_t>(n)] = u(2 * n + 1);
  }
  if (interleaved != nullptr) *interleaved = std::move(u);
  return v;
}

// Harmonic interior smoothing: each velocity component is re-solved as a
// Laplace problem whose Dirichlet data is the boundary velocity, replacing
// interior node velocities only. Boundary nodes keep their Lagrangian
// values. A mesh without interior nodes is returned unchanged.
inline void harmonic_interior_velocity(const PolyMesh& mesh,
                                       const driverdetail::CellCache& cache, VelocityField& v) {
  bool has_interior = false;
  for (idx n = 0; n < mesh.n_nodes() && !has_interior; ++n)
    if (!mesh.node_on_boundary(n)) has_interior = true;
  if (!has_interior) return;

  ScalarAssembler as;
  as.bind(mesh.topo);
  as.begin();
  Eigen::MatrixXd local;
  Eigen::VectorXd ones, zero_rhs;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    const auto& P = cache.P[static_cast<std::size_t>(c)];
    ones = Eigen::VectorXd::Ones(P.n_dofs);
    local_potential_forms(P, ones, 1.0, local, zero_rhs);
    as.add(c, local);
  }
  const Eigen::SparseMatrix<double> laplace = as.matrix();

  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double>& field = comp == 0 ? v.vx : v.vy;
    GlobalSystem sys;
    sys.matrix = laplace;
    sys.rhs = Eigen::VectorXd::Zero(mesh.n_nodes());
    for (idx n = 0; n < mesh.n_nodes(); ++n)
      if (mesh.node_on_boundary(n)) pin_dof(sys, n, field[static_cast<std::size_t>(n)]);
    const Eigen::VectorXd u = solve_spd(sys);
    for (idx n = 0; n < mesh.n_nodes(); ++n)
      if (!mesh.node_on_boundary(n)) field[static_cast<std::size_t>(n)] = u(n);
  }
}

// Weak rate of the monitor distribution under the current density and mesh
// velocity. Scattering the element rates preserves the zero row sum that
// keeps the total mass constant.
inline Eigen::VectorXd monitor_rate(const PolyMesh& mesh, const driverdetail::CellCache& cache,
                                    const Eigen::VectorXd& rho, const VelocityField& v,
                                    double m) {
  Eigen::VectorXd mudot = Eigen::VectorXd::Zero(mesh.n_nodes());
  Eigen::VectorXd rho_e, vx_e, vy_e, mudot_e;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    driverdetail::gather(mesh, c, rho, rho_e);
    driverdetail::gather(mesh, c, v.vx, vx_e);
    driverdetail::gather(mesh, c, v.vy, vy_e);
    local_ale_update(cache.P[static_cast<std::size_t>(c)], rho_e, vx_e, vy_e, m, mudot_e);
    const auto cell = mesh.cell(c);
    for (std::size_t i = 0; i < cell.size(); ++i)
      mudot(cell[i]) += mudot_e(static_cast<Eigen::Index>(i));
  }
  return mudot;
}

struct StepDiagnostics {
  double time = 0.0;   // state time after the step
  double theta = 0.0;  // conserved total after the step
  double min_rho = 0.0;
  double max_rho = 0.0;
  double min_cell_area = 0.0;  // over the advanced mesh
  double dt_used = 0.0;        // actual increment after contact clipping
  std::vector<ContactEvent> events;
  std::vector<std::string> notes;
};

struct StepOutcome {
  PolyMesh mesh;
  StepDiagnostics diag;
};

// Warm-start storage carried between steps; reused only while the dof
// layout is unchanged.
struct StepScratch {
  Eigen::VectorXd phi;
  Eigen::VectorXd velocity;  // interleaved (x0, y0, x1, y1, ...)
};

// One forward-Euler step. Updates the state in place (time, monitor,
// recovered density, conserved total) and returns the advanced mesh plus the
// per-step diagnostics. dt_cap bounds the requested increment so a run can
// land exactly on its final time; contact detection may clip further.
inline StepOutcome step(const PolyMesh& mesh, MonitorState& state, const ObstacleSet& obstacles,
                        const SimConfig& config,
                        double dt_cap = std::numeric_limits<double>::infinity(),
                        StepScratch* scratch = nullptr) {
  validate_config(config);
  if (state.mu.size() != mesh.n_nodes() || state.rho.size() != mesh.n_nodes())
    throw SolverError("step: state size does not match the mesh");

  const driverdetail::CellCache cache = driverdetail::build_cell_cache(mesh);

  const Eigen::VectorXd* warm_phi =
      scratch != nullptr && scratch->phi.size() == mesh.n_nodes() ? &scratch->phi : nullptr;
  Eigen::VectorXd phi = solve_potential(mesh, cache, state.rho, config.m, warm_phi);
  if (scratch != nullptr) scratch->phi = phi;

  const Eigen::VectorXd* warm_v =
      scratch != nullptr && scratch->velocity.size() == 2 * mesh.n_nodes() ? &scratch->velocity
                                                                           : nullptr;
  Eigen::VectorXd interleaved;
  VelocityField v = reconstruct_velocity(mesh, cache, phi, obstacles, warm_v, &interleaved);
  if (scratch != nullptr) scratch->velocity = std::move(interleaved);

  if (config.interior_velocity == SimConfig::InteriorVelocity::harmonic)
    harmonic_interior_velocity(mesh, cache, v);

  Eigen::VectorXd mudot = config.recovery_mode == SimConfig::Recovery::ale
                              ? monitor_rate(mesh, cache, state.rho, v, config.m)
                              : Eigen::VectorXd::Zero(mesh.n_nodes());

  double dt = config.dt_policy == SimConfig::DtPolicy::fixed
                  ? config.dt
                  : config.c_dt * cache.h_mean * cache.h_mean;
  dt = std::min(dt, dt_cap);
  if (!(dt > 0.0)) throw ConfigError("requested time step is not positive");

  // An empty obstacle set has nothing to retag against; skipping the
  // obstacle pair kind keeps caller-chosen boundary classes intact.
  const bool with_obstacles = !obstacles.loops.empty();
  ContactOutcome adv =
      advance_with_contact(mesh, state, obstacles, v, dt, &mudot, true, with_obstacles);
  state.theta = state.mu.sum();

  validate(adv.mesh);  // a tangled mesh aborts the run

  StepOutcome out;
  out.mesh = std::move(adv.mesh);
  out.diag.time = state.time;
  out.diag.theta = state.theta;
  out.diag.min_rho = state.rho.size() > 0 ? state.rho.minCoeff() : 0.0;
  out.diag.max_rho = state.rho.size() > 0 ? state.rho.maxCoeff() : 0.0;
  out.diag.min_cell_area = driverdetail::min_cell_area(out.mesh);
  out.diag.dt_used = adv.dt_used;
  out.diag.events = std::move(adv.events);

  if (out.diag.min_rho < -config.negative_density_tol * std::max(1.0, out.diag.max_rho)) {
    const std::string msg = "recovered density is negative (min " +
                            std::to_string(out.diag.min_rho) + " at t = " +
                            std::to_string(state.time) + ")";
    out.diag.notes.push_back(msg);
    if (config.abort_on_negative) throw SolverError(msg);
  }
  return out;
}

// Snapshot hook: step index, advanced mesh, state, per-step diagnostics.
using SnapshotHook =
    std::function<void(int, const PolyMesh&, const MonitorState&, const StepDiagnostics&)>;

struct RunResult {
  PolyMesh mesh;
  std::vector<StepDiagnostics> history;
};

// Steps from the state's current time to t_end, landing on it exactly. The
// hook fires every output_every steps (when positive) and always for the
// final step. A long sequence of contact-clipped empty steps aborts rather
// than looping forever.
inline RunResult run(const PolyMesh& mesh, MonitorState& state, const ObstacleSet& obstacles,
                     const SimConfig& config, const SnapshotHook& on_output = {}) {
  validate_config(config);
  RunResult out{mesh, {}};
  StepScratch scratch;
  int step_index = 0;
  int empty_steps = 0;
  const double horizon = config.t_end;
  const double t_tol = 1e-12 * std::max(1.0, std::abs(horizon));
  while (state.time < horizon - t_tol) {
    StepOutcome so = step(out.mesh, state, obstacles, config, horizon - state.time, &scratch);
    out.mesh = std::move(so.mesh);
    ++step_index;
    if (so.diag.dt_used <= t_tol) {
      if (++empty_steps >= 100)
        throw ContactError("time stepping stalled: contact clipping produced 100 empty steps");
    } else {
      empty_steps = 0;
    }
    const bool final_step = !(state.time < horizon - t_tol);
    if (on_output && (final_step || (config.output_every > 0 &&
                                     step_index % config.output_every == 0)))
      on_output(step_index, out.mesh, state, so.diag);
    out.history.push_back(std::move(so.diag));
  }
  return out;
}

// Closed-form reference profile sampled at the mesh nodes; the radius is
// |y| for the band family (d = 1) and the planar distance otherwise.
inline Eigen::VectorXd exact_similarity_reference(double t, const PolyMesh& mesh,
                                                  const SimilarityParams& params) {
  Eigen::VectorXd out(mesh.n_nodes());
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    const Point2 x = mesh.coords[n];
    const double r = params.d == 1 ? std::abs(x.y) : std::hypot(x.x, x.y);
    out(n) = similarity(r, t, params);
  }
  return out;
}

}  // namespace mmvem

#pragma once
// Conserved monitor state shared by the time stepper and topology edits.
//
// The nodal monitor entries mu_i are the conserved quantities: their sum is
// the total mass theta, and every mesh edit must leave that sum unchanged.
// The density dofs rho are derived data, recovered from mu through the
// solution mass matrix on whatever mesh is current.

#include <mmvem/element.hpp>
#include <mmvem/mesh.hpp>
#include <mmvem/solver.hpp>

namespace mmvem {

struct MonitorState {
  Eigen::VectorXd mu;   // nodal monitor entries; mu.sum() is the conserved mass
  Eigen::VectorXd rho;  // density dofs recovered from mu on the current mesh
  double theta = 0.0;   // conserved total, maintained equal to mu.sum()
  double time = 0.0;
};

// Assembles the global solution mass matrix (consistency plus stabilization).
inline Eigen::SparseMatrix<double> assemble_solution_mass(const PolyMesh& mesh) {
  ScalarAssembler as;
  as.bind(mesh.topo);
  as.begin();
  std::vector<Point2> verts;
  ElementProjections P;
  Eigen::MatrixXd local;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    mesh.cell_coords(c, verts);
    build_projections(verts, P);
    local_solution_mass(P, local);
    as.add(c, local);
  }
  return as.matrix();
}

// Monitor entries of a nodal density field: mu = M_consistency * rho summed
// per element. Used at startup and as the reference in conservation tests.
inline Eigen::VectorXd monitor_from_density(const PolyMesh& mesh, const Eigen::VectorXd& rho) {
  if (rho.size() != mesh.n_nodes()) throw SolverError("monitor_from_density: size mismatch");
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(mesh.n_nodes());
  std::vector<Point2> verts;
  ElementProjections P;
  Eigen::VectorXd rho_e, mu_e;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    mesh.cell_coords(c, verts);
    build_projections(verts, P);
    const auto cell = mesh.cell(c);
    rho_e.resize(static_cast<Eigen::Index>(cell.size()));
    for (std::size_t i = 0; i < cell.size(); ++i) rho_e(static_cast<Eigen::Index>(i)) = rho(cell[i]);
    local_monitor_init(P, rho_e, mu_e);
    for (std::size_t i = 0; i < cell.size(); ++i) mu(cell[i]) += mu_e(static_cast<Eigen::Index>(i));
  }
  return mu;
}

// Density recovery: solve M rho = mu. Free-boundary nodes carry the zero
// contact-set value and are pinned; dofs with an empty mass row (nodes not
// referenced by any cell) are pinned to zero so the system stays definite.
// Interface and pivot nodes are left free.
inline Eigen::VectorXd recover_density(const PolyMesh& mesh, const Eigen::VectorXd& mu,
                                       const Eigen::VectorXd* warm = nullptr,
                                       SolveReport* report = nullptr) {
  if (mu.size() != mesh.n_nodes()) throw SolverError("recover_density: size mismatch");
  GlobalSystem sys;
  sys.matrix = assemble_solution_mass(mesh);
  sys.rhs = mu;
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    if (mesh.node_class[n] == NodeClass::MovingBoundary)
      pin_dof(sys, n, 0.0);
    else if (sys.matrix.coeff(n, n) == 0.0)
      pin_dof(sys, n, 0.0);
  }
  return solve_spd(sys, warm, report);
}

} // namespace mmvem

#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "mmvem/errors.hpp"
#include "mmvem/geometry.hpp"

namespace mmvem {

// Projection machinery for one lowest-order element with vertex dofs.
// Eigen members are refilled in place by build_projections, so a buffer
// reused across elements of equal size does not reallocate.
struct ElementProjections {
  int n_dofs = 0;
  PolygonGeom geom;
  MonomialIntegrals moments;
  Eigen::Matrix3d Q;        // mass matrix of the scaled monomials 1, xi, eta
  Eigen::MatrixXd D;        // n_dofs x 3, monomial values at the vertices
  Eigen::MatrixXd B_nabla;  // 3 x n_dofs, right side of the gradient projection
  Eigen::MatrixXd PiN_star; // 3 x n_dofs, projection onto linears, monomial basis
  Eigen::MatrixXd PiN;      // n_dofs x n_dofs, same projection in dof space
  Eigen::MatrixXd Pi0_grad; // 2 x n_dofs, constant gradient of the projection
  Eigen::MatrixXd stab;     // (I - PiN)^T (I - PiN)
  Eigen::MatrixXd H;        // consistency mass, PiN_star^T Q PiN_star
  Eigen::VectorXd int_phi;  // integrals of the projected basis functions
};

// Gradient projections reduce to edge sums because the trace of every shape
// function is linear per edge, so the trapezoid rule on each edge is exact.
// The constant part is fixed by matching the boundary mean.
inline void build_projections(std::span<const Point2> verts, ElementProjections& P) {
  polygon_geom(verts, P.geom);
  P.moments = monomial_integrals(verts, P.geom.centroid, P.geom.diameter);

  const int m = static_cast<int>(verts.size());
  P.n_dofs = m;
  const double h = P.geom.diameter;
  const double area = P.geom.area;

  P.Q << P.moments.one, P.moments.xi, P.moments.eta,
      P.moments.xi, P.moments.xi2, P.moments.xieta,
      P.moments.eta, P.moments.xieta, P.moments.eta2;

  P.D.resize(m, 3);
  for (int i = 0; i < m; ++i) {
    P.D(i, 0) = 1.0;
    P.D(i, 1) = (verts[i].x - P.geom.centroid.x) / h;
    P.D(i, 2) = (verts[i].y - P.geom.centroid.y) / h;
  }

  P.B_nabla.resize(3, m);
  P.Pi0_grad.resize(2, m);
  for (int i = 0; i < m; ++i) {
    const int prev = (i + m - 1) % m;
    const double wx = 0.5 * (P.geom.edge_len[prev] * P.geom.edge_normal[prev].x +
                             P.geom.edge_len[i] * P.geom.edge_normal[i].x);
    const double wy = 0.5 * (P.geom.edge_len[prev] * P.geom.edge_normal[prev].y +
                             P.geom.edge_len[i] * P.geom.edge_normal[i].y);
    P.B_nabla(0, i) = (P.geom.edge_len[prev] + P.geom.edge_len[i]) / (2.0 * P.geom.perimeter);
    P.B_nabla(1, i) = wx / h;
    P.B_nabla(2, i) = wy / h;
    P.Pi0_grad(0, i) = wx / area;
    P.Pi0_grad(1, i) = wy / area;
  }

  const Eigen::Matrix3d G = P.B_nabla * P.D;
  P.PiN_star = G.partialPivLu().solve(P.B_nabla);
  P.PiN.noalias() = P.D * P.PiN_star;

  Eigen::MatrixXd comp = -P.PiN;
  comp.diagonal().array() += 1.0;
  P.stab.noalias() = comp.transpose() * comp;
  P.H.noalias() = P.PiN_star.transpose() * (P.Q * P.PiN_star);
  P.int_phi.noalias() =
      P.PiN_star.transpose() * Eigen::Vector3d(P.moments.one, P.moments.xi, P.moments.eta);
}

inline ElementProjections build_projections(std::span<const Point2> verts) {
  ElementProjections P;
  build_projections(verts, P);
  return P;
}

// Constant coefficient of the projection of a dof vector; equals the value of
// the projected linear at the centroid.
inline double projected_constant(const ElementProjections& P, const Eigen::VectorXd& dofs) {
  return P.PiN_star.row(0).dot(dofs);
}

// rho0^e with vacuum conventions: 0^0 = 1, 0^positive = 0, 0^negative is an
// error because the update has no finite value there.
inline double vacuum_pow(double rho0, double e) {
  if (rho0 > 0.0) return std::pow(rho0, e);
  if (e == 0.0) return 1.0;
  if (e > 0.0) return 0.0;
  throw VemError("density exponent " + std::to_string(e) +
                 " is undefined on a vacuum element");
}

// Stiffness-like form and load for the velocity potential. Returns the
// projected constant density so callers can flag vacuum elements.
inline double local_potential_forms(const ElementProjections& P, const Eigen::VectorXd& rho,
                                    double m, Eigen::MatrixXd& A, Eigen::VectorXd& l) {
  double rho0 = projected_constant(P, rho);
  const double scale = std::max(1.0, rho.size() > 0 ? rho.cwiseAbs().maxCoeff() : 0.0);
  if (rho0 < -1e-12 * scale)
    throw VemError("projected density " + std::to_string(rho0) + " is negative");
  rho0 = std::max(rho0, 0.0);

  const auto& g = P.Pi0_grad;
  A.noalias() = rho0 * P.geom.area * (g.transpose() * g);
  A += rho0 * P.stab;
  const Eigen::Vector2d grho = g * rho;
  l.noalias() = (-std::pow(rho0, m) * P.geom.area) * (g.transpose() * grho);
  return rho0;
}

inline void local_velocity_mass(const ElementProjections& P, Eigen::MatrixXd& M) {
  M = P.H;
  M += P.geom.area * P.stab;
}

// Coupling block: integral of each projected basis function against the
// constant gradient of phi, one column per gradient component.
inline void local_velocity_coupling(const ElementProjections& P, const Eigen::VectorXd& phi,
                                    Eigen::MatrixXd& b) {
  const Eigen::Vector2d gphi = P.Pi0_grad * phi;
  b.noalias() = P.int_phi * gphi.transpose();
}

inline void local_solution_mass(const ElementProjections& P, Eigen::MatrixXd& M) {
  local_velocity_mass(P, M);
}

// Monitor initialization carries no stabilization term.
inline void local_monitor_init(const ElementProjections& P, const Eigen::VectorXd& rho,
                               Eigen::VectorXd& mu) {
  mu.noalias() = P.H * rho;
}

// Rate of the per-dof monitor under the moving mesh. All factors are
// projected fields, so the element integrals are exact monomial moments.
inline void local_ale_update(const ElementProjections& P, const Eigen::VectorXd& rho,
                             const Eigen::VectorXd& vx, const Eigen::VectorXd& vy, double m,
                             Eigen::VectorXd& mudot) {
  const Eigen::Vector3d a = P.PiN_star * rho;
  const double rho0 = std::max(a(0), 0.0);
  const Eigen::Vector2d z0 = vacuum_pow(rho0, m - 1.0) * (P.Pi0_grad * rho);

  const Eigen::Vector3d bx = P.PiN_star * vx;
  const Eigen::Vector3d by = P.PiN_star * vy;
  const Eigen::Vector3d intm(P.moments.one, P.moments.xi, P.moments.eta);
  const double int_rho = a.dot(intm);
  const double cx = a.dot(P.Q * bx);
  const double cy = a.dot(P.Q * by);

  mudot.resize(P.n_dofs);
  for (int i = 0; i < P.n_dofs; ++i)
    mudot(i) = -(P.Pi0_grad(0, i) * (z0.x() * int_rho + cx) +
                 P.Pi0_grad(1, i) * (z0.y() * int_rho + cy));
}

// All element-local forms in one bundle, mainly for tests and diagnostics;
// the time stepper calls the individual builders stage by stage.
struct LocalForms {
  Eigen::MatrixXd A_E;
  Eigen::VectorXd l_E;
  Eigen::MatrixXd M_E_mass;
  Eigen::MatrixXd b_E;
  Eigen::MatrixXd m_E_mass;
  Eigen::VectorXd mu_E;
  Eigen::VectorXd mudot_E;
};

inline LocalForms build_local_forms(const ElementProjections& P, const Eigen::VectorXd& rho,
                                    const Eigen::VectorXd& phi, const Eigen::VectorXd& vx,
                                    const Eigen::VectorXd& vy, double m) {
  LocalForms f;
  local_potential_forms(P, rho, m, f.A_E, f.l_E);
  local_velocity_mass(P, f.M_E_mass);
  local_velocity_coupling(P, phi, f.b_E);
  local_solution_mass(P, f.m_E_mass);
  local_monitor_init(P, rho, f.mu_E);
  local_ale_update(P, rho, vx, vy, m, f.mudot_E);
  return f;
}

} // namespace mmvem

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mmvem/errors.hpp"
#include "mmvem/geometry.hpp"
#include "mmvem/mesh.hpp"

namespace mmvem {

// Radially symmetric compactly supported solution family of the porous
// medium equation; the support is a disc (d = 2) or band (d = 1) whose
// radius grows like lambda(t).
struct SimilarityParams {
  double m = 1.0;
  int d = 2;
  double r0 = 0.5;

  double t0() const { return r0 * r0 * m / (2.0 * (2.0 + d * m)); }
  double lambda(double t) const { return std::pow(t / t0(), 1.0 / (2.0 + d * m)); }
};

inline double boundary_radius(double t, const SimilarityParams& p) {
  return p.r0 * p.lambda(std::max(t, p.t0()));
}

inline double boundary_speed(double t, const SimilarityParams& p) {
  t = std::max(t, p.t0());
  return p.r0 * p.lambda(t) / ((2.0 + p.d * p.m) * t);
}

inline double similarity(double r, double t, const SimilarityParams& p) {
  t = std::max(t, p.t0()); // tolerate rounding just below the reference time
  const double lam = p.lambda(t);
  const double s = r / (p.r0 * lam);
  if (s >= 1.0) return 0.0;
  return std::pow(1.0 - s * s, 1.0 / p.m) / std::pow(lam, p.d);
}

using DensityEvaluator = std::function<double(Point2)>;

// Disc profile at the reference time of the similarity family.
inline DensityEvaluator ic_similarity(SimilarityParams p = {}) {
  return [p](Point2 x) { return similarity(std::hypot(x.x, x.y), p.t0(), p); };
}

// Band profile 1 - 4y^2 on [-0.5, 0.5]^2; evolves one-dimensionally in y.
inline DensityEvaluator ic_1d_type() {
  return [](Point2 x) { return std::max(0.0, 1.0 - 4.0 * x.y * x.y); };
}

// Two compact parabolic bumps of radius 1/2 centered at (-0.8, 0), (0.8, 0).
inline DensityEvaluator ic_two_bumps() {
  return [](Point2 x) {
    const double r1 = std::hypot(x.x + 0.8, x.y);
    const double r2 = std::hypot(x.x - 0.8, x.y);
    const double b1 = 1.0 - 4.0 * r1 * r1;
    const double b2 = 1.0 - 4.0 * r2 * r2;
    return std::max(0.0, std::max(b1, b2));
  };
}

// Mean absolute nodal difference.
inline double sol_error(const Eigen::VectorXd& rho_h, const Eigen::VectorXd& rho_exact) {
  if (rho_h.size() != rho_exact.size())
    throw Error("solution error needs equally sized dof vectors");
  if (rho_h.size() == 0) return 0.0;
  return (rho_h - rho_exact).lpNorm<1>() / static_cast<double>(rho_h.size());
}

enum class MeshErrorKind {
  radial,       // distance of boundary nodes from the exact free-boundary circle
  vertical_band // 1d variant: |y| against the band half-width, side faces excluded
};

inline double mesh_error(const PolyMesh& mesh, double t, const SimilarityParams& p,
                         MeshErrorKind kind = MeshErrorKind::radial) {
  const double rb = boundary_radius(t, p);
  double sum = 0.0;
  int count = 0;
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    if (!mesh.node_on_boundary(n)) continue;
    const Point2 x = mesh.coords[n];
    if (kind == MeshErrorKind::vertical_band) {
      if (std::abs(x.x) >= 0.5 - 1e-9) continue; // node rides a fixed side face
      sum += std::abs(std::abs(x.y) - rb);
    } else {
      sum += std::abs(std::hypot(x.x, x.y) - rb);
    }
    ++count;
  }
  if (count == 0) throw Error("mesh error has no boundary nodes to compare");
  return sum / count;
}

// Empirical order of convergence between consecutive refinement levels.
inline std::vector<double> eoc(const std::vector<double>& errors,
                               const std::vector<double>& h_values) {
  if (errors.size() != h_values.size() || errors.size() < 2)
    throw Error("order computation needs matching error/size sequences of length >= 2");
  std::vector<double> rates;
  for (std::size_t k = 0; k + 1 < errors.size(); ++k) {
    if (!(h_values[k] > h_values[k + 1]) || h_values[k + 1] <= 0.0)
      throw Error("mesh sizes must decrease");
    if (errors[k] < 0.0 || errors[k + 1] < 0.0) throw Error("errors must be nonnegative");
    if (errors[k] == 0.0 || errors[k + 1] == 0.0) {
      rates.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    rates.push_back(std::log(errors[k] / errors[k + 1]) /
                    std::log(h_values[k] / h_values[k + 1]));
  }
  return rates;
}

} // namespace mmvem

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/IterativeLinearSolvers>

#include "mmvem/errors.hpp"
#include "mmvem/mesh.hpp"

namespace mmvem {

namespace detail {

inline std::ptrdiff_t csc_pos(const Eigen::SparseMatrix<double>& m, idx row, idx col) {
  const auto* inner = m.innerIndexPtr();
  const auto* outer = m.outerIndexPtr();
  const auto* it = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
  return it - inner;
}

} // namespace detail

// Sparse scatter-add assembler for one node-indexed scalar system. The
// sparsity pattern and per-cell value slots are computed once per topology,
// so repeated assemblies only overwrite the value array.
class ScalarAssembler {
public:
  void bind(std::shared_ptr<const MeshTopology> topo) {
    topo_ = std::move(topo);
    const idx nc = topo_->n_cells();
    std::vector<Eigen::Triplet<double>> trips;
    std::size_t total = 0;
    for (idx c = 0; c < nc; ++c) {
      const std::size_t k = topo_->cell(c).size();
      total += k * k;
    }
    trips.reserve(total);
    for (idx c = 0; c < nc; ++c) {
      const auto cell = topo_->cell(c);
      for (idx a : cell)
        for (idx b : cell) trips.emplace_back(a, b, 0.0);
    }
    mat_.resize(topo_->n_nodes, topo_->n_nodes);
    mat_.setFromTriplets(trips.begin(), trips.end());
    mat_.makeCompressed();

    offs_.assign(nc + 1, 0);
    slots_.resize(total);
    std::size_t at = 0;
    for (idx c = 0; c < nc; ++c) {
      const auto cell = topo_->cell(c);
      offs_[c] = static_cast<std::ptrdiff_t>(at);
      for (idx a : cell)
        for (idx b : cell) slots_[at++] = detail::csc_pos(mat_, a, b);
    }
    offs_[nc] = static_cast<std::ptrdiff_t>(at);
  }

  bool bound_to(const MeshTopology* topo) const { return topo_.get() == topo; }

  void begin() {
    std::fill(mat_.valuePtr(), mat_.valuePtr() + mat_.nonZeros(), 0.0);
  }

  void add(idx cell, const Eigen::MatrixXd& local) {
    const std::size_t k = topo_->cell(cell).size();
    double* v = mat_.valuePtr();
    const std::ptrdiff_t* s = slots_.data() + offs_[cell];
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        v[s[i * k + j]] += local(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  const Eigen::SparseMatrix<double>& matrix() const { return mat_; }

private:
  std::shared_ptr<const MeshTopology> topo_;
  Eigen::SparseMatrix<double> mat_;
  std::vector<std::ptrdiff_t> slots_;
  std::vector<std::ptrdiff_t> offs_;
};

// Interleaved (x0, y0, x1, y1, ...) assembler for vector mass systems. The
// pattern keeps the full 2x2 block per node pair so later in-place rotations
// at constrained nodes never change the structure. Local matrices act
// per component, so one scalar local matrix feeds both diagonal sub-blocks.
class VectorAssembler {
public:
  void bind(std::shared_ptr<const MeshTopology> topo) {
    topo_ = std::move(topo);
    const idx nc = topo_->n_cells();
    std::vector<Eigen::Triplet<double>> trips;
    std::size_t total = 0;
    for (idx c = 0; c < nc; ++c) {
      const std::size_t k = topo_->cell(c).size();
      total += k * k;
    }
    trips.reserve(4 * total);
    for (idx c = 0; c < nc; ++c) {
      const auto cell = topo_->cell(c);
      for (idx a : cell)
        for (idx b : cell)
          for (int da = 0; da < 2; ++da)
            for (int db = 0; db < 2; ++db) trips.emplace_back(2 * a + da, 2 * b + db, 0.0);
    }
    mat_.resize(2 * topo_->n_nodes, 2 * topo_->n_nodes);
    mat_.setFromTriplets(trips.begin(), trips.end());
    mat_.makeCompressed();

    offs_.assign(nc + 1, 0);
    slots_.resize(2 * total);
    std::size_t at = 0;
    for (idx c = 0; c < nc; ++c) {
      const auto cell = topo_->cell(c);
      offs_[c] = static_cast<std::ptrdiff_t>(at);
      for (idx a : cell)
        for (idx b : cell) {
          // rows 2a and 2a+1 sit next to each other inside both columns
          slots_[at++] = detail::csc_pos(mat_, 2 * a, 2 * b);
          slots_[at++] = detail::csc_pos(mat_, 2 * a, 2 * b + 1);
        }
    }
    offs_[nc] = static_cast<std::ptrdiff_t>(at);
  }

  bool bound_to(const MeshTopology* topo) const { return topo_.get() == topo; }

  void begin() {
    std::fill(mat_.valuePtr(), mat_.valuePtr() + mat_.nonZeros(), 0.0);
  }

  void add(idx cell, const Eigen::MatrixXd& local_scalar) {
    const std::size_t k = topo_->cell(cell).size();
    double* v = mat_.valuePtr();
    const std::ptrdiff_t* s = slots_.data() + offs_[cell];
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double m = local_scalar(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        const std::ptrdiff_t* p = s + 2 * (i * k + j);
        v[p[0]] += m;     // (2i,   2j)
        v[p[1] + 1] += m; // (2i+1, 2j+1)
      }
  }

  // Copy an already assembled scalar matrix with the matching pattern into
  // the two diagonal sub-blocks.
  void from_scalar(const Eigen::SparseMatrix<double>& s) {
    if (s.nonZeros() * 4 != mat_.nonZeros() || s.rows() * 2 != mat_.rows())
      throw SolverError("scalar matrix pattern does not match the vector pattern");
    begin();
    const auto* souter = s.outerIndexPtr();
    const auto* sval = s.valuePtr();
    const auto* vouter = mat_.outerIndexPtr();
    double* vval = mat_.valuePtr();
    for (idx j = 0; j < s.cols(); ++j)
      for (auto p = souter[j]; p < souter[j + 1]; ++p) {
        const auto q = p - souter[j];
        vval[vouter[2 * j] + 2 * q] = sval[p];
        vval[vouter[2 * j + 1] + 2 * q + 1] = sval[p];
      }
  }

  const Eigen::SparseMatrix<double>& matrix() const { return mat_; }

private:
  std::shared_ptr<const MeshTopology> topo_;
  Eigen::SparseMatrix<double> mat_;
  std::vector<std::ptrdiff_t> slots_;
  std::vector<std::ptrdiff_t> offs_;
};

// One symmetric system plus the constraints to apply before solving.
// Constraints are recorded here and resolved in apply_constraints, so
// conflicting normals at one node can be detected across calls.
struct GlobalSystem {
  Eigen::SparseMatrix<double> matrix;
  Eigen::VectorXd rhs;
  bool vector_field = false;
  std::vector<std::pair<idx, double>> pins;
  std::vector<std::pair<idx, Eigen::Vector2d>> normals;
};

inline GlobalSystem assemble_scalar_system(
    const PolyMesh& mesh,
    const std::function<void(idx, Eigen::MatrixXd&, Eigen::VectorXd&)>& provider) {
  ScalarAssembler as;
  as.bind(mesh.topo);
  as.begin();
  GlobalSystem sys;
  sys.rhs = Eigen::VectorXd::Zero(mesh.n_nodes());
  Eigen::MatrixXd local;
  Eigen::VectorXd rhs_local;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    provider(c, local, rhs_local);
    as.add(c, local);
    const auto cell = mesh.cell(c);
    for (std::size_t i = 0; i < cell.size(); ++i)
      sys.rhs(cell[i]) += rhs_local(static_cast<Eigen::Index>(i));
  }
  sys.matrix = as.matrix();
  return sys;
}

inline GlobalSystem assemble_vector_system(
    const PolyMesh& mesh,
    const std::function<void(idx, Eigen::MatrixXd&, Eigen::MatrixXd&)>& provider) {
  VectorAssembler as;
  as.bind(mesh.topo);
  as.begin();
  GlobalSystem sys;
  sys.vector_field = true;
  sys.rhs = Eigen::VectorXd::Zero(2 * mesh.n_nodes());
  Eigen::MatrixXd local, rhs_local;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    provider(c, local, rhs_local);
    as.add(c, local);
    const auto cell = mesh.cell(c);
    for (std::size_t i = 0; i < cell.size(); ++i) {
      sys.rhs(2 * cell[i]) += rhs_local(static_cast<Eigen::Index>(i), 0);
      sys.rhs(2 * cell[i] + 1) += rhs_local(static_cast<Eigen::Index>(i), 1);
    }
  }
  sys.matrix = as.matrix();
  return sys;
}

inline void pin_dof(GlobalSystem& sys, idx dof, double value) {
  if (dof < 0 || dof >= sys.matrix.rows()) throw SolverError("pinned dof out of range");
  sys.pins.emplace_back(dof, value);
}

inline void constrain_normal(GlobalSystem& sys, idx node, Point2 n_hat) {
  if (!sys.vector_field)
    throw SolverError("normal constraints apply to vector systems only");
  if (2 * node + 1 >= sys.matrix.rows()) throw SolverError("constrained node out of range");
  const double len = std::hypot(n_hat.x, n_hat.y);
  if (std::abs(len - 1.0) > 1e-9)
    throw SolverError("normal constraint direction is not a unit vector");
  sys.normals.emplace_back(node, Eigen::Vector2d(n_hat.x / len, n_hat.y / len));
}

// Record of what apply_constraints did; needed to map the solution of the
// modified system back to the original coordinates.
struct AppliedConstraints {
  std::vector<std::pair<idx, Eigen::Matrix2d>> rotations; // local -> global per node
  std::vector<std::pair<idx, double>> pinned;             // final dof pins
  std::vector<std::string> notes;
};

namespace detail {

// In-place congruence transform of the two dofs of `node` by the rotation
// with columns (normal, tangent). Pattern already holds full 2x2 blocks.
inline void rotate_node(Eigen::SparseMatrix<double>& A, Eigen::VectorXd& rhs, idx node,
                        const Eigen::Matrix2d& R) {
  const idx c0 = 2 * node, c1 = 2 * node + 1;
  std::vector<idx> touched;

  // columns: [a0 a1] <- [a0 a1] R
  {
    auto i0 = Eigen::SparseMatrix<double>::InnerIterator(A, c0);
    auto i1 = Eigen::SparseMatrix<double>::InnerIterator(A, c1);
    for (; i0 && i1; ++i0, ++i1) {
      touched.push_back(static_cast<idx>(i0.row()));
      const double a0 = i0.value(), a1 = i1.value();
      i0.valueRef() = a0 * R(0, 0) + a1 * R(1, 0);
      i1.valueRef() = a0 * R(0, 1) + a1 * R(1, 1);
    }
  }

  // rows: symmetric counterpart through the stored column entries
  for (idx r : touched) {
    double& e0 = A.coeffRef(c0, r);
    double& e1 = A.coeffRef(c1, r);
    const double a0 = e0, a1 = e1;
    e0 = R(0, 0) * a0 + R(1, 0) * a1;
    e1 = R(0, 1) * a0 + R(1, 1) * a1;
  }

  const double b0 = rhs(c0), b1 = rhs(c1);
  rhs(c0) = R(0, 0) * b0 + R(1, 0) * b1;
  rhs(c1) = R(0, 1) * b0 + R(1, 1) * b1;
}

// Symmetric row/column elimination of one dof.
inline void eliminate_dof(Eigen::SparseMatrix<double>& A, Eigen::VectorXd& rhs, idx dof,
                          double value) {
  for (Eigen::SparseMatrix<double>::InnerIterator it(A, dof); it; ++it) {
    if (it.row() == dof) continue;
    rhs(it.row()) -= it.value() * value;
    it.valueRef() = 0.0;
    A.coeffRef(dof, it.row()) = 0.0;
  }
  A.coeffRef(dof, dof) = 1.0;
  rhs(dof) = value;
}

} // namespace detail

inline AppliedConstraints apply_constraints(GlobalSystem& sys) {
  AppliedConstraints out;

  // group recorded normals per node; parallel repeats collapse, genuine
  // conflicts (a corner touching two walls) pin the node completely
  std::vector<std::pair<idx, Eigen::Vector2d>> grouped;
  std::vector<idx> fully_pinned_nodes;
  for (const auto& [node, n] : sys.normals) {
    bool handled = false;
    for (auto& [gnode, gn] : grouped) {
      if (gnode != node) continue;
      handled = true;
      if (std::abs(n.x() * gn.y() - n.y() * gn.x()) > 1e-9) {
        fully_pinned_nodes.push_back(node);
        out.notes.push_back("node " + std::to_string(node) +
                            ": conflicting contact normals, velocity pinned to zero");
      }
      break;
    }
    if (!handled) grouped.emplace_back(node, n);
  }

  for (const auto& [node, n] : grouped) {
    if (std::find(fully_pinned_nodes.begin(), fully_pinned_nodes.end(), node) !=
        fully_pinned_nodes.end())
      continue;
    Eigen::Matrix2d R;
    R << n.x(), -n.y(), n.y(), n.x();
    detail::rotate_node(sys.matrix, sys.rhs, node, R);
    out.rotations.emplace_back(node, R);
    out.pinned.emplace_back(2 * node, 0.0); // normal component in local coordinates
  }
  for (idx node : fully_pinned_nodes) {
    out.pinned.emplace_back(2 * node, 0.0);
    out.pinned.emplace_back(2 * node + 1, 0.0);
  }
  for (const auto& pin : sys.pins) out.pinned.push_back(pin);

  for (const auto& [dof, value] : out.pinned)
    detail::eliminate_dof(sys.matrix, sys.rhs, dof, value);

  sys.normals.clear();
  sys.pins.clear();
  return out;
}

struct SolveReport {
  int iterations = 0;
  double residual = 0.0;
  bool direct = false;
  std::vector<std::string> notes;
};

// Applies pending constraints, solves the SPD system, and returns the
// solution in original coordinates. Iterative solve with a direct fallback;
// both paths are deterministic for fixed inputs.
inline Eigen::VectorXd solve_spd(GlobalSystem& sys, const Eigen::VectorXd* warm = nullptr,
                                 SolveReport* report = nullptr) {
  const AppliedConstraints applied = apply_constraints(sys);
  const Eigen::Index n = sys.matrix.rows();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const double bnorm = sys.rhs.norm();

  auto acceptable = [&](const Eigen::VectorXd& cand, double& res) {
    res = (sys.matrix * cand - sys.rhs).norm();
    return res <= 1e-12 || (bnorm > 0.0 && res / bnorm <= 1e-10);
  };

  double res = 0.0;
  if (bnorm == 0.0) {
    // homogeneous constrained system: zero plus the pinned values
    for (const auto& [dof, value] : applied.pinned) x(dof) = value;
    if (!acceptable(x, res)) throw SolverError("homogeneous solve inconsistent");
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setMaxIterations(10 * n);
    cg.setTolerance(std::max(1e-15, std::min(1e-11, 1e-12 / bnorm)));
    cg.compute(sys.matrix);
    if (warm != nullptr && warm->size() == n)
      x = cg.solveWithGuess(sys.rhs, *warm);
    else
      x = cg.solve(sys.rhs);
    if (report != nullptr) report->iterations = static_cast<int>(cg.iterations());
    if (!acceptable(x, res)) {
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(sys.matrix);
      bool ok = ldlt.info() == Eigen::Success;
      if (ok) {
        x = ldlt.solve(sys.rhs);
        ok = acceptable(x, res);
      }
      if (!ok)
        throw SolverError("linear solve failed, residual " + std::to_string(res) +
                          " for rhs norm " + std::to_string(bnorm));
      if (report != nullptr) report->direct = true;
    }
  }

  for (const auto& [dof, value] : applied.pinned) x(dof) = value;
  for (const auto& [node, R] : applied.rotations) {
    const Eigen::Vector2d local(x(2 * node), x(2 * node + 1));
    const Eigen::Vector2d global = R * local;
    x(2 * node) = global.x();
    x(2 * node + 1) = global.y();
  }

  if (report != nullptr) {
    report->residual = res;
    report->notes = applied.notes;
  }
  return x;
}

} // namespace mmvem

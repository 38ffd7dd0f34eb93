#pragma once
// Kinematic contact handling for the moving mesh: detection of node-to-edge
// collisions under linear motion, mass-conserving monitor transfer for the
// resulting topology edits, and the event handlers for self-intersection and
// obstacle contact.
//
// Detection model: every point moves linearly, p(t) = p + t v. A node meets
// a segment when the three points become collinear while the node lies
// between the endpoints. Stacking the three x-coordinates, y-coordinates and
// their rates into 3-vectors turns the collinearity condition into a single
// quadratic in t whose coefficients are sums of cross-product components;
// the constant term is minus twice the signed triangle area.

#include <mmvem/geometry.hpp>
#include <mmvem/mesh.hpp>
#include <mmvem/state.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mmvem {

enum class ContactSide { Mesh, Obstacle };

// A node-to-edge pair flagged by detection. Mesh entities carry mesh node
// ids; obstacle entities carry vertex indices within loop `obstacle`.
struct ContactPair {
  ContactSide edge_side = ContactSide::Mesh;
  idx edge_i = -1, edge_j = -1;
  ContactSide node_side = ContactSide::Mesh;
  idx node = -1;
  idx obstacle = -1;
  double t_star = std::numeric_limits<double>::infinity();
};

// Static obstacles: CCW polygons whose interior is the excluded region.
struct ObstacleSet {
  std::vector<std::vector<Point2>> loops;
  bool empty() const { return loops.empty(); }
};

// Unit normal of obstacle edge (k, k+1), pointing away from the obstacle
// interior (toward the gas) for a CCW loop.
inline Point2 obstacle_edge_normal(const std::vector<Point2>& loop, std::size_t k) {
  const Point2 a = loop[k], b = loop[(k + 1) % loop.size()];
  const Point2 d = b - a;
  const double len = std::hypot(d.x, d.y);
  if (len == 0.0) throw MeshError("obstacle edge " + std::to_string(k) + " has zero length");
  return {d.y / len, -d.x / len};
}

namespace contactdetail {

// Sum of the components of the cross product of two 3-vectors.
inline double cross3_sum(const std::array<double, 3>& u, const std::array<double, 3>& v) {
  return (u[1] * v[2] - u[2] * v[1]) + (u[2] * v[0] - u[0] * v[2]) + (u[0] * v[1] - u[1] * v[0]);
}

struct QuadRoots {
  std::array<double, 2> t{0.0, 0.0};
  int count = 0;
  bool identically_zero = false;
  void push(double v) {
    if (count < 2) t[count++] = v;
  }
};

// Real roots of q2 t^2 + q1 t + q0, ascending. Near-zero leading coefficients
// (below the caller's scale-relative tolerances) demote the polynomial rather
// than amplify noise; the numerically stable form avoids cancellation in the
// smaller root.
inline QuadRoots quad_roots(double q2, double q1, double q0, double tol2, double tol1,
                            double tol0) {
  QuadRoots r;
  if (std::abs(q2) <= tol2) {
    if (std::abs(q1) <= tol1) {
      r.identically_zero = std::abs(q0) <= tol0;
      return r;
    }
    r.push(-q0 / q1);
    return r;
  }
  const double disc = q1 * q1 - 4.0 * q2 * q0;
  if (disc < 0.0) return r;
  const double s = std::sqrt(disc);
  const double q = -0.5 * (q1 + (q1 >= 0.0 ? s : -s));
  if (q != 0.0) {
    r.push(q / q2);
    r.push(q0 / q);
  } else {
    r.push(0.0);
    r.push(-q1 / q2);
  }
  if (r.count == 2 && r.t[0] > r.t[1]) std::swap(r.t[0], r.t[1]);
  return r;
}

} // namespace contactdetail

// Quadratic coefficients {a, b, c} of the collinearity condition for the
// advected triplet (x1, x2, x3): a t^2 + b t + c = 0, built from the
// cross-product component sums of the stacked coordinate 3-vectors.
inline std::array<double, 3> contact_coefficients(Point2 x1, Point2 x2, Point2 x3, Point2 v1,
                                                  Point2 v2, Point2 v3) {
  const std::array<double, 3> px{x1.x, x2.x, x3.x};
  const std::array<double, 3> py{x1.y, x2.y, x3.y};
  const std::array<double, 3> rx{v1.x, v2.x, v3.x};
  const std::array<double, 3> ry{v1.y, v2.y, v3.y};
  using contactdetail::cross3_sum;
  return {cross3_sum(ry, rx), cross3_sum(ry, px) + cross3_sum(py, rx), cross3_sum(py, px)};
}

// Earliest time in [0, dt_max] at which the moving node x3 lies on the moving
// segment [x1, x2], or nothing. Roots are accepted only if the node sits on
// the advanced segment. Fully collinear motion (the quadratic vanishes
// identically, e.g. sliding along a straight wall) is handled by tracking
// when the node enters the moving segment: membership is the intersection of
// two endpoint dot-product conditions, each quadratic in t.
inline std::optional<double> contact_time(Point2 x1, Point2 x2, Point2 x3, Point2 v1, Point2 v2,
                                          Point2 v3, double dt_max) {
  if (dt_max < 0.0) return std::nullopt;
  const auto [a, b, c] = contact_coefficients(x1, x2, x3, v1, v2, v3);

  // translation-invariant scales for the degeneracy thresholds
  const double sx = std::max(dist(x2, x1), dist(x3, x1));
  const double sv = std::max(std::hypot(v2.x - v1.x, v2.y - v1.y),
                             std::hypot(v3.x - v1.x, v3.y - v1.y));
  const double tol_a = 1e-14 * sv * sv;
  const double tol_b = 1e-14 * sv * sx;
  const double tol_c = 1e-14 * sx * sx;

  const auto member_at = [&](double t) {
    const Point2 p1{x1.x + t * v1.x, x1.y + t * v1.y};
    const Point2 p2{x2.x + t * v2.x, x2.y + t * v2.y};
    const Point2 p3{x3.x + t * v3.x, x3.y + t * v3.y};
    return point_on_segment(p3, p1, p2, 1e-9);
  };

  const auto roots = contactdetail::quad_roots(a, b, c, tol_a, tol_b, tol_c);
  if (!roots.identically_zero) {
    for (int k = 0; k < roots.count; ++k) {
      const double t = roots.t[k];
      if (t < 0.0 || t > dt_max) continue;
      if (member_at(t)) return t;
    }
    return std::nullopt;
  }

  if (member_at(0.0)) return 0.0;

  const Point2 d31 = x3 - x1, d21 = x2 - x1, d32 = x3 - x2;
  const Point2 w31{v3.x - v1.x, v3.y - v1.y};
  const Point2 w21{v2.x - v1.x, v2.y - v1.y};
  const Point2 w32{v3.x - v2.x, v3.y - v2.y};
  std::array<double, 4> cand{};
  int n_cand = 0;
  const auto collect = [&](Point2 dp, Point2 wp, Point2 dq, Point2 wq) {
    const auto g = contactdetail::quad_roots(dot(wp, wq), dot(dp, wq) + dot(wp, dq), dot(dp, dq),
                                             tol_a, tol_b, tol_c);
    for (int k = 0; k < g.count; ++k)
      if (g.t[k] > 0.0 && g.t[k] <= dt_max && n_cand < 4) cand[n_cand++] = g.t[k];
  };
  collect(d31, w31, d21, w21);                                   // passes endpoint x1
  collect(d32, w32, Point2{-d21.x, -d21.y}, Point2{-w21.x, -w21.y}); // passes endpoint x2
  std::sort(cand.begin(), cand.begin() + n_cand);
  for (int k = 0; k < n_cand; ++k)
    if (member_at(cand[k])) return cand[k];
  return std::nullopt;
}

struct DetectionResult {
  double dt = 0.0;                 // min(requested dt, earliest contact time)
  std::vector<ContactPair> marks;  // pairs achieving the earliest time
};

// Scans (i) mesh boundary node x mesh boundary edge (skipping edge endpoints,
// pairs sharing a cell, and nodes already resting on the edge), (ii) mesh
// boundary node x obstacle edge (skipping nodes already on the edge: their
// no-penetration constraint is active), and (iii) obstacle vertex x mesh
// boundary edge (skipping vertices already carried by a mesh node; a vertex
// found strictly inside an edge without such an anchor is flagged at t = 0).
// Obstacle points are static. Returns the clipped step and the marked pairs,
// deterministically ordered; self marks are deduplicated per node and vertex
// marks per obstacle vertex.
inline DetectionResult detect_all(const PolyMesh& mesh, const ObstacleSet& obstacles,
                                  const VelocityField& v, double dt, bool self_pairs = true,
                                  bool obstacle_pairs = true) {
  DetectionResult out;
  out.dt = std::max(dt, 0.0);
  if (v.vx.size() != static_cast<std::size_t>(mesh.n_nodes()) || v.vy.size() != v.vx.size())
    throw SolverError("detect_all: velocity field size mismatch");

  const auto& X = mesh.coords;
  const auto vel = [&](idx n) { return Point2{v.vx[n], v.vy[n]}; };
  const auto speed = [&](idx n) { return std::hypot(v.vx[n], v.vy[n]); };

  std::vector<idx> bnodes;
  for (idx n = 0; n < mesh.n_nodes(); ++n)
    if (mesh.node_on_boundary(n)) bnodes.push_back(n);
  const auto& bedges = mesh.boundary_edge_ids();

  std::vector<ContactPair> cands;

  const auto within_reach = [&](Point2 p, Point2 a, Point2 b, double closing) {
    const Point2 mid{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
    const double half = 0.5 * dist(a, b);
    return dist(p, mid) <= half + closing * out.dt + 1e-9 * (half + 1.0);
  };

  if (self_pairs) {
    const auto shares_cell = [&](idx n, idx c) {
      const auto cells = mesh.topo->cells_of_node(n);
      return std::find(cells.begin(), cells.end(), c) != cells.end();
    };
    for (const idx n : bnodes) {
      // Pivot nodes are obstacle anchor points: boundary edges slide over
      // them along the obstacle surface, which is a hand-over (entry scan),
      // not a collision. Only free nodes can open a self-contact.
      if (mesh.node_class[n] == NodeClass::Pivot) continue;
      const Point2 p3 = X[n];
      const Point2 w3 = vel(n);
      for (const idx eid : bedges) {
        const auto& ed = mesh.edges()[eid];
        if (ed.a == n || ed.b == n) continue;
        if (shares_cell(n, ed.cell0)) continue;
        const Point2 p1 = X[ed.a], p2 = X[ed.b];
        if (!within_reach(p3, p1, p2, speed(n) + std::max(speed(ed.a), speed(ed.b)))) continue;
        if (point_on_segment(p3, p1, p2, 1e-9)) continue;  // resting contact
        if (const auto t = contact_time(p1, p2, p3, vel(ed.a), vel(ed.b), w3, out.dt)) {
          ContactPair pr;
          pr.edge_i = ed.a;
          pr.edge_j = ed.b;
          pr.node = n;
          pr.t_star = *t;
          cands.push_back(pr);
        }
      }
    }
  }

  if (obstacle_pairs) {
    for (std::size_t o = 0; o < obstacles.loops.size(); ++o) {
      const auto& loop = obstacles.loops[o];
      const std::size_t K = loop.size();
      for (const idx n : bnodes) {
        const Point2 p3 = X[n];
        const Point2 w3 = vel(n);
        for (std::size_t k = 0; k < K; ++k) {
          const Point2 p1 = loop[k], p2 = loop[(k + 1) % K];
          if (!within_reach(p3, p1, p2, speed(n))) continue;
          if (point_on_segment(p3, p1, p2, 1e-9)) {
            // Constraint already active. A slide that carries the node past
            // an endpoint this step is clipped at the crossing, so the node
            // lands exactly on the obstacle vertex and the pivot hand-over
            // (or the change of face) happens there.
            const Point2 d{p2.x - p1.x, p2.y - p1.y};
            const double L2 = d.x * d.x + d.y * d.y;
            if (L2 > 0) {
              const double len = std::sqrt(L2);
              const double s0 = ((p3.x - p1.x) * d.x + (p3.y - p1.y) * d.y) / L2;
              const double sdot = (w3.x * d.x + w3.y * d.y) / L2;
              double t_exit = -1.0;
              // a node already resting at the exit endpoint (within the
              // carrying tolerance) is the entry scan's business, not a clip
              if (sdot > 0 && dist(p3, p2) > 1e-9 * len)
                t_exit = (1.0 - s0) / sdot;
              else if (sdot < 0 && dist(p3, p1) > 1e-9 * len)
                t_exit = s0 / (-sdot);
              if (t_exit > 1e-12 && t_exit <= out.dt) {
                ContactPair pr;
                pr.edge_side = ContactSide::Obstacle;
                pr.edge_i = static_cast<idx>(k);
                pr.edge_j = static_cast<idx>((k + 1) % K);
                pr.node = n;
                pr.obstacle = static_cast<idx>(o);
                pr.t_star = t_exit;
                cands.push_back(pr);
              }
            }
            continue;
          }
          if (const auto t = contact_time(p1, p2, p3, Point2{0, 0}, Point2{0, 0}, w3, out.dt)) {
            ContactPair pr;
            pr.edge_side = ContactSide::Obstacle;
            pr.edge_i = static_cast<idx>(k);
            pr.edge_j = static_cast<idx>((k + 1) % K);
            pr.node = n;
            pr.obstacle = static_cast<idx>(o);
            pr.t_star = *t;
            cands.push_back(pr);
          }
        }
      }
      for (std::size_t k = 0; k < K; ++k) {
        const Point2 p3 = loop[k];
        for (const idx eid : bedges) {
          const auto& ed = mesh.edges()[eid];
          const Point2 p1 = X[ed.a], p2 = X[ed.b];
          const double len = dist(p1, p2);
          if (dist(p3, p1) <= 1e-9 * len || dist(p3, p2) <= 1e-9 * len)
            continue;  // vertex carried by a mesh node (pivot or passing node)
          ContactPair pr;
          pr.edge_i = ed.a;
          pr.edge_j = ed.b;
          pr.node_side = ContactSide::Obstacle;
          pr.node = static_cast<idx>(k);
          pr.obstacle = static_cast<idx>(o);
          if (point_on_segment(p3, p1, p2, 1e-9)) {
            pr.t_star = 0.0;  // unanchored vertex inside a mesh edge: resolve now
            cands.push_back(pr);
            continue;
          }
          if (!within_reach(p3, p1, p2, std::max(speed(ed.a), speed(ed.b)))) continue;
          if (const auto t =
                  contact_time(p1, p2, p3, vel(ed.a), vel(ed.b), Point2{0, 0}, out.dt)) {
            pr.t_star = *t;
            cands.push_back(pr);
          }
        }
      }
    }
  }

  if (cands.empty()) return out;

  double tmin = cands.front().t_star;
  for (const auto& pr : cands) tmin = std::min(tmin, pr.t_star);
  out.dt = std::min(out.dt, tmin);

  const double tol_t = std::max(1e-12, 1e-9 * dt);
  std::vector<ContactPair> marked;
  for (const auto& pr : cands)
    if (pr.t_star <= tmin + tol_t) marked.push_back(pr);

  std::sort(marked.begin(), marked.end(), [](const ContactPair& p, const ContactPair& q) {
    if (p.t_star != q.t_star) return p.t_star < q.t_star;
    if (p.node_side != q.node_side) return p.node_side == ContactSide::Mesh;
    if (p.edge_side != q.edge_side) return p.edge_side == ContactSide::Mesh;
    if (p.obstacle != q.obstacle) return p.obstacle < q.obstacle;
    if (p.node != q.node) return p.node < q.node;
    if (p.edge_i != q.edge_i) return p.edge_i < q.edge_i;
    return p.edge_j < q.edge_j;
  });

  // one merge per mesh node; one insertion per obstacle vertex
  for (const auto& pr : marked) {
    const bool self = pr.node_side == ContactSide::Mesh && pr.edge_side == ContactSide::Mesh;
    const bool vertex = pr.node_side == ContactSide::Obstacle;
    const auto dup = std::find_if(out.marks.begin(), out.marks.end(), [&](const ContactPair& q) {
      if (self)
        return q.node_side == ContactSide::Mesh && q.edge_side == ContactSide::Mesh &&
               q.node == pr.node;
      if (vertex)
        return q.node_side == ContactSide::Obstacle && q.obstacle == pr.obstacle &&
               q.node == pr.node;
      return false;
    });
    if (dup == out.marks.end()) out.marks.push_back(pr);
  }
  return out;
}

namespace contactdetail {

// Monomial coefficients of the projected density and the monitor contribution
// it carries, for one cell of the current mesh.
struct CellPoly {
  Eigen::Vector3d coeff;
  Eigen::VectorXd monitor;  // per local dof, ordered like the cell loop
};

inline CellPoly cell_density_poly(const PolyMesh& mesh, idx c, const Eigen::VectorXd& rho,
                                  std::vector<Point2>& verts, ElementProjections& P) {
  mesh.cell_coords(c, verts);
  build_projections(verts, P);
  const auto loop = mesh.cell(c);
  Eigen::VectorXd rho_e(static_cast<Eigen::Index>(loop.size()));
  for (std::size_t q = 0; q < loop.size(); ++q)
    rho_e(static_cast<Eigen::Index>(q)) = rho(loop[q]);
  CellPoly out;
  out.coeff = P.PiN_star * rho_e;
  local_monitor_init(P, rho_e, out.monitor);
  return out;
}

// Replace one cell's monitor contribution after a topology edit: subtract the
// contribution of the old basis, add the integral of the old projected
// density against the new projected basis. Both totals equal the integral of
// the old polynomial, so the sum of mu is unchanged to roundoff.
inline void transfer_cell_monitor(const PolyMesh& old_mesh, idx c, const CellPoly& poly,
                                  const PolyMesh& new_mesh, Eigen::VectorXd& mu,
                                  std::vector<Point2>& verts, ElementProjections& P) {
  const auto old_loop = old_mesh.cell(c);
  for (std::size_t q = 0; q < old_loop.size(); ++q)
    mu(old_loop[q]) -= poly.monitor(static_cast<Eigen::Index>(q));
  new_mesh.cell_coords(c, verts);
  build_projections(verts, P);
  const Eigen::VectorXd add = P.PiN_star.transpose() * (P.Q * poly.coeff);
  const auto new_loop = new_mesh.cell(c);
  for (std::size_t q = 0; q < new_loop.size(); ++q)
    mu(new_loop[q]) += add(static_cast<Eigen::Index>(q));
}

} // namespace contactdetail

struct InsertResult {
  PolyMesh mesh;
  idx new_node = -1;
};

// Inserts a vertex on edge (i, j) of `cell`, redistributing the monitor
// entries of the cells adjacent to the edge so that their projected density
// keeps its integral: the old projection is locked before the edit and
// integrated against the new projected basis. The density is then recovered
// from the updated monitor on the new mesh (skipped with resolve = false,
// when the caller batches several edits before one recovery). The new node's
// class can be overridden (pivot creation) before the recovery runs.
inline InsertResult insert_node_conservative(const PolyMesh& mesh, MonitorState& state, idx cell,
                                             idx i, idx j, Point2 position, bool resolve = true,
                                             std::optional<NodeClass> new_class = {}) {
  const idx e = mesh.topo->find_edge(i, j);
  if (e < 0)
    throw MeshError("insert_node_conservative: no edge (" + std::to_string(i) + "," +
                    std::to_string(j) + ")");
  const auto ed = mesh.edges()[e];
  if (cell != ed.cell0 && cell != ed.cell1)
    throw MeshError("insert_node_conservative: cell " + std::to_string(cell) +
                    " not adjacent to edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
  if (state.mu.size() != mesh.n_nodes() || state.rho.size() != mesh.n_nodes())
    throw SolverError("insert_node_conservative: state sized for a different mesh");

  std::vector<Point2> verts;
  ElementProjections P;
  const std::array<idx, 2> affected{ed.cell0, ed.cell1};
  std::array<contactdetail::CellPoly, 2> poly;
  for (int s = 0; s < 2; ++s)
    if (affected[s] >= 0)
      poly[s] = contactdetail::cell_density_poly(mesh, affected[s], state.rho, verts, P);

  auto [out, new_node] = insert_vertex_on_edge(mesh, i, j, position);
  if (new_class) out.node_class[new_node] = *new_class;

  Eigen::VectorXd mu(out.n_nodes());
  mu.head(mesh.n_nodes()) = state.mu;
  mu(new_node) = 0.0;
  for (int s = 0; s < 2; ++s)
    if (affected[s] >= 0)
      contactdetail::transfer_cell_monitor(mesh, affected[s], poly[s], out, mu, verts, P);
  state.mu = std::move(mu);

  if (resolve) {
    state.rho = recover_density(out, state.mu);
  } else {
    state.rho.conservativeResize(out.n_nodes());
    state.rho(new_node) = 0.0;
  }
  return {std::move(out), new_node};
}

// Self-intersection landing: the boundary node is adopted into the receiving
// cell's edge (no new dof) and the receiving cell's monitor contribution is
// redistributed conservatively, exactly as for insertion.
inline PolyMesh merge_node_conservative(const PolyMesh& mesh, MonitorState& state, idx node,
                                        idx i, idx j, bool resolve = true) {
  const idx e = mesh.topo->find_edge(i, j);
  if (e < 0)
    throw MeshError("merge_node_conservative: no edge (" + std::to_string(i) + "," +
                    std::to_string(j) + ")");
  const idx cell = mesh.edges()[e].cell0;
  if (state.mu.size() != mesh.n_nodes() || state.rho.size() != mesh.n_nodes())
    throw SolverError("merge_node_conservative: state sized for a different mesh");

  std::vector<Point2> verts;
  ElementProjections P;
  const auto poly = contactdetail::cell_density_poly(mesh, cell, state.rho, verts, P);
  PolyMesh out = merge_node_into_edge(mesh, node, i, j);
  contactdetail::transfer_cell_monitor(mesh, cell, poly, out, state.mu, verts, P);
  if (resolve) state.rho = recover_density(out, state.mu);
  return out;
}

// Connected-node normals: one entry per (boundary node, obstacle edge it lies
// on). Corner nodes touching two non-parallel edges produce two entries; the
// constraint machinery resolves those to a full pin.
inline std::vector<std::pair<idx, Point2>> contact_normals(const PolyMesh& mesh,
                                                           const ObstacleSet& obstacles) {
  std::vector<std::pair<idx, Point2>> out;
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    if (!mesh.node_on_boundary(n)) continue;
    const Point2 p = mesh.coords[n];
    for (std::size_t o = 0; o < obstacles.loops.size(); ++o) {
      const auto& loop = obstacles.loops[o];
      for (std::size_t k = 0; k < loop.size(); ++k)
        if (point_on_segment(p, loop[k], loop[(k + 1) % loop.size()], 1e-9))
          out.emplace_back(n, obstacle_edge_normal(loop, k));
    }
  }
  return out;
}

// Boundary-condition retag, run once per step: a boundary node in contact
// with an obstacle is promoted to interface only when every boundary edge at
// the node connects it to another contact node (then the zero-density pin is
// lifted); otherwise it stays a regular moving-boundary node. Pivot nodes
// keep their class; non-boundary nodes are interior.
inline void apply_contact_classes(PolyMesh& mesh, const ObstacleSet& obstacles) {
  std::vector<std::uint8_t> connected(static_cast<std::size_t>(mesh.n_nodes()), 0);
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    if (!mesh.node_on_boundary(n)) continue;
    if (mesh.node_class[n] == NodeClass::Pivot) {
      connected[static_cast<std::size_t>(n)] = 1;
      continue;
    }
    const Point2 p = mesh.coords[n];
    for (const auto& loop : obstacles.loops) {
      for (std::size_t k = 0; k < loop.size() && !connected[static_cast<std::size_t>(n)]; ++k)
        if (point_on_segment(p, loop[k], loop[(k + 1) % loop.size()], 1e-9))
          connected[static_cast<std::size_t>(n)] = 1;
      if (connected[static_cast<std::size_t>(n)]) break;
    }
  }
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    if (!mesh.node_on_boundary(n)) {
      mesh.node_class[n] = NodeClass::Interior;
      continue;
    }
    if (mesh.node_class[n] == NodeClass::Pivot) continue;
    bool interface = connected[static_cast<std::size_t>(n)] != 0;
    if (interface) {
      for (const idx eid : mesh.topo->edges_of_node(n)) {
        const auto& ed = mesh.edges()[eid];
        if (!ed.boundary()) continue;
        const idx other = ed.a == n ? ed.b : ed.a;
        if (!connected[static_cast<std::size_t>(other)]) {
          interface = false;
          break;
        }
      }
    }
    mesh.node_class[n] = interface ? NodeClass::Interface : NodeClass::MovingBoundary;
  }
}

struct ContactEvent {
  std::string kind;  // "self", "obstacle", "pivot", "coalesce", "absorb"
  idx node_a = -1, node_b = -1;
  double t_star = 0.0;
};

struct ContactOutcome {
  PolyMesh mesh;
  double dt_used = 0.0;
  std::vector<ContactEvent> events;
};

namespace contactdetail {

// Boundary edge at `node` whose interior strictly contains pos (the position
// a pivot must return to after the node slid past it). Falls back to a scan
// of every boundary edge; {-1, -1} when nothing contains it strictly.
inline std::pair<idx, idx> edge_strictly_containing(const PolyMesh& mesh, idx node, Point2 pos) {
  const auto strict = [&](const MeshEdge& ed) {
    const Point2 a = mesh.coords[ed.a], b = mesh.coords[ed.b];
    const double len = dist(a, b);
    return point_on_segment(pos, a, b, 1e-9) && dist(pos, a) > 1e-9 * len &&
           dist(pos, b) > 1e-9 * len;
  };
  if (node >= 0)
    for (const idx eid : mesh.topo->edges_of_node(node)) {
      const auto& ed = mesh.edges()[eid];
      if (ed.boundary() && strict(ed)) return {ed.a, ed.b};
    }
  for (const idx eid : mesh.boundary_edge_ids()) {
    const auto& ed = mesh.edges()[eid];
    if (strict(ed)) return {ed.a, ed.b};
  }
  return {-1, -1};
}

// Longest boundary edge length at a node, the scale for coincidence tests.
inline double boundary_scale(const PolyMesh& mesh, idx n) {
  double h = 0.0;
  for (const idx eid : mesh.topo->edges_of_node(n)) {
    const auto& ed = mesh.edges()[eid];
    if (ed.boundary()) h = std::max(h, dist(mesh.coords[ed.a], mesh.coords[ed.b]));
  }
  return h > 0.0 ? h : 1.0;
}

} // namespace contactdetail

// One contact-aware advance, the shared core of the event handlers and of
// the time stepper's contact stage.
//
// Entry scan (when obstacle pairs are enabled): a boundary node resting
// exactly on a pivot carries that pivot's dof through the step — the pivot is
// detached and its monitor (and monitor-rate) entry pooled into the node;
// after the displacement the pivot is reinstated inside the edge behind the
// node and the pooled entries are split equally between the two. The
// reinstatement requires that edge to pass through the pivot's position,
// which holds exactly when the node slides straight past (collinear wall
// faces). At a genuine corner the node cannot slide past at all — both face
// normals constrain it to rest there — so the pivot stays absorbed and the
// node itself anchors the corner from then on.
//
// Then detection clips the step over the enabled pair kinds, the mesh
// advances, the monitor time-update (when given) is applied with the same
// clipped step, and the density is recovered on the advanced mesh — that is
// the density the conservative edits lock. Edits run in deterministic order:
// pending pivot reinstatements, then the marked pairs (obstacle vertices
// anchored by pivot insertions, self-intersection nodes merged into the
// edges they landed on). Finally the boundary classes are retagged once and
// the density re-recovered if the dof layout or the pin set changed.
inline ContactOutcome advance_with_contact(const PolyMesh& mesh, MonitorState& state,
                                           const ObstacleSet& obstacles, const VelocityField& v,
                                           double dt, const Eigen::VectorXd* mudot = nullptr,
                                           bool self_pairs = true, bool obstacle_pairs = true) {
  ContactOutcome out;
  PolyMesh cur = mesh;
  Eigen::VectorXd mdot;
  if (mudot != nullptr) {
    if (mudot->size() != mesh.n_nodes())
      throw SolverError("advance_with_contact: monitor update size mismatch");
    mdot = *mudot;
  }

  struct Pending {
    idx node;    // the node that slid over the position
    Point2 pos;  // pivot position to reinstate behind it
    idx pivot;   // the detached pivot's old id, for the event log
  };
  std::vector<Pending> pending;

  if (obstacle_pairs && !obstacles.empty()) {
    for (idx n = 0; n < cur.n_nodes(); ++n) {
      if (!cur.node_on_boundary(n) || cur.node_class[n] == NodeClass::Pivot) continue;
      const double tol = 1e-9 * contactdetail::boundary_scale(cur, n);
      // resting on an existing pivot: detach it for this step
      for (idx p = 0; p < cur.n_nodes(); ++p) {
        if (cur.node_class[p] != NodeClass::Pivot || dist(cur.coords[n], cur.coords[p]) > tol)
          continue;
        pending.push_back({n, cur.coords[p], p});
        state.mu(n) += state.mu(p);
        state.mu(p) = 0.0;
        if (mdot.size() > 0) {
          mdot(n) += mdot(p);
          mdot(p) = 0.0;
        }
        cur = remove_boundary_vertex(cur, p);
        break;
      }
    }
  }

  const DetectionResult det = detect_all(cur, obstacles, v, dt, self_pairs, obstacle_pairs);
  out.dt_used = det.dt;
  out.mesh = displace_nodes(cur, v, det.dt);
  state.time += det.dt;
  if (mdot.size() > 0) state.mu += det.dt * mdot;
  // the density the conservative edits lock: recovered on the advanced mesh
  // from the updated monitor
  state.rho = recover_density(out.mesh, state.mu,
                              state.rho.size() == out.mesh.n_nodes() ? &state.rho : nullptr);
  bool edited = false;

  for (const auto& pd : pending) {
    const auto [a, b] = contactdetail::edge_strictly_containing(out.mesh, pd.node, pd.pos);
    if (a < 0) {
      // no edge passes through the pivot's position: the node rests at the
      // pivot's corner and anchors it from now on; the pooled monitor stays
      // with the node
      out.events.push_back({"absorb", pd.node, pd.pivot, 0.0});
      continue;
    }
    auto [m2, q] = insert_vertex_on_edge(out.mesh, a, b, pd.pos);
    m2.node_class[q] = NodeClass::Pivot;
    out.mesh = std::move(m2);
    Eigen::VectorXd mu(out.mesh.n_nodes());
    mu.head(state.mu.size()) = state.mu;
    mu(q) = 0.5 * mu(pd.node);
    mu(pd.node) = 0.5 * mu(pd.node);
    state.mu = std::move(mu);
    state.rho.conservativeResize(out.mesh.n_nodes());
    state.rho(q) = 0.0;
    out.events.push_back({"coalesce", pd.node, q, 0.0});
    edited = true;
  }

  for (const auto& m : det.marks) {
    if (m.node_side == ContactSide::Obstacle) {
      const Point2 pos = obstacles.loops[static_cast<std::size_t>(m.obstacle)]
                                        [static_cast<std::size_t>(m.node)];
      auto [a, b] = std::pair<idx, idx>{m.edge_i, m.edge_j};
      const auto& coords = out.mesh.coords;
      const idx eid = out.mesh.topo->find_edge(a, b);
      const double len = eid >= 0 ? dist(coords[a], coords[b]) : 0.0;
      const bool strict = eid >= 0 && point_on_segment(pos, coords[a], coords[b], 1e-9) &&
                          dist(pos, coords[a]) > 1e-9 * len && dist(pos, coords[b]) > 1e-9 * len;
      if (!strict) {
        std::tie(a, b) = contactdetail::edge_strictly_containing(out.mesh, -1, pos);
        if (a < 0) continue;  // vertex coincides with a mesh node, which anchors it
      }
      const idx cell = out.mesh.edges()[out.mesh.topo->find_edge(a, b)].cell0;
      auto res = insert_node_conservative(out.mesh, state, cell, a, b, pos,
                                          /*resolve=*/false, NodeClass::Pivot);
      out.mesh = std::move(res.mesh);
      out.events.push_back({"pivot", res.new_node, -1, m.t_star});
      edited = true;
    } else if (m.edge_side == ContactSide::Mesh) {
      idx i = m.edge_i, j = m.edge_j;
      if (out.mesh.topo->find_edge(i, j) < 0) {
        // the marked edge was split by an earlier edit; re-locate by position
        std::tie(i, j) =
            contactdetail::edge_strictly_containing(out.mesh, -1, out.mesh.coords[m.node]);
        if (i < 0)
          throw MeshError("advance_with_contact: landing edge for node " +
                          std::to_string(m.node) + " vanished");
      }
      out.mesh = merge_node_conservative(out.mesh, state, m.node, i, j, /*resolve=*/false);
      out.events.push_back({"self", m.node, i, m.t_star});
      edited = true;
    } else {
      out.events.push_back({"obstacle", m.node, -1, m.t_star});
    }
  }

  if (obstacle_pairs) {
    const std::vector<NodeClass> before = out.mesh.node_class;
    apply_contact_classes(out.mesh, obstacles);
    if (out.mesh.node_class != before) edited = true;
  }
  if (edited)
    state.rho = recover_density(out.mesh, state.mu,
                                state.rho.size() == out.mesh.n_nodes() ? &state.rho : nullptr);
  return out;
}

// Self-intersection step: detect mesh-mesh contacts, advance by the clipped
// step, then adopt each marked node into the edge it landed on with the
// conservative monitor redistribution. Buried nodes are reclassified by the
// merge itself; the density is recovered on the final mesh.
inline ContactOutcome handle_self_intersection(const PolyMesh& mesh, MonitorState& state,
                                               const VelocityField& v, double dt) {
  const ObstacleSet none;
  return advance_with_contact(mesh, state, none, v, dt, nullptr, true, false);
}

// Obstacle step: pivot coalescence and creation scans, detection over the
// obstacle pair kinds, clipped advance, pivot insertions at marked vertices,
// and the once-per-step boundary retag.
inline ContactOutcome handle_obstacle_contact(const PolyMesh& mesh, MonitorState& state,
                                              const ObstacleSet& obstacles,
                                              const VelocityField& v, double dt) {
  return advance_with_contact(mesh, state, obstacles, v, dt, nullptr, false, true);
}

} // namespace mmvem

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmvem/errors.hpp"
#include "mmvem/geometry.hpp"

namespace mmvem {

using idx = std::int32_t;

enum class NodeClass : std::uint8_t {
  Interior = 0,
  MovingBoundary = 1,
  Interface = 2,
  Pivot = 3,
};

inline const char* node_class_name(NodeClass c) {
  switch (c) {
    case NodeClass::Interior: return "interior";
    case NodeClass::MovingBoundary: return "moving";
    case NodeClass::Interface: return "interface";
    case NodeClass::Pivot: return "pivot";
  }
  return "?";
}

struct MeshEdge {
  idx a{-1}, b{-1};        // a < b
  idx cell0{-1}, cell1{-1};  // cell1 == -1 for boundary edges
  bool boundary() const { return cell1 < 0; }
};

// Connectivity derived from the cell loops. Immutable and shared between the
// meshes of consecutive time steps; node displacement never touches it.
struct MeshTopology {
  std::vector<idx> cell_offsets;  // size n_cells + 1
  std::vector<idx> cell_nodes;    // concatenated CCW loops
  idx n_nodes{0};

  std::vector<MeshEdge> edges;
  std::vector<idx> boundary_edge_ids;
  std::vector<std::uint8_t> node_on_boundary;
  std::vector<idx> node_cell_offsets, node_cells;
  std::vector<idx> node_edge_offsets, node_edges;
  std::unordered_map<std::uint64_t, idx> edge_lookup;

  idx n_cells() const { return static_cast<idx>(cell_offsets.size()) - 1; }
  std::span<const idx> cell(idx c) const {
    return {cell_nodes.data() + cell_offsets[c], static_cast<std::size_t>(cell_offsets[c + 1] - cell_offsets[c])};
  }
  std::span<const idx> cells_of_node(idx n) const {
    return {node_cells.data() + node_cell_offsets[n], static_cast<std::size_t>(node_cell_offsets[n + 1] - node_cell_offsets[n])};
  }
  std::span<const idx> edges_of_node(idx n) const {
    return {node_edges.data() + node_edge_offsets[n], static_cast<std::size_t>(node_edge_offsets[n + 1] - node_edge_offsets[n])};
  }
  static std::uint64_t edge_key(idx i, idx j) {
    const auto lo = static_cast<std::uint64_t>(i < j ? i : j);
    const auto hi = static_cast<std::uint64_t>(i < j ? j : i);
    return (hi << 32) | lo;
  }
  idx find_edge(idx i, idx j) const {
    const auto it = edge_lookup.find(edge_key(i, j));
    return it == edge_lookup.end() ? -1 : it->second;
  }
};

inline std::shared_ptr<const MeshTopology> build_topology(std::vector<idx> cell_offsets,
                                                          std::vector<idx> cell_nodes, idx n_nodes) {
  auto topo = std::make_shared<MeshTopology>();
  topo->cell_offsets = std::move(cell_offsets);
  topo->cell_nodes = std::move(cell_nodes);
  topo->n_nodes = n_nodes;

  const idx nc = topo->n_cells();
  for (idx c = 0; c < nc; ++c) {
    const auto loop = topo->cell(c);
    if (loop.size() < 3) throw MeshError("cell " + std::to_string(c) + " has fewer than 3 vertices");
    for (const idx n : loop)
      if (n < 0 || n >= n_nodes) throw MeshError("cell " + std::to_string(c) + " references invalid node " + std::to_string(n));
  }

  topo->edge_lookup.reserve(static_cast<std::size_t>(topo->cell_nodes.size()));
  for (idx c = 0; c < nc; ++c) {
    const auto loop = topo->cell(c);
    const auto k = static_cast<idx>(loop.size());
    for (idx e = 0; e < k; ++e) {
      const idx i = loop[e], j = loop[(e + 1) % k];
      if (i == j) throw MeshError("cell " + std::to_string(c) + " repeats node " + std::to_string(i));
      const auto key = MeshTopology::edge_key(i, j);
      auto it = topo->edge_lookup.find(key);
      if (it == topo->edge_lookup.end()) {
        topo->edge_lookup.emplace(key, static_cast<idx>(topo->edges.size()));
        topo->edges.push_back({std::min(i, j), std::max(i, j), c, -1});
      } else {
        MeshEdge& ed = topo->edges[it->second];
        if (ed.cell1 >= 0)
          throw MeshError("edge (" + std::to_string(i) + "," + std::to_string(j) + ") appears in more than two cells");
        ed.cell1 = c;
      }
    }
  }

  topo->node_on_boundary.assign(n_nodes, 0);
  for (idx e = 0; e < static_cast<idx>(topo->edges.size()); ++e) {
    if (topo->edges[e].boundary()) {
      topo->boundary_edge_ids.push_back(e);
      topo->node_on_boundary[topo->edges[e].a] = 1;
      topo->node_on_boundary[topo->edges[e].b] = 1;
    }
  }

  // node -> cells
  topo->node_cell_offsets.assign(n_nodes + 1, 0);
  for (idx c = 0; c < nc; ++c)
    for (const idx n : topo->cell(c)) ++topo->node_cell_offsets[n + 1];
  for (idx n = 0; n < n_nodes; ++n) topo->node_cell_offsets[n + 1] += topo->node_cell_offsets[n];
  topo->node_cells.resize(topo->cell_nodes.size());
  {
    std::vector<idx> cursor(topo->node_cell_offsets.begin(), topo->node_cell_offsets.end() - 1);
    for (idx c = 0; c < nc; ++c)
      for (const idx n : topo->cell(c)) topo->node_cells[cursor[n]++] = c;
  }

  // node -> edges
  topo->node_edge_offsets.assign(n_nodes + 1, 0);
  for (const auto& ed : topo->edges) {
    ++topo->node_edge_offsets[ed.a + 1];
    ++topo->node_edge_offsets[ed.b + 1];
  }
  for (idx n = 0; n < n_nodes; ++n) topo->node_edge_offsets[n + 1] += topo->node_edge_offsets[n];
  topo->node_edges.resize(2 * topo->edges.size());
  {
    std::vector<idx> cursor(topo->node_edge_offsets.begin(), topo->node_edge_offsets.end() - 1);
    for (idx e = 0; e < static_cast<idx>(topo->edges.size()); ++e) {
      topo->node_edges[cursor[topo->edges[e].a]++] = e;
      topo->node_edges[cursor[topo->edges[e].b]++] = e;
    }
  }
  return topo;
}

struct PolyMesh {
  std::vector<Point2> coords;
  std::vector<NodeClass> node_class;
  double mesh_time{0.0};
  std::shared_ptr<const MeshTopology> topo;

  idx n_nodes() const { return static_cast<idx>(coords.size()); }
  idx n_cells() const { return topo->n_cells(); }
  std::span<const idx> cell(idx c) const { return topo->cell(c); }

  void cell_coords(idx c, std::vector<Point2>& buf) const {
    const auto loop = topo->cell(c);
    buf.resize(loop.size());
    for (std::size_t i = 0; i < loop.size(); ++i) buf[i] = coords[loop[i]];
  }
  const std::vector<MeshEdge>& edges() const { return topo->edges; }
  const std::vector<idx>& boundary_edge_ids() const { return topo->boundary_edge_ids; }
  bool node_on_boundary(idx n) const { return topo->node_on_boundary[n] != 0; }
};

inline PolyMesh make_mesh(std::vector<Point2> coords, const std::vector<std::vector<idx>>& loops,
                          std::vector<NodeClass> node_class = {}, double time = 0.0) {
  std::vector<idx> offsets{0};
  std::vector<idx> nodes;
  for (const auto& loop : loops) {
    nodes.insert(nodes.end(), loop.begin(), loop.end());
    offsets.push_back(static_cast<idx>(nodes.size()));
  }
  PolyMesh m;
  m.topo = build_topology(std::move(offsets), std::move(nodes), static_cast<idx>(coords.size()));
  m.coords = std::move(coords);
  m.mesh_time = time;
  if (node_class.empty()) {
    m.node_class.assign(m.coords.size(), NodeClass::Interior);
    for (idx n = 0; n < m.n_nodes(); ++n)
      if (m.node_on_boundary(n)) m.node_class[n] = NodeClass::MovingBoundary;
  } else {
    if (node_class.size() != m.coords.size()) throw MeshError("node_class length mismatch");
    m.node_class = std::move(node_class);
  }
  return m;
}

struct VelocityField {
  std::vector<double> vx, vy;
  Point2 at(idx n) const { return {vx[n], vy[n]}; }
};

struct MeshDiagnostics {
  bool ok{true};
  bool simple_cells{true};
  bool positive_areas{true};
  bool ccw_cells{true};
  bool edge_manifold{true};
  bool class_consistent{true};
  bool boundary_cycles{true};  // every boundary node meets exactly 2 boundary edges
  bool star_shaped{true};      // only meaningful when gamma_check was set
  idx n_nodes{0}, n_cells{0}, n_edges{0}, n_boundary_edges{0}, n_boundary_components{0};
  double min_area{0.0}, max_area{0.0}, total_area{0.0};
  double min_edge_ratio{0.0};  // min over cells of (shortest edge / cell diameter)
  std::vector<std::string> notes;
};

namespace detail {

struct UnionFind {
  std::vector<idx> parent;
  explicit UnionFind(idx n) : parent(n) {
    for (idx i = 0; i < n; ++i) parent[i] = i;
  }
  idx find(idx x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(idx a, idx b) { parent[find(a)] = find(b); }
};

} // namespace detail

inline MeshDiagnostics validate(const PolyMesh& mesh, bool gamma_check = false) {
  MeshDiagnostics d;
  d.n_nodes = mesh.n_nodes();
  d.n_cells = mesh.n_cells();
  d.n_edges = static_cast<idx>(mesh.edges().size());
  d.n_boundary_edges = static_cast<idx>(mesh.boundary_edge_ids().size());
  d.min_area = 1e300;
  d.max_area = -1e300;
  d.min_edge_ratio = 1e300;

  std::vector<Point2> pts;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    mesh.cell_coords(c, pts);
    const double area = shoelace_area(pts);
    d.total_area += area;
    d.min_area = std::min(d.min_area, area);
    d.max_area = std::max(d.max_area, area);
    if (area <= 0.0) {
      d.positive_areas = false;
      if (area < 0.0) d.ccw_cells = false;
      d.notes.push_back("cell " + std::to_string(c) + ": non-positive area " + std::to_string(area));
    }
    if (loop_has_crossing(pts)) {
      d.simple_cells = false;
      d.notes.push_back("cell " + std::to_string(c) + ": self-intersecting loop");
    }
    double diam = 0.0, min_edge = 1e300;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) diam = std::max(diam, dist(pts[i], pts[j]));
      min_edge = std::min(min_edge, dist(pts[i], pts[(i + 1) % pts.size()]));
    }
    if (diam > 0.0) d.min_edge_ratio = std::min(d.min_edge_ratio, min_edge / diam);
    if (gamma_check && area > 0.0) {
      // centroid-visibility proxy: the segment centroid->vertex must not cross any cell edge
      const auto k = pts.size();
      Point2 cen{0, 0};
      double cx = 0, cy = 0;
      for (std::size_t i = 0; i < k; ++i) {
        const double w = cross(pts[i], pts[(i + 1) % k]);
        cx += (pts[i].x + pts[(i + 1) % k].x) * w;
        cy += (pts[i].y + pts[(i + 1) % k].y) * w;
      }
      cen = {cx / (6.0 * area), cy / (6.0 * area)};
      for (std::size_t i = 0; i < k && d.star_shaped; ++i)
        for (std::size_t e = 0; e < k; ++e) {
          if (e == i || (e + 1) % k == i) continue;
          if (segments_cross(cen, pts[i], pts[e], pts[(e + 1) % k])) {
            d.star_shaped = false;
            d.notes.push_back("cell " + std::to_string(c) + ": vertex " + std::to_string(i) + " not centroid-visible");
            break;
          }
        }
    }
  }

  // edge-manifold holds by construction of the topology (build would have thrown);
  // re-derive the boundary-node degree profile and component count
  std::vector<idx> bdeg(mesh.n_nodes(), 0);
  detail::UnionFind uf(mesh.n_nodes());
  for (const idx e : mesh.boundary_edge_ids()) {
    const auto& ed = mesh.edges()[e];
    ++bdeg[ed.a];
    ++bdeg[ed.b];
    uf.unite(ed.a, ed.b);
  }
  std::vector<idx> roots;
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    if (bdeg[n] == 0) continue;
    if (bdeg[n] != 2) {
      d.boundary_cycles = false;
      d.notes.push_back("boundary node " + std::to_string(n) + " meets " + std::to_string(bdeg[n]) + " boundary edges");
    }
    const idx r = uf.find(n);
    if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
  }
  d.n_boundary_components = static_cast<idx>(roots.size());

  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    const bool on_b = mesh.node_on_boundary(n);
    const bool tagged_interior = mesh.node_class[n] == NodeClass::Interior;
    if (on_b == tagged_interior) {
      d.class_consistent = false;
      d.notes.push_back("node " + std::to_string(n) + ": class " + node_class_name(mesh.node_class[n]) +
                        (on_b ? " but on boundary" : " but interior"));
    }
  }

  d.ok = d.simple_cells && d.positive_areas && d.ccw_cells && d.edge_manifold && d.class_consistent;
  return d;
}

// Forward-Euler node displacement. Topology is shared, not copied. Throws on
// tangling, naming the first broken cell.
inline PolyMesh displace_nodes(const PolyMesh& mesh, const VelocityField& v, double dt) {
  PolyMesh out;
  out.topo = mesh.topo;
  out.node_class = mesh.node_class;
  out.mesh_time = mesh.mesh_time + dt;
  out.coords.resize(mesh.coords.size());
  for (idx n = 0; n < mesh.n_nodes(); ++n)
    out.coords[n] = {mesh.coords[n].x + dt * v.vx[n], mesh.coords[n].y + dt * v.vy[n]};

  std::vector<Point2> pts;
  for (idx c = 0; c < out.n_cells(); ++c) {
    out.cell_coords(c, pts);
    if (shoelace_area(pts) <= 0.0)
      throw MeshError("displace_nodes: cell " + std::to_string(c) + " tangled (non-positive area) at t=" +
                      std::to_string(out.mesh_time));
    if (loop_has_crossing(pts))
      throw MeshError("displace_nodes: cell " + std::to_string(c) + " tangled (self-intersection) at t=" +
                      std::to_string(out.mesh_time));
  }
  return out;
}

namespace detail {

inline std::vector<std::vector<idx>> loops_of(const MeshTopology& topo) {
  std::vector<std::vector<idx>> loops(topo.n_cells());
  for (idx c = 0; c < topo.n_cells(); ++c) {
    const auto span = topo.cell(c);
    loops[c].assign(span.begin(), span.end());
  }
  return loops;
}

inline void insert_after(std::vector<idx>& loop, idx i, idx j, idx node) {
  const auto k = static_cast<idx>(loop.size());
  for (idx e = 0; e < k; ++e) {
    const idx a = loop[e], b = loop[(e + 1) % k];
    if ((a == i && b == j) || (a == j && b == i)) {
      loop.insert(loop.begin() + e + 1, node);
      return;
    }
  }
  throw MeshError("edge (" + std::to_string(i) + "," + std::to_string(j) + ") not consecutive in cell loop");
}

// boundary -> interior reclassification when the full edge star of a node has
// become interior
inline void reclassify_if_buried(PolyMesh& mesh, std::span<const idx> candidates) {
  for (const idx n : candidates) {
    if (mesh.node_class[n] == NodeClass::Interior) continue;
    if (mesh.node_on_boundary(n)) continue;
    mesh.node_class[n] = NodeClass::Interior;
  }
}

} // namespace detail

// Splits edge (i,j) by a new node at `position`, which must lie strictly inside
// the segment (1e-9 relative tolerance; endpoint coincidence is rejected so
// zero-length edges can never be created here).
inline std::pair<PolyMesh, idx> insert_vertex_on_edge(const PolyMesh& mesh, idx i, idx j, Point2 position) {
  const idx e = mesh.topo->find_edge(i, j);
  if (e < 0) throw MeshError("insert_vertex_on_edge: no edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
  const Point2 a = mesh.coords[i], b = mesh.coords[j];
  const double len = dist(a, b);
  if (!point_on_segment(position, a, b, 1e-9))
    throw MeshError("insert_vertex_on_edge: position off segment (" + std::to_string(i) + "," + std::to_string(j) + ")");
  if (dist(position, a) <= 1e-9 * len || dist(position, b) <= 1e-9 * len)
    throw MeshError("insert_vertex_on_edge: position coincides with an endpoint of (" + std::to_string(i) + "," +
                    std::to_string(j) + ")");

  auto loops = detail::loops_of(*mesh.topo);
  const idx new_node = mesh.n_nodes();
  const auto& ed = mesh.edges()[e];
  detail::insert_after(loops[ed.cell0], i, j, new_node);
  if (ed.cell1 >= 0) detail::insert_after(loops[ed.cell1], i, j, new_node);

  PolyMesh out;
  out.coords = mesh.coords;
  out.coords.push_back(position);
  out.node_class = mesh.node_class;
  NodeClass cls = NodeClass::Interior;
  if (ed.cell1 < 0)
    cls = (mesh.node_class[i] == NodeClass::Interface && mesh.node_class[j] == NodeClass::Interface)
              ? NodeClass::Interface
              : NodeClass::MovingBoundary;
  out.node_class.push_back(cls);
  out.mesh_time = mesh.mesh_time;

  std::vector<idx> offsets{0};
  std::vector<idx> nodes;
  for (const auto& loop : loops) {
    nodes.insert(nodes.end(), loop.begin(), loop.end());
    offsets.push_back(static_cast<idx>(nodes.size()));
  }
  out.topo = build_topology(std::move(offsets), std::move(nodes), new_node + 1);
  return {std::move(out), new_node};
}

// Self-intersection landing: an existing boundary node is adopted as a vertex
// of the boundary edge (i,j) it has come to rest on. No new dofs.
inline PolyMesh merge_node_into_edge(const PolyMesh& mesh, idx node, idx i, idx j) {
  const idx e = mesh.topo->find_edge(i, j);
  if (e < 0) throw MeshError("merge_node_into_edge: no edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
  const auto& ed = mesh.edges()[e];
  if (!ed.boundary()) throw MeshError("merge_node_into_edge: edge is interior");
  if (!mesh.node_on_boundary(node)) throw MeshError("merge_node_into_edge: node " + std::to_string(node) + " not on boundary");
  for (const idx c : mesh.topo->cells_of_node(node))
    if (c == ed.cell0) throw MeshError("merge_node_into_edge: node already belongs to the receiving cell");
  if (!point_on_segment(mesh.coords[node], mesh.coords[i], mesh.coords[j], 1e-9))
    throw MeshError("merge_node_into_edge: node " + std::to_string(node) + " not on edge (" + std::to_string(i) + "," +
                    std::to_string(j) + ")");

  auto loops = detail::loops_of(*mesh.topo);
  detail::insert_after(loops[ed.cell0], i, j, node);

  PolyMesh out;
  out.coords = mesh.coords;
  out.node_class = mesh.node_class;
  out.mesh_time = mesh.mesh_time;
  std::vector<idx> offsets{0};
  std::vector<idx> nodes;
  for (const auto& loop : loops) {
    nodes.insert(nodes.end(), loop.begin(), loop.end());
    offsets.push_back(static_cast<idx>(nodes.size()));
  }
  out.topo = build_topology(std::move(offsets), std::move(nodes), mesh.n_nodes());

  const idx affected[] = {node, i, j};
  detail::reclassify_if_buried(out, affected);
  return out;
}

// Detaches a boundary vertex that belongs to exactly one cell. The node id is
// not recycled: the entry stays in the coordinate array as an unused dof
// (classed Interior) so existing per-node data keeps its indexing; callers
// must exclude zero-mass dofs from solves.
inline PolyMesh remove_boundary_vertex(const PolyMesh& mesh, idx node) {
  const auto cells = mesh.topo->cells_of_node(node);
  if (cells.size() != 1)
    throw MeshError("remove_boundary_vertex: node " + std::to_string(node) + " belongs to " +
                    std::to_string(cells.size()) + " cells");
  if (!mesh.node_on_boundary(node))
    throw MeshError("remove_boundary_vertex: node " + std::to_string(node) + " is interior");

  auto loops = detail::loops_of(*mesh.topo);
  auto& loop = loops[cells[0]];
  if (loop.size() < 4)
    throw MeshError("remove_boundary_vertex: cell " + std::to_string(cells[0]) +
                    " would drop below 3 vertices");
  loop.erase(std::find(loop.begin(), loop.end(), node));

  PolyMesh out;
  out.coords = mesh.coords;
  out.node_class = mesh.node_class;
  out.node_class[node] = NodeClass::Interior;
  out.mesh_time = mesh.mesh_time;
  std::vector<idx> offsets{0};
  std::vector<idx> nodes;
  for (const auto& l : loops) {
    nodes.insert(nodes.end(), l.begin(), l.end());
    offsets.push_back(static_cast<idx>(nodes.size()));
  }
  out.topo = build_topology(std::move(offsets), std::move(nodes), mesh.n_nodes());
  return out;
}

// Number of connected components of the boundary-edge graph.
inline idx boundary_component_count(const PolyMesh& mesh) {
  detail::UnionFind uf(mesh.n_nodes());
  for (const idx e : mesh.boundary_edge_ids()) {
    const auto& ed = mesh.edges()[e];
    uf.unite(ed.a, ed.b);
  }
  std::vector<idx> roots;
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    if (!mesh.node_on_boundary(n)) continue;
    const idx r = uf.find(n);
    if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
  }
  return static_cast<idx>(roots.size());
}

} // namespace mmvem

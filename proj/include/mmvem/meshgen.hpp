#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "mmvem/errors.hpp"
#include "mmvem/geometry.hpp"
#include "mmvem/mesh.hpp"
#include "mmvem/rng.hpp"

namespace mmvem {

struct GenSpec {
  enum class Kind { voronoi, cvt, grid };
  enum class Domain { disc, square, rectangle };

  Kind kind = Kind::voronoi;
  int target_cells = 64;
  Domain domain = Domain::disc;
  double r0 = 0.5;     // disc radius
  double side = 1.0;   // square side, centered at the origin
  double width = 1.0;  // rectangle, centered at the origin
  double height = 1.0;
  std::uint64_t rng_seed = 1;
  int lloyd_iters = 0; // cvt only
};

namespace meshdetail {

inline bool point_in_convex(Point2 p, const std::vector<Point2>& poly) {
  const std::size_t k = poly.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (cross(poly[(i + 1) % k] - poly[i], p - poly[i]) < 0.0) return false;
  }
  return true;
}

// Keep the side of the line through `mid` where (x - mid) . dir <= 0.
inline void clip_halfplane(const std::vector<Point2>& poly, Point2 mid, Point2 dir,
                           std::vector<Point2>& out) {
  out.clear();
  const std::size_t k = poly.size();
  for (std::size_t i = 0; i < k; ++i) {
    const Point2 a = poly[i];
    const Point2 b = poly[(i + 1) % k];
    const double da = dot(a - mid, dir);
    const double db = dot(b - mid, dir);
    if (da <= 0.0) out.push_back(a);
    // strict sign change only: a crossing at d == 0 is already a vertex
    if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0)) {
      const double t = da / (da - db);
      out.push_back(a + (b - a) * t);
    }
  }
}

inline std::vector<Point2> clip_convex(std::vector<Point2> subject,
                                       const std::vector<Point2>& clip) {
  std::vector<Point2> tmp;
  const std::size_t k = clip.size();
  for (std::size_t i = 0; i < k && subject.size() >= 3; ++i) {
    const Point2 a = clip[i];
    const Point2 b = clip[(i + 1) % k];
    const Point2 d = b - a;
    // inside means left of a->b; same predicate as clip_halfplane with the
    // inward rotated direction
    clip_halfplane(subject, a, Point2{d.y, -d.x}, tmp);
    subject.swap(tmp);
  }
  if (subject.size() < 3) subject.clear();
  return subject;
}

// Merges coincident vertices produced independently by neighboring cells.
class VertexWelder {
public:
  explicit VertexWelder(double tol) : tol_(tol) {}

  idx add(Point2 p) {
    const std::int64_t qx = static_cast<std::int64_t>(std::llround(p.x / tol_));
    const std::int64_t qy = static_cast<std::int64_t>(std::llround(p.y / tol_));
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = buckets_.find(key(qx + dx, qy + dy));
        if (it == buckets_.end()) continue;
        for (idx n : it->second)
          if (dist(coords_[static_cast<std::size_t>(n)], p) <= tol_) return n;
      }
    const idx n = static_cast<idx>(coords_.size());
    coords_.push_back(p);
    buckets_[key(qx, qy)].push_back(n);
    return n;
  }

  const std::vector<Point2>& coords() const { return coords_; }

private:
  static std::uint64_t key(std::int64_t qx, std::int64_t qy) {
    return static_cast<std::uint64_t>(qx) * 0x9e3779b97f4a7c15ull ^
           static_cast<std::uint64_t>(qy);
  }

  double tol_;
  std::vector<Point2> coords_;
  std::unordered_map<std::uint64_t, std::vector<idx>> buckets_;
};

inline void dedupe_loop(std::vector<idx>& loop) {
  std::vector<idx> out;
  for (idx n : loop) {
    if (out.empty() || out.back() != n) out.push_back(n);
  }
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  loop.swap(out);
}

// Drops nodes referenced by no loop and renumbers the rest.
inline std::vector<Point2> compact_nodes(const std::vector<Point2>& coords,
                                         std::vector<std::vector<idx>>& loops) {
  std::vector<idx> remap(coords.size(), -1);
  std::vector<Point2> out;
  for (auto& loop : loops)
    for (idx& n : loop) {
      if (remap[static_cast<std::size_t>(n)] < 0) {
        remap[static_cast<std::size_t>(n)] = static_cast<idx>(out.size());
        out.push_back(coords[static_cast<std::size_t>(n)]);
      }
      n = remap[static_cast<std::size_t>(n)];
    }
  return out;
}

inline std::vector<Point2> domain_polygon(const GenSpec& spec) {
  switch (spec.domain) {
  case GenSpec::Domain::disc: {
    const int n =
        std::max(64, static_cast<int>(std::ceil(4.0 * std::sqrt(double(spec.target_cells)))));
    std::vector<Point2> poly(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * M_PI * i / n;
      poly[static_cast<std::size_t>(i)] = {spec.r0 * std::cos(a), spec.r0 * std::sin(a)};
    }
    return poly;
  }
  case GenSpec::Domain::square: {
    const double s = spec.side / 2.0;
    return {{-s, -s}, {s, -s}, {s, s}, {-s, s}};
  }
  case GenSpec::Domain::rectangle: {
    const double w = spec.width / 2.0, h = spec.height / 2.0;
    return {{-w, -h}, {w, -h}, {w, h}, {-w, h}};
  }
  }
  throw ConfigError("unknown mesh domain");
}

struct SeedBins {
  double x0 = 0, y0 = 0, bin = 1;
  int nx = 1, ny = 1;
  std::vector<std::vector<int>> cells;

  void build(const std::vector<Point2>& seeds, double bin_size, Point2 lo, Point2 hi) {
    bin = bin_size;
    x0 = lo.x;
    y0 = lo.y;
    nx = std::max(1, static_cast<int>(std::ceil((hi.x - lo.x) / bin)) + 1);
    ny = std::max(1, static_cast<int>(std::ceil((hi.y - lo.y) / bin)) + 1);
    cells.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), {});
    for (int s = 0; s < static_cast<int>(seeds.size()); ++s)
      cells[slot(seeds[static_cast<std::size_t>(s)])].push_back(s);
  }

  std::size_t slot(Point2 p) const {
    const int ix = std::clamp(static_cast<int>((p.x - x0) / bin), 0, nx - 1);
    const int iy = std::clamp(static_cast<int>((p.y - y0) / bin), 0, ny - 1);
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) +
           static_cast<std::size_t>(ix);
  }
};

// Voronoi cell of seed i clipped to the domain: the domain polygon cut by
// the bisector of every near enough neighbor. Neighbors are visited by
// expanding rings of spatial bins and the sweep stops once no unvisited seed
// can be closer than twice the current max vertex distance.
inline std::vector<Point2> clipped_cell(int i, const std::vector<Point2>& seeds,
                                        const SeedBins& bins,
                                        const std::vector<Point2>& domain) {
  const Point2 p = seeds[static_cast<std::size_t>(i)];
  std::vector<Point2> cell = domain;
  std::vector<Point2> tmp;

  const int cx = std::clamp(static_cast<int>((p.x - bins.x0) / bins.bin), 0, bins.nx - 1);
  const int cy = std::clamp(static_cast<int>((p.y - bins.y0) / bins.bin), 0, bins.ny - 1);
  const int max_ring = std::max(bins.nx, bins.ny);

  auto max_vertex_dist = [&]() {
    double d = 0.0;
    for (const Point2& v : cell) d = std::max(d, dist(v, p));
    return d;
  };

  for (int ring = 0; ring <= max_ring; ++ring) {
    if (ring > 1 && (ring - 1) * bins.bin > 2.0 * max_vertex_dist()) break;
    for (int dy = -ring; dy <= ring; ++dy)
      for (int dx = -ring; dx <= ring; ++dx) {
        if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
        const int bx = cx + dx, by = cy + dy;
        if (bx < 0 || bx >= bins.nx || by < 0 || by >= bins.ny) continue;
        for (int j : bins.cells[static_cast<std::size_t>(by) *
                                    static_cast<std::size_t>(bins.nx) +
                                static_cast<std::size_t>(bx)]) {
          if (j == i) continue;
          const Point2 q = seeds[static_cast<std::size_t>(j)];
          clip_halfplane(cell, Point2{0.5 * (p.x + q.x), 0.5 * (p.y + q.y)}, q - p, tmp);
          cell.swap(tmp);
          if (cell.size() < 3) return {};
        }
      }
  }
  return cell;
}

inline double loop_area(const std::vector<idx>& loop, const std::vector<Point2>& coords) {
  double acc = 0.0;
  const std::size_t k = loop.size();
  for (std::size_t i = 0; i < k; ++i) {
    const Point2 a = coords[static_cast<std::size_t>(loop[i])];
    const Point2 b = coords[static_cast<std::size_t>(loop[(i + 1) % k])];
    acc += cross(a, b);
  }
  return 0.5 * acc;
}

// Splices loop `frag` into a neighboring loop across their longest shared
// edge. Fragment vertices survive as hanging nodes of the union.
inline bool merge_fragment(std::size_t frag, std::vector<std::vector<idx>>& loops,
                           const std::vector<Point2>& coords) {
  const auto& f = loops[frag];
  const std::size_t kf = f.size();

  std::size_t best_loop = SIZE_MAX, best_i = 0, best_j = 0;
  double best_len = -1.0;
  for (std::size_t li = 0; li < loops.size(); ++li) {
    if (li == frag) continue;
    const auto& r = loops[li];
    const std::size_t kr = r.size();
    for (std::size_t i = 0; i < kr; ++i) {
      const idx a = r[i], b = r[(i + 1) % kr];
      for (std::size_t j = 0; j < kf; ++j) {
        if (f[j] == b && f[(j + 1) % kf] == a) {
          const double len = dist(coords[static_cast<std::size_t>(a)],
                                  coords[static_cast<std::size_t>(b)]);
          if (len > best_len) {
            best_len = len;
            best_loop = li;
            best_i = i;
            best_j = j;
          }
        }
      }
    }
  }
  if (best_loop == SIZE_MAX) return false;

  const auto& r = loops[best_loop];
  std::vector<idx> merged;
  merged.reserve(r.size() + kf - 2);
  // walk the receiver up to and including a, then the fragment interior
  // from a to b the long way, then the rest of the receiver from b on
  for (std::size_t s = 0; s <= best_i; ++s) merged.push_back(r[s]);
  for (std::size_t s = 2; s < kf; ++s) merged.push_back(f[(best_j + s) % kf]);
  for (std::size_t s = best_i + 1; s < r.size(); ++s) merged.push_back(r[s]);
  dedupe_loop(merged);

  loops[best_loop] = std::move(merged);
  loops.erase(loops.begin() + static_cast<std::ptrdiff_t>(frag));
  return true;
}

inline PolyMesh build_from_cells(const std::vector<std::vector<Point2>>& cells, double weld_tol,
                                 double fragment_area = -1.0) {
  VertexWelder welder(weld_tol);
  std::vector<std::vector<idx>> loops;
  for (const auto& poly : cells) {
    if (poly.size() < 3) continue;
    std::vector<idx> loop;
    loop.reserve(poly.size());
    for (const Point2& v : poly) loop.push_back(welder.add(v));
    dedupe_loop(loop);
    if (loop.size() < 3) throw MeshError("generated cell collapsed during welding");
    loops.push_back(std::move(loop));
  }
  if (loops.empty()) throw MeshError("generation produced no cells");

  std::vector<Point2> coords = welder.coords();
  if (fragment_area > 0.0) {
    bool again = true;
    while (again) {
      again = false;
      for (std::size_t li = 0; li < loops.size(); ++li) {
        if (loop_area(loops[li], coords) >= fragment_area) continue;
        if (loops.size() > 1 && merge_fragment(li, loops, coords)) {
          again = true;
          break;
        }
      }
    }
    coords = compact_nodes(coords, loops);
  }

  return make_mesh(coords, loops);
}

} // namespace meshdetail

// Average cell diameter, the mesh-size measure used for step control.
inline double mean_cell_diameter(const PolyMesh& mesh) {
  std::vector<Point2> buf;
  PolygonGeom geom;
  double acc = 0.0;
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    mesh.cell_coords(c, buf);
    polygon_geom(buf, geom);
    acc += geom.diameter;
  }
  return acc / std::max<idx>(1, mesh.n_cells());
}

// seed_centroid_gap, when given, receives the max distance between a final
// seed and its cell centroid (the Lloyd convergence measure; 0 for grid).
inline PolyMesh generate(const GenSpec& spec, double* seed_centroid_gap = nullptr) {
  if (seed_centroid_gap) *seed_centroid_gap = 0.0;
  if (spec.target_cells < 4) throw ConfigError("target cell count must be at least 4");
  if (spec.r0 <= 0.0 || spec.side <= 0.0 || spec.width <= 0.0 || spec.height <= 0.0)
    throw ConfigError("domain sizes must be positive");
  if (spec.lloyd_iters < 0) throw ConfigError("relaxation iteration count must be nonnegative");

  const std::vector<Point2> domain = meshdetail::domain_polygon(spec);
  PolygonGeom dg;
  polygon_geom(domain, dg);
  const double spacing = std::sqrt(dg.area / spec.target_cells);
  const double weld_tol = 1e-7 * spacing;

  if (spec.kind == GenSpec::Kind::grid) {
    std::vector<std::vector<Point2>> cells;
    double sx = spacing, sy = spacing, x0, y0;
    int nx, ny;
    if (spec.domain == GenSpec::Domain::disc) {
      sx = sy = spec.r0 * std::sqrt(M_PI / spec.target_cells);
      x0 = -spec.r0;
      y0 = -spec.r0;
      nx = ny = static_cast<int>(std::ceil(2.0 * spec.r0 / sx));
    } else {
      const double w = spec.domain == GenSpec::Domain::square ? spec.side : spec.width;
      const double h = spec.domain == GenSpec::Domain::square ? spec.side : spec.height;
      nx = std::max(1, static_cast<int>(std::lround(w / spacing)));
      ny = std::max(1, static_cast<int>(std::lround(h / spacing)));
      sx = w / nx;
      sy = h / ny;
      x0 = -w / 2.0;
      y0 = -h / 2.0;
    }
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        std::vector<Point2> sq{{x0 + i * sx, y0 + j * sy},
                               {x0 + (i + 1) * sx, y0 + j * sy},
                               {x0 + (i + 1) * sx, y0 + (j + 1) * sy},
                               {x0 + i * sx, y0 + (j + 1) * sy}};
        auto clipped = meshdetail::clip_convex(std::move(sq), domain);
        if (clipped.size() >= 3 && std::abs(shoelace_area(clipped)) > 1e-12 * sx * sy)
          cells.push_back(std::move(clipped));
      }
    PolyMesh mesh = meshdetail::build_from_cells(cells, weld_tol, 1e-3 * sx * sy);
    const auto diag = validate(mesh);
    if (!diag.ok) throw MeshError("grid generation produced an invalid mesh");
    return mesh;
  }

  const int iters = spec.kind == GenSpec::Kind::cvt ? spec.lloyd_iters : 0;
  Point2 lo = domain[0], hi = domain[0];
  for (const Point2& v : domain) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y)};
  }

  for (int attempt = 0; attempt < 5; ++attempt) {
    Rng rng(spec.rng_seed + 0x9e3779b9ull * static_cast<std::uint64_t>(attempt));
    std::vector<Point2> seeds;
    seeds.reserve(static_cast<std::size_t>(spec.target_cells));
    while (static_cast<int>(seeds.size()) < spec.target_cells) {
      const Point2 p{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y)};
      if (meshdetail::point_in_convex(p, domain)) seeds.push_back(p);
    }

    try {
      meshdetail::SeedBins bins;
      std::vector<std::vector<Point2>> cells(seeds.size());
      for (int it = 0; it <= iters; ++it) {
        bins.build(seeds, spacing, lo, hi);
        for (int i = 0; i < static_cast<int>(seeds.size()); ++i) {
          cells[static_cast<std::size_t>(i)] = meshdetail::clipped_cell(i, seeds, bins, domain);
          if (cells[static_cast<std::size_t>(i)].size() < 3)
            throw MeshError("empty cell during relaxation");
        }
        if (it == iters) break;
        PolygonGeom geom;
        for (std::size_t i = 0; i < seeds.size(); ++i) {
          polygon_geom(cells[i], geom);
          seeds[i] = geom.centroid;
        }
      }
      if (seed_centroid_gap) {
        PolygonGeom geom;
        double gap = 0.0;
        for (std::size_t i = 0; i < seeds.size(); ++i) {
          polygon_geom(cells[i], geom);
          gap = std::max(gap, dist(seeds[i], geom.centroid));
        }
        *seed_centroid_gap = gap;
      }
      PolyMesh mesh = meshdetail::build_from_cells(cells, weld_tol);
      const auto diag = validate(mesh);
      if (!diag.ok) throw MeshError("invalid generated mesh");
      return mesh;
    } catch (const Error&) {
      if (attempt == 4) throw;
    }
  }
  throw MeshError("mesh generation failed after seed retries");
}

// Regular polygon approximation of a circular obstacle, counter-clockwise.
inline std::vector<Point2> circle_obstacle(Point2 center, double radius, int n_sides) {
  if (radius <= 0.0) throw ConfigError("obstacle radius must be positive");
  if (n_sides < 3) throw ConfigError("obstacle needs at least 3 sides");
  std::vector<Point2> loop(static_cast<std::size_t>(n_sides));
  for (int i = 0; i < n_sides; ++i) {
    const double a = 2.0 * M_PI * i / n_sides;
    loop[static_cast<std::size_t>(i)] = {center.x + radius * std::cos(a),
                                         center.y + radius * std::sin(a)};
  }
  return loop;
}

// Two vertical contact walls for the band test. Each wall is a thin closed
// box outside the gas region whose facing side carries vertices at every
// multiple of 1/n_intervals in y, except those overlapping the initial gas
// support |y| <= 0.5; the walls span y in [-1, 1].
inline std::vector<std::vector<Point2>> plane_walls(double x_left, double x_right,
                                                    int n_intervals) {
  if (!(x_left < x_right)) throw ConfigError("wall abscissas must satisfy left < right");
  if (n_intervals < 2) throw ConfigError("wall discretization needs at least 2 intervals");
  const double th = 0.05;
  const double h = 1.0 / n_intervals;

  std::vector<double> ys; // ascending interior vertices of a facing side
  for (int k = -n_intervals + 1; k < n_intervals; ++k) {
    const double y = k * h;
    if (std::abs(y) > 0.5 + 1e-12) ys.push_back(y);
  }

  std::vector<Point2> right;
  right.push_back({x_right, -1.0});
  right.push_back({x_right + th, -1.0});
  right.push_back({x_right + th, 1.0});
  right.push_back({x_right, 1.0});
  for (auto it = ys.rbegin(); it != ys.rend(); ++it) right.push_back({x_right, *it});

  std::vector<Point2> left;
  left.push_back({x_left, 1.0});
  left.push_back({x_left - th, 1.0});
  left.push_back({x_left - th, -1.0});
  left.push_back({x_left, -1.0});
  for (double y : ys) left.push_back({x_left, y});

  return {std::move(left), std::move(right)};
}

// Rigid shift of every node; topology and classes are untouched.
inline PolyMesh translated(PolyMesh mesh, Point2 shift) {
  for (Point2& p : mesh.coords) p = {p.x + shift.x, p.y + shift.y};
  return mesh;
}

// Disjoint union: appends the nodes and cells of `b` after those of `a`,
// shifting b's connectivity. The parts share no nodes, so the result has
// several boundary components; callers must ensure the parts do not overlap
// geometrically.
inline PolyMesh disjoint_union(const PolyMesh& a, const PolyMesh& b) {
  std::vector<Point2> coords = a.coords;
  coords.insert(coords.end(), b.coords.begin(), b.coords.end());
  std::vector<NodeClass> classes = a.node_class;
  classes.insert(classes.end(), b.node_class.begin(), b.node_class.end());

  const idx shift = a.n_nodes();
  std::vector<std::vector<idx>> loops;
  loops.reserve(static_cast<std::size_t>(a.n_cells() + b.n_cells()));
  for (idx c = 0; c < a.n_cells(); ++c) {
    const auto loop = a.cell(c);
    loops.emplace_back(loop.begin(), loop.end());
  }
  for (idx c = 0; c < b.n_cells(); ++c) {
    const auto loop = b.cell(c);
    auto& out = loops.emplace_back(loop.begin(), loop.end());
    for (idx& n : out) n += shift;
  }
  return make_mesh(std::move(coords), loops, std::move(classes), a.mesh_time);
}

} // namespace mmvem

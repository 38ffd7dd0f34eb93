#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mmvem/errors.hpp"

namespace mmvem {

struct Point2 {
  double x{0.0}, y{0.0};

  Point2 operator+(Point2 o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(Point2 o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
  Point2& operator+=(Point2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
};

inline Point2 operator*(double s, Point2 p) { return p * s; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double dist(Point2 a, Point2 b) { return norm(b - a); }

// Twice the signed area of triangle (a,b,c); positive for CCW.
inline double orient2(Point2 a, Point2 b, Point2 c) { return cross(b - a, c - a); }

struct PolygonGeom {
  double area{0.0};
  double diameter{0.0};
  double perimeter{0.0};
  Point2 centroid{};
  std::vector<double> edge_len;     // edge i runs v[i] -> v[i+1 mod k]
  std::vector<Point2> edge_normal;  // unit outward normal; {0,0} for null edges
};

// Integrals over the cell of the scaled monomials {1, xi, eta, xi^2, xi*eta, eta^2},
// xi = (x - cx)/h, eta = (y - cy)/h.
struct MonomialIntegrals {
  double one{0.0}, xi{0.0}, eta{0.0}, xi2{0.0}, xieta{0.0}, eta2{0.0};
};

inline double shoelace_area(std::span<const Point2> v) {
  const std::size_t k = v.size();
  double twice = 0.0;
  for (std::size_t i = 0; i < k; ++i) twice += cross(v[i], v[(i + 1) % k]);
  return 0.5 * twice;
}

// Strict interior crossing between two non-adjacent edges. Shared endpoints and
// collinear touch do not count; hanging (collinear) vertices are legal cells.
inline bool segments_cross(Point2 p1, Point2 p2, Point2 p3, Point2 p4) {
  const double d1 = orient2(p3, p4, p1);
  const double d2 = orient2(p3, p4, p2);
  const double d3 = orient2(p1, p2, p3);
  const double d4 = orient2(p1, p2, p4);
  return ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) &&
         ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0));
}

// Crossing test for a cell loop. Null edges (coincident consecutive vertices)
// are skipped: they appear transiently during pivot coalescence.
inline bool loop_has_crossing(std::span<const Point2> v) {
  const std::size_t k = v.size();
  for (std::size_t i = 0; i < k; ++i) {
    const Point2 a1 = v[i], a2 = v[(i + 1) % k];
    if (a1.x == a2.x && a1.y == a2.y) continue;
    for (std::size_t j = i + 1; j < k; ++j) {
      if ((j + 1) % k == i || (i + 1) % k == j) continue;  // adjacent
      const Point2 b1 = v[j], b2 = v[(j + 1) % k];
      if (b1.x == b2.x && b1.y == b2.y) continue;
      if (segments_cross(a1, a2, b1, b2)) return true;
    }
  }
  return false;
}

inline bool loop_is_simple(std::span<const Point2> v) { return !loop_has_crossing(v); }

// Area, centroid, diameter, edge lengths and unit outward normals of a CCW
// simple polygon. Fills `out` in place so per-step callers reuse capacity.
inline void polygon_geom(std::span<const Point2> v, PolygonGeom& out) {
  const std::size_t k = v.size();
  if (k < 3) throw GeometryError("polygon_geom: vertex count " + std::to_string(k) + " < 3");

  double diam = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) diam = std::max(diam, dist(v[i], v[j]));

  const double area = shoelace_area(v);
  if (area < 0.0) throw GeometryError("polygon_geom: clockwise vertex loop (area " + std::to_string(area) + ")");
  if (area <= 1e-14 * diam * diam)
    throw GeometryError("polygon_geom: degenerate cell, area " + std::to_string(area) + " below 1e-14*diam^2");
  if (loop_has_crossing(v)) throw GeometryError("polygon_geom: self-intersecting vertex loop");

  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const Point2 a = v[i], b = v[(i + 1) % k];
    const double w = cross(a, b);
    cx += (a.x + b.x) * w;
    cy += (a.y + b.y) * w;
  }
  out.area = area;
  out.diameter = diam;
  out.centroid = {cx / (6.0 * area), cy / (6.0 * area)};
  out.edge_len.resize(k);
  out.edge_normal.resize(k);
  out.perimeter = 0.0;
  const double null_edge = 1e-14 * diam;
  for (std::size_t i = 0; i < k; ++i) {
    const Point2 d = v[(i + 1) % k] - v[i];
    const double len = norm(d);
    out.edge_len[i] = len;
    out.edge_normal[i] = (len > null_edge) ? Point2{d.y / len, -d.x / len} : Point2{0.0, 0.0};
    out.perimeter += len;
  }
}

inline PolygonGeom polygon_geom(std::span<const Point2> v) {
  PolygonGeom g;
  polygon_geom(v, g);
  return g;
}

// Exact integrals of the scaled monomials by signed fan decomposition from the
// centroid: Green's theorem makes the signed-triangle sum exact for any simple
// polygon, star-shaped or not. Midpoint rule on each triangle is exact to
// degree 2.
inline MonomialIntegrals monomial_integrals(std::span<const Point2> v, Point2 centroid, double diameter) {
  const std::size_t k = v.size();
  if (k < 3) throw GeometryError("monomial_integrals: vertex count < 3");
  if (!(diameter > 0.0)) throw GeometryError("monomial_integrals: non-positive diameter");
  const double inv_h = 1.0 / diameter;
  MonomialIntegrals m;
  for (std::size_t i = 0; i < k; ++i) {
    const Point2 a = v[i], b = v[(i + 1) % k];
    const double ja = 0.5 * cross(a - centroid, b - centroid);  // signed triangle area
    if (ja == 0.0) continue;
    // scaled coordinates of the triangle (centroid, a, b) edge midpoints
    const double ax = (a.x - centroid.x) * inv_h, ay = (a.y - centroid.y) * inv_h;
    const double bx = (b.x - centroid.x) * inv_h, by = (b.y - centroid.y) * inv_h;
    const double m1x = 0.5 * ax, m1y = 0.5 * ay;              // mid(c,a)
    const double m2x = 0.5 * (ax + bx), m2y = 0.5 * (ay + by);  // mid(a,b)
    const double m3x = 0.5 * bx, m3y = 0.5 * by;              // mid(b,c)
    const double w = ja / 3.0;
    m.one += ja;
    m.xi += w * (m1x + m2x + m3x);
    m.eta += w * (m1y + m2y + m3y);
    m.xi2 += w * (m1x * m1x + m2x * m2x + m3x * m3x);
    m.xieta += w * (m1x * m1y + m2x * m2y + m3x * m3y);
    m.eta2 += w * (m1y * m1y + m2y * m2y + m3y * m3y);
  }
  return m;
}

// Whether p lies on segment [a,b], tolerance relative to the segment length.
inline bool point_on_segment(Point2 p, Point2 a, Point2 b, double tol = 1e-9) {
  const Point2 d = b - a;
  const double len2 = dot(d, d);
  if (len2 == 0.0) return dist(p, a) <= tol;
  const double len = std::sqrt(len2);
  const double off = std::abs(cross(d, p - a)) / len;  // perpendicular distance
  if (off > tol * len) return false;
  const double s = dot(p - a, d) / len2;
  return s >= -tol && s <= 1.0 + tol;
}

// Parameter of the projection of p onto the line through a,b (0 at a, 1 at b).
inline double segment_param(Point2 p, Point2 a, Point2 b) {
  const Point2 d = b - a;
  const double len2 = dot(d, d);
  return len2 == 0.0 ? 0.0 : dot(p - a, d) / len2;
}

} // namespace mmvem

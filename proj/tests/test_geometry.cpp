#include "mmvem/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "testutil.hpp"

using namespace mmvem;

namespace {

std::vector<Point2> unit_square() { return {{0, 0}, {1, 0}, {1, 1}, {0, 1}}; }

std::vector<Point2> regular_hexagon() {
  std::vector<Point2> v;
  for (int k = 0; k < 6; ++k) {
    const double a = M_PI / 3.0 * k;
    v.push_back({std::cos(a), std::sin(a)});
  }
  return v;
}

} // namespace

TEST(PolygonGeom, UnitSquare) {
  const auto g = polygon_geom(unit_square());
  EXPECT_NEAR(g.area, 1.0, 1e-15);
  EXPECT_NEAR(g.centroid.x, 0.5, 1e-15);
  EXPECT_NEAR(g.centroid.y, 0.5, 1e-15);
  EXPECT_NEAR(g.diameter, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(g.perimeter, 4.0, 1e-15);
  ASSERT_EQ(g.edge_normal.size(), 4u);
  EXPECT_NEAR(g.edge_normal[0].x, 0.0, 1e-15);
  EXPECT_NEAR(g.edge_normal[0].y, -1.0, 1e-15);
  EXPECT_NEAR(g.edge_normal[1].x, 1.0, 1e-15);
  EXPECT_NEAR(g.edge_normal[2].y, 1.0, 1e-15);
  EXPECT_NEAR(g.edge_normal[3].x, -1.0, 1e-15);
  for (double len : g.edge_len) EXPECT_NEAR(len, 1.0, 1e-15);
}

TEST(PolygonGeom, ReferenceTriangle) {
  const std::vector<Point2> tri{{0, 0}, {1, 0}, {0, 1}};
  const auto g = polygon_geom(tri);
  EXPECT_NEAR(g.area, 0.5, 1e-15);
  EXPECT_NEAR(g.centroid.x, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.centroid.y, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.diameter, std::sqrt(2.0), 1e-15);
}

TEST(PolygonGeom, RegularHexagonArea) {
  const auto g = polygon_geom(regular_hexagon());
  EXPECT_NEAR(g.area, 3.0 * std::sqrt(3.0) / 2.0, 1e-13);  // 2.598076211353316
  EXPECT_NEAR(g.diameter, 2.0, 1e-15);
  EXPECT_NEAR(g.centroid.x, 0.0, 1e-15);
  EXPECT_NEAR(g.centroid.y, 0.0, 1e-15);
}

TEST(PolygonGeom, UnitNormals) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto poly = testutil::random_polygon(rng, 3 + static_cast<int>(rng.below(8)));
    const auto g = polygon_geom(poly);
    for (const auto& n : g.edge_normal) EXPECT_NEAR(norm(n), 1.0, 1e-12);
    // outward w.r.t. the star center the generator guarantees
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point2 mid = 0.5 * (poly[i] + poly[(i + 1) % poly.size()]);
      EXPECT_GT(dot(g.edge_normal[i], mid), 0.0);
    }
  }
}

TEST(PolygonGeom, RejectsBadInput) {
  EXPECT_THROW(polygon_geom(std::vector<Point2>{{0, 0}, {1, 0}}), GeometryError);
  // clockwise square
  EXPECT_THROW(polygon_geom(std::vector<Point2>{{0, 0}, {0, 1}, {1, 1}, {1, 0}}), GeometryError);
  // bow-tie
  EXPECT_THROW(polygon_geom(std::vector<Point2>{{0, 0}, {1, 1}, {1, 0}, {0, 1}}), GeometryError);
  // collinear sliver
  EXPECT_THROW(polygon_geom(std::vector<Point2>{{0, 0}, {1, 0}, {2, 0}}), GeometryError);
  // near-degenerate: area below 1e-14 * diam^2
  EXPECT_THROW(polygon_geom(std::vector<Point2>{{0, 0}, {1, 0}, {0.5, 1e-16}}), GeometryError);
}

TEST(PolygonGeom, ShoelaceReversalFlipsSign) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto poly = testutil::random_polygon(rng, 3 + static_cast<int>(rng.below(7)));
    const double a = shoelace_area(poly);
    std::reverse(poly.begin(), poly.end());
    EXPECT_NEAR(shoelace_area(poly), -a, 1e-14 * std::abs(a) + 1e-300);
  }
}

TEST(MonomialIntegrals, UnitSquareFrozenValues) {
  const auto sq = unit_square();
  const auto g = polygon_geom(sq);
  const auto m = monomial_integrals(sq, g.centroid, g.diameter);
  EXPECT_NEAR(m.one, 1.0, 1e-14);
  EXPECT_NEAR(m.xi, 0.0, 1e-14);
  EXPECT_NEAR(m.eta, 0.0, 1e-14);
  EXPECT_NEAR(m.xi2, 1.0 / 24.0, 1e-14);  // (1/12) / h^2 with h = sqrt(2)
  EXPECT_NEAR(m.xieta, 0.0, 1e-14);
  EXPECT_NEAR(m.eta2, 1.0 / 24.0, 1e-14);
}

TEST(MonomialIntegrals, RectangleAndTriangle) {
  const std::vector<Point2> rect{{0, 0}, {2, 0}, {2, 1}, {0, 1}};
  auto g = polygon_geom(rect);
  auto m = monomial_integrals(rect, g.centroid, g.diameter);
  EXPECT_NEAR(m.one, 2.0, 1e-13);
  EXPECT_NEAR(m.xi2, 2.0 / 15.0, 1e-13);   // (2/3) / 5
  EXPECT_NEAR(m.eta2, 1.0 / 30.0, 1e-13);  // (1/6) / 5
  EXPECT_NEAR(m.xieta, 0.0, 1e-14);

  const std::vector<Point2> tri{{0, 0}, {1, 0}, {0, 1}};
  g = polygon_geom(tri);
  m = monomial_integrals(tri, g.centroid, g.diameter);
  EXPECT_NEAR(m.xi2, 1.0 / 72.0, 1e-14);
  EXPECT_NEAR(m.eta2, 1.0 / 72.0, 1e-14);
  EXPECT_NEAR(m.xieta, -1.0 / 144.0, 1e-14);
}

TEST(MonomialIntegrals, FirstMomentsVanishAboutCentroid) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto poly = testutil::random_polygon(rng, 3 + static_cast<int>(rng.below(9)));
    const auto g = polygon_geom(poly);
    const auto m = monomial_integrals(poly, g.centroid, g.diameter);
    EXPECT_NEAR(m.one, g.area, 1e-13 * g.area);
    EXPECT_LE(std::abs(m.xi), 1e-13 * g.area);
    EXPECT_LE(std::abs(m.eta), 1e-13 * g.area);
  }
}

TEST(MonomialIntegrals, ScalingAboutCentroidScalesByArea) {
  Rng rng(13);
  const auto poly = testutil::random_polygon(rng, 7);
  const auto g = polygon_geom(poly);
  const auto m = monomial_integrals(poly, g.centroid, g.diameter);
  const double s = 2.5;
  std::vector<Point2> scaled;
  for (auto p : poly) scaled.push_back(g.centroid + s * (p - g.centroid));
  const auto gs = polygon_geom(scaled);
  const auto ms = monomial_integrals(scaled, gs.centroid, gs.diameter);
  // scaled monomials are invariant under dilation about the centroid
  EXPECT_NEAR(ms.one, s * s * m.one, 1e-12 * ms.one);
  EXPECT_NEAR(ms.xi2, s * s * m.xi2, 1e-11 * std::abs(ms.one));
  EXPECT_NEAR(ms.xieta, s * s * m.xieta, 1e-11 * std::abs(ms.one));
  EXPECT_NEAR(ms.eta2, s * s * m.eta2, 1e-11 * std::abs(ms.one));
}

// Independent oracle: Monte-Carlo quadrature over a non-convex fixed polygon.
TEST(MonomialIntegrals, MonteCarloOracle) {
  // deliberately non-convex (star-shaped with strongly varying radii)
  Rng rng(20240817);
  const auto poly = testutil::random_polygon(rng, 9, {0.3, -0.2}, 0.35, 1.4);
  const auto g = polygon_geom(poly);
  const auto m = monomial_integrals(poly, g.centroid, g.diameter);
  const Point2 c = g.centroid;
  const double h = g.diameter;
  const auto check = [&](double exact, const std::function<double(Point2)>& f) {
    Rng mc(987654321);
    const auto est = testutil::mc_integrate(poly, f, 1000000, mc);
    EXPECT_NEAR(exact, est.mean, 3.0 * est.sigma + 1e-12);
  };
  check(m.one, [&](Point2) { return 1.0; });
  check(m.xi2, [&](Point2 p) { return (p.x - c.x) * (p.x - c.x) / (h * h); });
  check(m.xieta, [&](Point2 p) { return (p.x - c.x) * (p.y - c.y) / (h * h); });
  check(m.eta2, [&](Point2 p) { return (p.y - c.y) * (p.y - c.y) / (h * h); });
}

TEST(PointOnSegment, Examples) {
  EXPECT_TRUE(point_on_segment({0.5, 0.0}, {0, 0}, {1, 0}));
  EXPECT_TRUE(point_on_segment({0.5, 1e-10}, {0, 0}, {1, 0}));  // inside 1e-9 band
  EXPECT_FALSE(point_on_segment({0.5, 1e-8}, {0, 0}, {1, 0}));
  EXPECT_FALSE(point_on_segment({1.5, 0.0}, {0, 0}, {1, 0}));
  EXPECT_TRUE(point_on_segment({1.0, 0.0}, {0, 0}, {1, 0}));  // endpoint counts as on
  // tolerance scales with segment length
  EXPECT_TRUE(point_on_segment({50.0, 4e-8}, {0, 0}, {100, 0}));
}

TEST(LoopSimplicity, HangingNodeIsLegal) {
  // square with an extra collinear vertex on the bottom edge
  const std::vector<Point2> v{{0, 0}, {0.5, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_TRUE(loop_is_simple(v));
  const auto g = polygon_geom(v);
  EXPECT_NEAR(g.area, 1.0, 1e-15);
}

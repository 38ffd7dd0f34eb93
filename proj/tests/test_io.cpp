#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mmvem/io.hpp"
#include "mmvem/meshgen.hpp"
#include "testutil.hpp"

using namespace mmvem;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

TEST(MeshIo, RoundTripBitExact) {
  GenSpec spec;
  spec.kind = GenSpec::Kind::voronoi;
  spec.domain = GenSpec::Domain::disc;
  spec.r0 = 0.5;
  spec.target_cells = 40;
  spec.rng_seed = 3;
  PolyMesh mesh = generate(spec);
  mesh.mesh_time = 0.125;
  mesh.node_class[0] = NodeClass::Interior; // keep whatever it was consistent
  const std::string path = tmp_path("roundtrip.mesh");
  save_mesh(path, mesh);
  const PolyMesh back = load_mesh(path);

  ASSERT_EQ(back.n_nodes(), mesh.n_nodes());
  ASSERT_EQ(back.n_cells(), mesh.n_cells());
  EXPECT_EQ(back.mesh_time, mesh.mesh_time);
  for (idx n = 0; n < mesh.n_nodes(); ++n) {
    EXPECT_EQ(back.coords[(std::size_t)n].x, mesh.coords[(std::size_t)n].x);
    EXPECT_EQ(back.coords[(std::size_t)n].y, mesh.coords[(std::size_t)n].y);
    EXPECT_EQ(back.node_class[(std::size_t)n], mesh.node_class[(std::size_t)n]);
  }
  EXPECT_EQ(back.topo->cell_nodes, mesh.topo->cell_nodes);
  EXPECT_EQ(back.topo->cell_offsets, mesh.topo->cell_offsets);
  std::remove(path.c_str());
}

TEST(MeshIo, PreservesAllClasses) {
  std::vector<Point2> coords{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  std::vector<std::vector<idx>> loops{{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  std::vector<NodeClass> classes{NodeClass::MovingBoundary, NodeClass::Interface,
                                 NodeClass::Pivot, NodeClass::MovingBoundary,
                                 NodeClass::Interior};
  PolyMesh mesh = make_mesh(coords, loops, classes);
  const std::string path = tmp_path("classes.mesh");
  save_mesh(path, mesh);
  const PolyMesh back = load_mesh(path);
  for (std::size_t n = 0; n < classes.size(); ++n) EXPECT_EQ(back.node_class[n], classes[n]);
  std::remove(path.c_str());
}

TEST(MeshIo, RejectsMalformedInput) {
  const std::string path = tmp_path("bad.mesh");
  {
    std::ofstream out(path);
    out << "not-a-mesh 1\n";
  }
  EXPECT_THROW(load_mesh(path), IoError);
  {
    std::ofstream out(path);
    out << "mmvem-mesh 1\nnodes 3\n0 0 moving\n1 0 moving\n";
  }
  EXPECT_THROW(load_mesh(path), IoError);
  {
    std::ofstream out(path);
    out << "mmvem-mesh 1\nnodes 3\n0 0 moving\n1 0 moving\n0 1 bogus\ncells 1\n3 0 1 2\n";
  }
  EXPECT_THROW(load_mesh(path), IoError);
  // out-of-range node id caught by topology construction
  {
    std::ofstream out(path);
    out << "mmvem-mesh 1\nnodes 3\n0 0 moving\n1 0 moving\n0 1 moving\ncells 1\n3 0 1 7\n";
  }
  EXPECT_THROW(load_mesh(path), MeshError);
  EXPECT_THROW(load_mesh(tmp_path("does-not-exist.mesh")), IoError);
  std::remove(path.c_str());
}

TEST(Vtk, StructureAndFields) {
  std::vector<Point2> coords{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  std::vector<std::vector<idx>> loops{{0, 1, 2, 3}};
  PolyMesh mesh = make_mesh(coords, loops);
  std::vector<double> rho{1.0, 2.0, 3.0, 4.0};
  VelocityField v{{0.1, 0.2, 0.3, 0.4}, {-1, -2, -3, -4}};
  const std::string path = tmp_path("snap.vtk");
  save_vtk(path, mesh, {{"rho", &rho}}, "velocity", &v);
  const std::string text = slurp(path);

  EXPECT_EQ(text.rfind("# vtk DataFile Version 3.0\n", 0), 0u);
  EXPECT_NE(text.find("ASCII\nDATASET POLYDATA\n"), std::string::npos);
  EXPECT_NE(text.find("POINTS 4 double\n"), std::string::npos);
  EXPECT_NE(text.find("POLYGONS 1 5\n"), std::string::npos);
  EXPECT_NE(text.find("4 0 1 2 3\n"), std::string::npos);
  EXPECT_NE(text.find("POINT_DATA 4\n"), std::string::npos);
  EXPECT_NE(text.find("SCALARS rho double 1\nLOOKUP_TABLE default\n"), std::string::npos);
  EXPECT_NE(text.find("VECTORS velocity double\n"), std::string::npos);
  std::remove(path.c_str());

  std::vector<double> short_field{1.0};
  EXPECT_THROW(save_vtk(tmp_path("bad.vtk"), mesh, {{"rho", &short_field}}), IoError);
}

TEST(Csv, HeaderAndRows) {
  const std::string path = tmp_path("diag.csv");
  {
    CsvWriter csv(path, {"time", "theta", "events"});
    csv.row({CsvWriter::num(0.0), CsvWriter::num(0.392699), "0"});
    csv.row({CsvWriter::num(0.03125), CsvWriter::num(0.392699), "2"});
    EXPECT_THROW(csv.row({"only-one"}), IoError);
  }
  const std::string text = slurp(path);
  EXPECT_EQ(text.rfind("time,theta,events\n", 0), 0u);
  EXPECT_NE(text.find("0.03125,0.392699,2\n"), std::string::npos);
  std::remove(path.c_str());
}

TEST(ConfigParse, SectionsCommentsDefaults) {
  const Config cfg = Config::parse(
      "# run setup\n"
      "label = demo   # trailing comment\n"
      "[sim]\n"
      "m = 1.0\n"
      "t_end = 0.25\n"
      "steps = 120\n"
      "[mesh]\n"
      "kind = cvt\n");
  EXPECT_EQ(cfg.get_str("label"), "demo");
  EXPECT_DOUBLE_EQ(cfg.get_double("sim.m", 0.0), 1.0);
  EXPECT_DOUBLE_EQ(cfg.get_double("sim.t_end", 0.0), 0.25);
  EXPECT_EQ(cfg.get_int("sim.steps", 0), 120);
  EXPECT_EQ(cfg.get_str("mesh.kind"), "cvt");
  EXPECT_EQ(cfg.get_str("mesh.missing", "fallback"), "fallback");
  EXPECT_DOUBLE_EQ(cfg.get_double("absent", 7.5), 7.5);
  EXPECT_TRUE(cfg.has("sim.m"));
  EXPECT_FALSE(cfg.has("sim.absent"));
}

TEST(ConfigParse, RejectsMalformed) {
  EXPECT_THROW(Config::parse("[unterminated\nk = v\n"), ConfigError);
  EXPECT_THROW(Config::parse("just a line without equals\n"), ConfigError);
  EXPECT_THROW(Config::parse("= value\n"), ConfigError);
  const Config cfg = Config::parse("[s]\nx = not-a-number\n");
  EXPECT_THROW(cfg.get_double("s.x", 0.0), ConfigError);
  EXPECT_THROW(cfg.get_int("s.x", 0), ConfigError);
}

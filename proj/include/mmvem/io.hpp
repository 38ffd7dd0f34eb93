#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mmvem/errors.hpp"
#include "mmvem/mesh.hpp"

namespace mmvem {

namespace iodetail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline NodeClass class_from_name(const std::string& s) {
  if (s == "interior") return NodeClass::Interior;
  if (s == "moving") return NodeClass::MovingBoundary;
  if (s == "interface") return NodeClass::Interface;
  if (s == "pivot") return NodeClass::Pivot;
  throw IoError("unknown node class '" + s + "'");
}

} // namespace iodetail

// Plain-text mesh format, see docs/mesh-format.md. Coordinates are written
// with 17 significant digits so a round trip is bit exact.
inline void save_mesh(const std::string& path, const PolyMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "mmvem-mesh 1\n";
  out << "time " << iodetail::fmt_double(mesh.mesh_time) << "\n";
  out << "nodes " << mesh.n_nodes() << "\n";
  for (idx n = 0; n < mesh.n_nodes(); ++n)
    out << iodetail::fmt_double(mesh.coords[n].x) << " " << iodetail::fmt_double(mesh.coords[n].y)
        << " " << node_class_name(mesh.node_class[n]) << "\n";
  out << "cells " << mesh.n_cells() << "\n";
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    const auto loop = mesh.cell(c);
    out << loop.size();
    for (const idx n : loop) out << " " << n;
    out << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline PolyMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "mmvem-mesh" || version != 1)
    throw IoError("'" + path + "' is not a version-1 mesh file");

  std::string word;
  double time = 0.0;
  in >> word;
  if (word == "time") {
    in >> time >> word;
  }
  if (word != "nodes") throw IoError("'" + path + "': expected node section");
  idx n_nodes = -1;
  in >> n_nodes;
  if (!in || n_nodes < 3) throw IoError("'" + path + "': bad node count");

  std::vector<Point2> coords(static_cast<std::size_t>(n_nodes));
  std::vector<NodeClass> classes(static_cast<std::size_t>(n_nodes));
  for (idx n = 0; n < n_nodes; ++n) {
    std::string cls;
    in >> coords[static_cast<std::size_t>(n)].x >> coords[static_cast<std::size_t>(n)].y >> cls;
    if (!in) throw IoError("'" + path + "': truncated node " + std::to_string(n));
    classes[static_cast<std::size_t>(n)] = iodetail::class_from_name(cls);
  }

  in >> word;
  if (word != "cells") throw IoError("'" + path + "': expected cell section");
  idx n_cells = -1;
  in >> n_cells;
  if (!in || n_cells < 1) throw IoError("'" + path + "': bad cell count");
  std::vector<std::vector<idx>> loops(static_cast<std::size_t>(n_cells));
  for (idx c = 0; c < n_cells; ++c) {
    idx k = 0;
    in >> k;
    if (!in || k < 3) throw IoError("'" + path + "': bad vertex count in cell " + std::to_string(c));
    loops[static_cast<std::size_t>(c)].resize(static_cast<std::size_t>(k));
    for (idx e = 0; e < k; ++e) {
      in >> loops[static_cast<std::size_t>(c)][static_cast<std::size_t>(e)];
      if (!in) throw IoError("'" + path + "': truncated cell " + std::to_string(c));
    }
  }
  return make_mesh(std::move(coords), loops, std::move(classes), time);
}

// Legacy ASCII VTK polydata snapshot with optional per-node scalar fields and
// one optional vector field.
inline void save_vtk(const std::string& path, const PolyMesh& mesh,
                     const std::vector<std::pair<std::string, const std::vector<double>*>>& scalars = {},
                     const std::string& vector_name = "",
                     const VelocityField* vectors = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "# vtk DataFile Version 3.0\n";
  out << "t=" << iodetail::fmt_double(mesh.mesh_time) << "\n";
  out << "ASCII\nDATASET POLYDATA\n";
  out << "POINTS " << mesh.n_nodes() << " double\n";
  for (idx n = 0; n < mesh.n_nodes(); ++n)
    out << iodetail::fmt_double(mesh.coords[n].x) << " " << iodetail::fmt_double(mesh.coords[n].y)
        << " 0\n";

  std::size_t list_len = 0;
  for (idx c = 0; c < mesh.n_cells(); ++c) list_len += 1 + mesh.cell(c).size();
  out << "POLYGONS " << mesh.n_cells() << " " << list_len << "\n";
  for (idx c = 0; c < mesh.n_cells(); ++c) {
    const auto loop = mesh.cell(c);
    out << loop.size();
    for (const idx n : loop) out << " " << n;
    out << "\n";
  }

  if (!scalars.empty() || vectors) {
    out << "POINT_DATA " << mesh.n_nodes() << "\n";
    for (const auto& [name, values] : scalars) {
      if (static_cast<idx>(values->size()) != mesh.n_nodes())
        throw IoError("scalar field '" + name + "' length mismatch");
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (const double v : *values) out << iodetail::fmt_double(v) << "\n";
    }
    if (vectors) {
      if (static_cast<idx>(vectors->vx.size()) != mesh.n_nodes())
        throw IoError("vector field length mismatch");
      out << "VECTORS " << (vector_name.empty() ? "velocity" : vector_name) << " double\n";
      for (idx n = 0; n < mesh.n_nodes(); ++n)
        out << iodetail::fmt_double(vectors->vx[n]) << " " << iodetail::fmt_double(vectors->vy[n])
            << " 0\n";
    }
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

// Comma-separated diagnostics table; one header row, '.' decimal point.
class CsvWriter {
public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns) : out_(path) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
    n_cols_ = columns.size();
    for (std::size_t i = 0; i < columns.size(); ++i)
      out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
  }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != n_cols_) throw IoError("csv row width mismatch");
    for (std::size_t i = 0; i < fields.size(); ++i)
      out_ << fields[i] << (i + 1 < fields.size() ? "," : "\n");
    out_.flush();
  }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
  }

private:
  std::ofstream out_;
  std::size_t n_cols_;
};

// Flat key = value configuration with [section] headers and '#' comments.
// Keys are stored as "section.key" ("" section for the preamble).
class Config {
public:
  Config() = default;

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  static Config parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& fallback = "") const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(it->second, &pos);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': '" + it->second + "' is not a number");
    }
    if (pos != it->second.size())
      throw ConfigError("key '" + key + "': '" + it->second + "' is not a number");
    return v;
  }

  long get_int(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t pos = 0;
    long v = 0;
    try {
      v = std::stol(it->second, &pos);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': '" + it->second + "' is not an integer");
    }
    if (pos != it->second.size())
      throw ConfigError("key '" + key + "': '" + it->second + "' is not an integer");
    return v;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

} // namespace mmvem

// Command-line runner: mesh generation, single simulations, refinement
// studies, and the two contact demonstrations. Driven by flags plus an
// optional key = value config file (docs/cli-config.md); all runs are
// deterministic given config and seeds. Outputs: CSV tables, legacy ASCII
// VTK polydata snapshots, and a plain-text run log.
#include <mmvem/experiments.hpp>
#include <mmvem/io.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace {

using namespace mmvem;

// ---------------------------------------------------------------------------
// Usage and argument parsing
// ---------------------------------------------------------------------------

int usage(std::ostream& os) {
  os << "usage: mmvem <subcommand> [flags]\n"
        "\n"
        "subcommands\n"
        "  generate-mesh        build a polygonal mesh and save it\n"
        "  run                  single simulation (--preset disc | band | custom)\n"
        "  convergence          expanding-disc refinement ladder -> CSV table\n"
        "  plane-contact        band-between-walls ladder -> CSV table\n"
        "  demo-self-intersect  two expanding bumps merging into one region\n"
        "  demo-obstacles       expanding disc meeting seeded round obstacles\n"
        "\n"
        "common flags\n"
        "  --config FILE        key = value config file (see docs/cli-config.md)\n"
        "  --out-dir DIR        output directory (default mmvem-out)\n"
        "  --seed N             mesh seed (obstacle seed for demo-obstacles)\n"
        "  --levels N           ladder depth, or the level of a single run\n"
        "  --snapshot-every N   write a VTK snapshot every N steps\n"
        "  --preset NAME        run preset: disc | band | custom\n"
        "\n"
        "generate-mesh flags\n"
        "  --kind K             cvt | voronoi | grid   (also for convergence)\n"
        "  --domain D           disc | square | rectangle\n"
        "  --target-cells N     cell budget\n"
        "  --r0 R --side S --width W --height H --lloyd-iters N\n";
  return 1;
}

struct Args {
  std::string subcommand;
  std::map<std::string, std::string> flags;
};

const std::map<std::string, std::set<std::string>> kSubcommandFlags = {
    {"generate-mesh",
     {"config", "out-dir", "seed", "kind", "domain", "target-cells", "r0", "side", "width",
      "height", "lloyd-iters"}},
    {"run", {"config", "out-dir", "seed", "levels", "snapshot-every", "preset"}},
    {"convergence", {"config", "out-dir", "seed", "levels", "kind"}},
    {"plane-contact", {"config", "out-dir", "seed", "levels"}},
    {"demo-self-intersect", {"config", "out-dir", "seed", "snapshot-every"}},
    {"demo-obstacles", {"config", "out-dir", "seed", "snapshot-every"}},
};

Args parse_args(int argc, char** argv) {
  Args a;
  if (argc < 2) return a;
  a.subcommand = argv[1];
  const auto it = kSubcommandFlags.find(a.subcommand);
  if (it == kSubcommandFlags.end())
    throw ConfigError("unknown subcommand '" + a.subcommand + "'");
  for (int i = 2; i < argc; ++i) {
    std::string tok = argv[i];
    if (tok.rfind("--", 0) != 0) throw ConfigError("expected a --flag, got '" + tok + "'");
    tok.erase(0, 2);
    std::string value;
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      value = tok.substr(eq + 1);
      tok.erase(eq);
    } else {
      if (i + 1 >= argc) throw ConfigError("flag --" + tok + " needs a value");
      value = argv[++i];
    }
    if (!it->second.count(tok))
      throw ConfigError("flag --" + tok + " is not valid for '" + a.subcommand + "'");
    a.flags[tok] = value;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Config schema and merged option lookup (flag > config key > fallback)
// ---------------------------------------------------------------------------

const std::set<std::string> kConfigKeys = {
    "mesh.kind",          "mesh.domain",        "mesh.target_cells", "mesh.seed",
    "mesh.lloyd_iters",   "mesh.r0",            "mesh.side",         "mesh.width",
    "mesh.height",        "sim.m",              "sim.dt_policy",     "sim.dt",
    "sim.c_dt",           "sim.recovery",       "sim.interior_velocity",
    "sim.t_end",          "sim.output_every",   "sim.abort_on_negative",
    "sim.negative_density_tol",                 "ic.profile",
    "experiment.levels",  "experiment.base_cells",
    "experiment.dt_divisor",                    "experiment.extra_time",
    "experiment.wall_intervals",                "obstacles.count",
    "obstacles.seed",     "obstacles.rmin",     "obstacles.rmax",
    "obstacles.center_rmin",                    "obstacles.center_rmax",
};

struct Options {
  Config cfg;
  std::map<std::string, std::string> flags;
  std::string out_dir;

  bool flag_set(const std::string& f) const { return flags.count(f) != 0; }

  std::string str(const std::string& flag, const std::string& key,
                  const std::string& fallback) const {
    const auto it = flags.find(flag);
    if (it != flags.end()) return it->second;
    return cfg.get_str(key, fallback);
  }

  double num(const std::string& flag, const std::string& key, double fallback) const {
    const auto it = flags.find(flag);
    if (it != flags.end()) {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(it->second, &pos);
      } catch (const std::exception&) {
        pos = std::string::npos;
      }
      if (pos != it->second.size())
        throw ConfigError("flag --" + flag + ": '" + it->second + "' is not a number");
      return v;
    }
    return cfg.get_double(key, fallback);
  }

  long integer(const std::string& flag, const std::string& key, long fallback) const {
    const auto it = flags.find(flag);
    if (it != flags.end()) {
      std::size_t pos = 0;
      long v = 0;
      try {
        v = std::stol(it->second, &pos);
      } catch (const std::exception&) {
        pos = std::string::npos;
      }
      if (pos != it->second.size())
        throw ConfigError("flag --" + flag + ": '" + it->second + "' is not an integer");
      return v;
    }
    return cfg.get_int(key, fallback);
  }
};

Options load_options(const Args& a) {
  Options opt;
  opt.flags = a.flags;
  const auto cfg_it = a.flags.find("config");
  if (cfg_it != a.flags.end()) {
    opt.cfg = Config::parse_file(cfg_it->second);
    for (const auto& [key, value] : opt.cfg.entries())
      if (!kConfigKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  opt.out_dir = opt.str("out-dir", "", "mmvem-out");
  std::filesystem::create_directories(opt.out_dir);
  return opt;
}

GenSpec::Kind parse_kind(const std::string& s) {
  if (s == "cvt") return GenSpec::Kind::cvt;
  if (s == "voronoi") return GenSpec::Kind::voronoi;
  if (s == "grid") return GenSpec::Kind::grid;
  throw ConfigError("unknown mesh kind '" + s + "' (want cvt | voronoi | grid)");
}

GenSpec::Domain parse_domain(const std::string& s) {
  if (s == "disc") return GenSpec::Domain::disc;
  if (s == "square") return GenSpec::Domain::square;
  if (s == "rectangle") return GenSpec::Domain::rectangle;
  throw ConfigError("unknown domain '" + s + "' (want disc | square | rectangle)");
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

class RunLog {
public:
  explicit RunLog(const std::string& path) : out_(path) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }
  void line(const std::string& s) {
    out_ << s << "\n";
    out_.flush();
    std::cout << s << "\n";
  }

private:
  std::ofstream out_;
};

std::string fnum(double v) { return CsvWriter::num(v); }

void write_snapshot(const std::string& dir, int index, const PolyMesh& mesh,
                    const Eigen::VectorXd& rho) {
  std::vector<double> r(rho.data(), rho.data() + rho.size());
  std::vector<double> cls(static_cast<std::size_t>(mesh.n_nodes()));
  for (idx n = 0; n < mesh.n_nodes(); ++n)
    cls[static_cast<std::size_t>(n)] = static_cast<double>(static_cast<int>(mesh.node_class[n]));
  char name[32];
  std::snprintf(name, sizeof(name), "snap_%04d.vtk", index);
  save_vtk(dir + "/" + name, mesh, {{"rho", &r}, {"node_class", &cls}});
}

// One row per completed step.
void write_diagnostics_csv(const std::string& path,
                           const std::vector<StepDiagnostics>& history) {
  CsvWriter csv(path, {"step", "time", "dt", "theta", "min_rho", "max_rho", "min_cell_area",
                       "n_events"});
  int s = 0;
  for (const StepDiagnostics& d : history)
    csv.row({std::to_string(++s), fnum(d.time), fnum(d.dt_used), fnum(d.theta), fnum(d.min_rho),
             fnum(d.max_rho), fnum(d.min_cell_area), std::to_string(d.events.size())});
}

void write_events_csv(const std::string& path,
                      const std::vector<std::pair<double, ContactEvent>>& events) {
  CsvWriter csv(path, {"time", "kind", "node_a", "node_b", "t_star"});
  for (const auto& [t, ev] : events)
    csv.row({fnum(t), ev.kind, std::to_string(ev.node_a), std::to_string(ev.node_b),
             fnum(ev.t_star)});
}

void write_obstacles_csv(const std::string& path, const ObstacleSet& obs) {
  CsvWriter csv(path, {"loop", "vertex", "x", "y"});
  for (std::size_t l = 0; l < obs.loops.size(); ++l)
    for (std::size_t i = 0; i < obs.loops[l].size(); ++i)
      csv.row({std::to_string(l), std::to_string(i), fnum(obs.loops[l][i].x),
               fnum(obs.loops[l][i].y)});
}

SnapshotHook make_snapshot_hook(const std::string& dir, int& counter) {
  return [&counter, dir](int, const PolyMesh& mesh, const MonitorState& st,
                         const StepDiagnostics&) { write_snapshot(dir, ++counter, mesh, st.rho); };
}

std::string demo_summary(const DemoReport& rep) {
  std::string s = "finished at t = " + fnum(rep.end_time) + " after " +
                  std::to_string(rep.steps) + " steps (" + rep.termination + ")";
  s += "\n  merges: " + std::to_string(rep.merges) +
       ", pivot insertions: " + std::to_string(rep.pivot_insertions) +
       ", pivot removals: " + std::to_string(rep.pivot_removals);
  s += "\n  boundary components: " + std::to_string(rep.boundary_components) +
       ", conserved-total drift: " + fnum(rep.theta_drift);
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_generate_mesh(const Options& opt) {
  RunLog log(opt.out_dir + "/run.log");
  GenSpec g;
  g.kind = parse_kind(opt.str("kind", "mesh.kind", "cvt"));
  g.domain = parse_domain(opt.str("domain", "mesh.domain", "disc"));
  g.target_cells = static_cast<int>(opt.integer("target-cells", "mesh.target_cells", 800));
  g.rng_seed = static_cast<std::uint64_t>(opt.integer("seed", "mesh.seed", 7));
  g.lloyd_iters = static_cast<int>(opt.integer("lloyd-iters", "mesh.lloyd_iters", 100));
  g.r0 = opt.num("r0", "mesh.r0", 0.5);
  g.side = opt.num("side", "mesh.side", 1.0);
  g.width = opt.num("width", "mesh.width", 1.0);
  g.height = opt.num("height", "mesh.height", 1.0);

  const PolyMesh mesh = generate(g);
  const MeshDiagnostics diag = validate(mesh);
  save_mesh(opt.out_dir + "/mesh.txt", mesh);
  save_vtk(opt.out_dir + "/mesh.vtk", mesh);
  log.line("generated " + std::to_string(mesh.n_cells()) + " cells, " +
           std::to_string(mesh.n_nodes()) + " nodes, mean diameter " +
           fnum(mean_cell_diameter(mesh)));
  log.line("total area " + fnum(diag.total_area) + ", boundary components " +
           std::to_string(diag.n_boundary_components));
  log.line("wrote mesh.txt and mesh.vtk to " + opt.out_dir);
  return 0;
}

// Shared tail for single runs: snapshots already written by the hook; store
// the per-step table and summarize.
void finish_single_run(RunLog& log, const Options& opt,
                       const std::vector<StepDiagnostics>& history, double theta0) {
  write_diagnostics_csv(opt.out_dir + "/diagnostics.csv", history);
  log.line("steps: " + std::to_string(history.size()) + ", conserved-total drift: " +
           fnum(max_theta_drift(history, theta0)));
  log.line("wrote diagnostics.csv to " + opt.out_dir);
}

int cmd_run(const Options& opt) {
  RunLog log(opt.out_dir + "/run.log");
  const std::string preset = opt.str("preset", "ic.profile", "disc");
  const int level = static_cast<int>(opt.integer("levels", "experiment.levels", 0));
  const int snap_every =
      static_cast<int>(opt.integer("snapshot-every", "sim.output_every", 0));
  int snap_counter = -1;  // snapshot 0 is the initial state

  if (preset == "disc") {
    ConvergenceSpec spec;
    spec.mesh_kind = parse_kind(opt.str("kind", "mesh.kind", "cvt"));
    spec.base_cells = static_cast<int>(opt.integer("", "experiment.base_cells", 200));
    spec.mesh_seed = static_cast<std::uint64_t>(opt.integer("seed", "mesh.seed", 7));
    spec.lloyd_iters = static_cast<int>(opt.integer("", "mesh.lloyd_iters", 100));
    spec.extra_time = opt.num("", "experiment.extra_time", 0.01);
    spec.dt_divisor = opt.num("", "experiment.dt_divisor", 250.0);
    const SimilarityParams params{};

    PolyMesh mesh = ladder_disc_mesh(spec, level, params);
    const double h = mean_cell_diameter(mesh);
    SimConfig cfg;
    cfg.dt_policy = SimConfig::DtPolicy::fixed;
    cfg.dt = h * h / spec.dt_divisor;
    cfg.t_end = params.t0() + spec.extra_time;
    cfg.output_every = snap_every;

    MonitorState state = initialize(mesh, ic_similarity(params), cfg);
    const double theta0 = state.theta;
    log.line("expanding-disc run: level " + std::to_string(level) + ", " +
             std::to_string(mesh.n_cells()) + " cells, dt " + fnum(cfg.dt) + ", t " +
             fnum(state.time) + " -> " + fnum(cfg.t_end));
    write_snapshot(opt.out_dir, ++snap_counter, mesh, state.rho);
    LoopResult res = stepping_loop(std::move(mesh), state, ObstacleSet{}, cfg,
                                   make_snapshot_hook(opt.out_dir, snap_counter));
    log.line("solution error " +
             fnum(sol_error(state.rho, exact_similarity_reference(cfg.t_end, res.mesh, params))) +
             ", front error " + fnum(mesh_error(res.mesh, cfg.t_end, params)));
    finish_single_run(log, opt, res.history, theta0);
    return 0;
  }

  if (preset == "band") {
    PlaneContactSpec spec;
    spec.base_cells = static_cast<int>(opt.integer("", "experiment.base_cells", 200));
    spec.base_wall_intervals =
        static_cast<int>(opt.integer("", "experiment.wall_intervals", 32));
    spec.mesh_seed = static_cast<std::uint64_t>(opt.integer("seed", "mesh.seed", 7));
    spec.lloyd_iters = static_cast<int>(opt.integer("", "mesh.lloyd_iters", 100));
    spec.extra_time = opt.num("", "experiment.extra_time", 0.1);
    spec.dt_divisor = opt.num("", "experiment.dt_divisor", 250.0);

    // this level's own mesh size fixes the step
    GenSpec g;
    g.kind = GenSpec::Kind::cvt;
    g.domain = GenSpec::Domain::square;
    g.side = 1.0;
    g.target_cells = spec.base_cells << (2 * level);
    g.rng_seed = spec.mesh_seed + static_cast<std::uint64_t>(level);
    g.lloyd_iters = spec.lloyd_iters;
    const double h = mean_cell_diameter(generate(g));
    const double dt = h * h / spec.dt_divisor;

    log.line("band-between-walls run: level " + std::to_string(level) + ", " +
             std::to_string(g.target_cells) + " cells, walls 1/" +
             std::to_string(spec.base_wall_intervals << level) + ", dt " + fnum(dt));
    const PlaneContactLevel lvl = run_plane_contact_level(
        spec, level, dt, make_snapshot_hook(opt.out_dir, snap_counter));
    log.line("solution error " + fnum(lvl.result.sol_error) + ", front error " +
             fnum(lvl.result.mesh_error));
    log.line("max wall x-velocity " + fnum(lvl.max_wall_vx) + ", pivot insertions " +
             std::to_string(lvl.pivot_insertions) + ", removals " +
             std::to_string(lvl.pivot_removals));
    write_diagnostics_csv(opt.out_dir + "/diagnostics.csv", lvl.history);
    log.line("steps: " + std::to_string(lvl.history.size()) + ", conserved-total drift: " +
             fnum(lvl.result.theta_drift));
    log.line("wrote diagnostics.csv to " + opt.out_dir);
    return 0;
  }

  if (preset == "custom") {
    if (!opt.flag_set("config")) throw ConfigError("--preset custom needs --config");
    GenSpec g;
    g.kind = parse_kind(opt.cfg.get_str("mesh.kind", "cvt"));
    g.domain = parse_domain(opt.cfg.get_str("mesh.domain", "disc"));
    g.target_cells = static_cast<int>(opt.cfg.get_int("mesh.target_cells", 800));
    g.rng_seed = static_cast<std::uint64_t>(opt.integer("seed", "mesh.seed", 7));
    g.lloyd_iters = static_cast<int>(opt.cfg.get_int("mesh.lloyd_iters", 100));
    g.r0 = opt.cfg.get_double("mesh.r0", 0.5);
    g.side = opt.cfg.get_double("mesh.side", 1.0);
    g.width = opt.cfg.get_double("mesh.width", 1.0);
    g.height = opt.cfg.get_double("mesh.height", 1.0);
    PolyMesh mesh = generate(g);

    SimConfig cfg;
    cfg.m = opt.cfg.get_double("sim.m", 1.0);
    const std::string policy = opt.cfg.get_str("sim.dt_policy", "h_scaled");
    if (policy == "fixed")
      cfg.dt_policy = SimConfig::DtPolicy::fixed;
    else if (policy == "h_scaled")
      cfg.dt_policy = SimConfig::DtPolicy::h_scaled;
    else
      throw ConfigError("unknown dt_policy '" + policy + "'");
    cfg.dt = opt.cfg.get_double("sim.dt", 1e-4);
    cfg.c_dt = opt.cfg.get_double("sim.c_dt", 1.0 / 250.0);
    const std::string recovery = opt.cfg.get_str("sim.recovery", "ale");
    if (recovery == "ale")
      cfg.recovery_mode = SimConfig::Recovery::ale;
    else if (recovery == "direct")
      cfg.recovery_mode = SimConfig::Recovery::direct;
    else
      throw ConfigError("unknown recovery '" + recovery + "'");
    const std::string iv = opt.cfg.get_str("sim.interior_velocity", "lagrangian");
    if (iv == "lagrangian")
      cfg.interior_velocity = SimConfig::InteriorVelocity::lagrangian;
    else if (iv == "harmonic")
      cfg.interior_velocity = SimConfig::InteriorVelocity::harmonic;
    else
      throw ConfigError("unknown interior_velocity '" + iv + "'");
    cfg.t_end = opt.cfg.get_double("sim.t_end", 0.0625);
    cfg.output_every = snap_every > 0
                           ? snap_every
                           : static_cast<int>(opt.cfg.get_int("sim.output_every", 0));
    cfg.abort_on_negative = opt.cfg.get_int("sim.abort_on_negative", 1) != 0;
    cfg.negative_density_tol = opt.cfg.get_double("sim.negative_density_tol", 1e-9);

    const std::string profile = opt.cfg.get_str("ic.profile", "similarity");
    DensityEvaluator rho0;
    if (profile == "similarity") {
      rho0 = ic_similarity();
      mesh.mesh_time = SimilarityParams{}.t0();
    } else if (profile == "band") {
      SimilarityParams band;
      band.d = 1;
      rho0 = ic_1d_type();
      mesh.mesh_time = band.t0();
    } else if (profile == "two_bumps") {
      rho0 = ic_two_bumps();
      mesh.mesh_time = SimilarityParams{}.t0();
    } else {
      throw ConfigError("unknown ic profile '" + profile + "'");
    }

    ObstacleSet obs;
    const int n_obs = static_cast<int>(opt.cfg.get_int("obstacles.count", 0));
    if (n_obs > 0) {
      DemoSpec dspec;
      dspec.n_obstacles = n_obs;
      dspec.obstacle_seed = static_cast<std::uint64_t>(opt.cfg.get_int("obstacles.seed", 1));
      dspec.obstacle_rmin = opt.cfg.get_double("obstacles.rmin", 0.06);
      dspec.obstacle_rmax = opt.cfg.get_double("obstacles.rmax", 0.12);
      dspec.center_rmin = opt.cfg.get_double("obstacles.center_rmin", 0.56);
      dspec.center_rmax = opt.cfg.get_double("obstacles.center_rmax", 0.72);
      obs = random_round_obstacles(dspec, mean_cell_diameter(mesh));
      write_obstacles_csv(opt.out_dir + "/obstacles.csv", obs);
      apply_contact_classes(mesh, obs);
    }

    MonitorState state = initialize(mesh, rho0, cfg);
    const double theta0 = state.theta;
    log.line("custom run: " + std::to_string(mesh.n_cells()) + " cells, profile " + profile +
             ", t " + fnum(state.time) + " -> " + fnum(cfg.t_end));
    write_snapshot(opt.out_dir, ++snap_counter, mesh, state.rho);
    LoopResult res = stepping_loop(std::move(mesh), state, obs, cfg,
                                   make_snapshot_hook(opt.out_dir, snap_counter));
    finish_single_run(log, opt, res.history, theta0);
    return 0;
  }

  throw ConfigError("unknown preset '" + preset + "' (want disc | band | custom)");
}

int cmd_convergence(const Options& opt) {
  RunLog log(opt.out_dir + "/run.log");
  ConvergenceSpec spec;
  spec.mesh_kind = parse_kind(opt.str("kind", "mesh.kind", "cvt"));
  spec.levels = static_cast<int>(opt.integer("levels", "experiment.levels", 4));
  spec.base_cells = static_cast<int>(opt.integer("", "experiment.base_cells", 200));
  spec.mesh_seed = static_cast<std::uint64_t>(opt.integer("seed", "mesh.seed", 7));
  spec.lloyd_iters = static_cast<int>(opt.integer("", "mesh.lloyd_iters", 100));
  spec.extra_time = opt.num("", "experiment.extra_time", 0.01);
  spec.dt_divisor = opt.num("", "experiment.dt_divisor", 250.0);
  if (opt.cfg.get_str("sim.recovery", "ale") == "direct")
    spec.recovery = SimConfig::Recovery::direct;

  log.line("expanding-disc ladder: kind " + opt.str("kind", "mesh.kind", "cvt") + ", " +
           std::to_string(spec.levels) + " levels from " + std::to_string(spec.base_cells) +
           " cells");
  CsvWriter csv(opt.out_dir + "/convergence.csv",
                {"level", "N_dof", "h_mean", "sol_error", "mesh_error", "theta_drift", "eoc_sol",
                 "eoc_mesh"});
  std::optional<LevelResult> prev;
  const LevelHook hook = [&](const LevelResult& r) {
    std::string es, em;
    if (prev) {
      es = fnum(eoc({prev->sol_error, r.sol_error}, {prev->h_mean, r.h_mean})[0]);
      em = fnum(eoc({prev->mesh_error, r.mesh_error}, {prev->h_mean, r.h_mean})[0]);
    }
    csv.row({std::to_string(r.level), std::to_string(r.n_dof), fnum(r.h_mean),
             fnum(r.sol_error), fnum(r.mesh_error), fnum(r.theta_drift), es, em});
    log.line("level " + std::to_string(r.level) + ": N_dof " + std::to_string(r.n_dof) +
             ", sol_error " + fnum(r.sol_error) + ", mesh_error " + fnum(r.mesh_error) +
             (es.empty() ? std::string() : ", eoc " + es + " / " + em));
    prev = r;
  };
  run_convergence(spec, hook);  // partial table survives: rows flush per level
  log.line("wrote convergence.csv to " + opt.out_dir);
  return 0;
}

int cmd_plane_contact(const Options& opt) {
  RunLog log(opt.out_dir + "/run.log");
  PlaneContactSpec spec;
  spec.levels = static_cast<int>(opt.integer("levels", "experiment.levels", 3));
  spec.base_cells = static_cast<int>(opt.integer("", "experiment.base_cells", 200));
  spec.base_wall_intervals =
      static_cast<int>(opt.integer("", "experiment.wall_intervals", 32));
  spec.mesh_seed = static_cast<std::uint64_t>(opt.integer("seed", "mesh.seed", 7));
  spec.lloyd_iters = static_cast<int>(opt.integer("", "mesh.lloyd_iters", 100));
  spec.extra_time = opt.num("", "experiment.extra_time", 0.1);
  spec.dt_divisor = opt.num("", "experiment.dt_divisor", 250.0);

  log.line("band-between-walls ladder: " + std::to_string(spec.levels) + " levels from " +
           std::to_string(spec.base_cells) + " cells, walls from 1/" +
           std::to_string(spec.base_wall_intervals));
  CsvWriter csv(opt.out_dir + "/plane_contact.csv",
                {"level", "N_dof", "h_mean", "sol_error", "mesh_error", "theta_drift", "eoc_sol",
                 "eoc_mesh", "max_wall_vx", "pivot_insertions", "pivot_removals"});
  std::optional<LevelResult> prev;
  const PlaneContactHook hook = [&](const PlaneContactLevel& lvl) {
    const LevelResult& r = lvl.result;
    std::string es, em;
    if (prev) {
      es = fnum(eoc({prev->sol_error, r.sol_error}, {prev->h_mean, r.h_mean})[0]);
      em = fnum(eoc({prev->mesh_error, r.mesh_error}, {prev->h_mean, r.h_mean})[0]);
    }
    csv.row({std::to_string(r.level), std::to_string(r.n_dof), fnum(r.h_mean),
             fnum(r.sol_error), fnum(r.mesh_error), fnum(r.theta_drift), es, em,
             fnum(lvl.max_wall_vx), std::to_string(lvl.pivot_insertions),
             std::to_string(lvl.pivot_removals)});
    log.line("level " + std::to_string(r.level) + ": N_dof " + std::to_string(r.n_dof) +
             ", sol_error " + fnum(r.sol_error) + ", mesh_error " + fnum(r.mesh_error) +
             ", max wall vx " + fnum(lvl.max_wall_vx) +
             (es.empty() ? std::string() : ", eoc " + es + " / " + em));
    prev = r;
  };
  run_plane_contact(spec, hook);
  log.line("wrote plane_contact.csv to " + opt.out_dir);
  return 0;
}

int cmd_demo_self_intersect(const Options& opt) {
  RunLog log(opt.out_dir + "/run.log");
  DemoSpec spec;
  spec.target_cells = static_cast<int>(opt.integer("", "mesh.target_cells", 800));
  spec.mesh_seed = static_cast<std::uint64_t>(opt.integer("seed", "mesh.seed", 7));
  spec.lloyd_iters = static_cast<int>(opt.integer("", "mesh.lloyd_iters", 100));
  spec.t_end_absolute = opt.num("", "sim.t_end", 1.0);
  spec.snapshot_every =
      static_cast<int>(opt.integer("snapshot-every", "sim.output_every", 200));
  spec.c_dt = opt.num("", "sim.c_dt", 1.0 / 250.0);

  log.line("two-bump merge demo: " + std::to_string(spec.target_cells) + " cells total, to t = " +
           fnum(spec.t_end_absolute));
  int snap_counter = -1;
  const DemoReport rep = run_two_bump_demo(spec, make_snapshot_hook(opt.out_dir, snap_counter));

  write_diagnostics_csv(opt.out_dir + "/diagnostics.csv", rep.history);
  write_events_csv(opt.out_dir + "/events.csv", rep.events);
  if (!std::isnan(rep.first_merge_time))
    log.line("first merge at t = " + fnum(rep.first_merge_time));
  log.line(demo_summary(rep));
  log.line("wrote diagnostics.csv, events.csv, and " + std::to_string(snap_counter + 1) +
           " snapshots to " + opt.out_dir);
  if (rep.degenerated) {
    log.line("demo did not reach its final time");
    return 3;
  }
  return 0;
}

int cmd_demo_obstacles(const Options& opt) {
  RunLog log(opt.out_dir + "/run.log");
  DemoSpec spec;
  spec.target_cells = static_cast<int>(opt.integer("", "mesh.target_cells", 800));
  spec.mesh_seed = static_cast<std::uint64_t>(opt.integer("", "mesh.seed", 7));
  spec.extra_time = opt.num("", "experiment.extra_time", 0.2);
  spec.lloyd_iters = static_cast<int>(opt.integer("", "mesh.lloyd_iters", 100));
  spec.snapshot_every =
      static_cast<int>(opt.integer("snapshot-every", "sim.output_every", 200));
  spec.c_dt = opt.num("", "sim.c_dt", 1.0 / 250.0);
  spec.obstacle_seed = static_cast<std::uint64_t>(opt.integer("seed", "obstacles.seed", 1));
  spec.n_obstacles = static_cast<int>(opt.integer("", "obstacles.count", 3));
  spec.obstacle_rmin = opt.num("", "obstacles.rmin", 0.06);
  spec.obstacle_rmax = opt.num("", "obstacles.rmax", 0.12);
  spec.center_rmin = opt.num("", "obstacles.center_rmin", 0.56);
  spec.center_rmax = opt.num("", "obstacles.center_rmax", 0.72);

  log.line("round-obstacle demo: " + std::to_string(spec.target_cells) + " cells, " +
           std::to_string(spec.n_obstacles) + " obstacles (seed " +
           std::to_string(spec.obstacle_seed) + ")");
  int snap_counter = -1;
  ObstacleSet obs;
  const DemoReport rep =
      run_obstacle_demo(spec, make_snapshot_hook(opt.out_dir, snap_counter), &obs);

  write_obstacles_csv(opt.out_dir + "/obstacles.csv", obs);
  write_diagnostics_csv(opt.out_dir + "/diagnostics.csv", rep.history);
  write_events_csv(opt.out_dir + "/events.csv", rep.events);
  if (!std::isnan(rep.first_pivot_time))
    log.line("first pivot insertion at t = " + fnum(rep.first_pivot_time));
  log.line(demo_summary(rep));
  if (rep.degenerated)
    log.line("run terminated early on a degenerate mesh; the last written snapshot is valid");
  log.line("wrote obstacles.csv, diagnostics.csv, events.csv, and " +
           std::to_string(snap_counter + 1) + " snapshots to " + opt.out_dir);
  return 0;  // early degeneration is a documented clean outcome here
}

}  // namespace

int main(int argc, char** argv) {
  try {
    const Args args = parse_args(argc, argv);
    if (args.subcommand.empty()) return usage(std::cerr);
    const Options opt = load_options(args);
    if (args.subcommand == "generate-mesh") return cmd_generate_mesh(opt);
    if (args.subcommand == "run") return cmd_run(opt);
    if (args.subcommand == "convergence") return cmd_convergence(opt);
    if (args.subcommand == "plane-contact") return cmd_plane_contact(opt);
    if (args.subcommand == "demo-self-intersect") return cmd_demo_self_intersect(opt);
    if (args.subcommand == "demo-obstacles") return cmd_demo_obstacles(opt);
    return usage(std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

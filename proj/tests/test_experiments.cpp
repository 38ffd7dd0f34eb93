// Experiment drivers: short coarse refinement ladders against the closed-form
// profile, the wall-bounded band level with its velocity probe and insertion
// counters, seeded obstacle placement, and the demo reports.
#include <mmvem/experiments.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace {

using namespace mmvem;

TEST(Rates, LadderRatesMatchHandComputation) {
  std::vector<LevelResult> rows(2);
  rows[0].h_mean = 0.1;
  rows[0].sol_error = 4e-3;
  rows[0].mesh_error = 8e-3;
  rows[1].h_mean = 0.05;
  rows[1].sol_error = 1e-3;
  rows[1].mesh_error = 4e-3;
  const LadderRates r = ladder_rates(rows);
  ASSERT_EQ(r.sol.size(), 2u);
  EXPECT_TRUE(std::isnan(r.sol[0]));
  EXPECT_TRUE(std::isnan(r.mesh[0]));
  EXPECT_NEAR(r.sol[1], 2.0, 1e-12);
  EXPECT_NEAR(r.mesh[1], 1.0, 1e-12);
}

TEST(Rates, SpecValidationRejectsBadLadders) {
  ConvergenceSpec s;
  s.levels = 0;
  EXPECT_THROW(validate_spec(s), ConfigError);
  s.levels = 2;
  s.extra_time = 0.0;
  EXPECT_THROW(validate_spec(s), ConfigError);
  s.extra_time = 0.01;
  s.dt_divisor = -1.0;
  EXPECT_THROW(validate_spec(s), ConfigError);
}

TEST(Convergence, CoarseTwoLevelLadderConvergesAndConserves) {
  ConvergenceSpec spec;
  spec.levels = 2;
  spec.base_cells = 100;
  spec.extra_time = 0.004;
  int hook_calls = 0;
  const auto rows = run_convergence(spec, [&](const LevelResult& r) {
    ++hook_calls;
    EXPECT_EQ(r.level, hook_calls - 1);
  });
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(hook_calls, 2);
  EXPECT_GT(rows[0].n_dof, 100);
  EXPECT_GT(rows[1].n_dof, rows[0].n_dof);
  EXPECT_LT(rows[1].h_mean, rows[0].h_mean);
  EXPECT_NEAR(rows[1].dt, rows[0].dt / 4.0, 1e-18);
  // quadrupling the cells must cut the error decisively even this coarse
  EXPECT_LT(rows[1].sol_error, 0.6 * rows[0].sol_error);
  EXPECT_LT(rows[1].mesh_error, 0.8 * rows[0].mesh_error);
  for (const LevelResult& r : rows) {
    EXPECT_LE(r.theta_drift, 1e-10);
    EXPECT_GT(r.sol_error, 0.0);
    EXPECT_GT(r.mesh_error, 0.0);
  }
  const LadderRates rates = ladder_rates(rows);
  EXPECT_GT(rates.sol[1], 0.8);  // the tight window is the acceptance suite's job
}

TEST(PlaneContact, SingleLevelPinsWallVelocityAndInsertsPivots) {
  PlaneContactSpec spec;
  spec.levels = 1;
  spec.base_cells = 150;
  spec.extra_time = 0.02;  // front reaches past the first wall vertex at 17/32
  const auto rows = run_plane_contact(spec);
  ASSERT_EQ(rows.size(), 1u);
  const PlaneContactLevel& lvl = rows[0];
  EXPECT_LE(lvl.max_wall_vx, 1e-12);
  EXPECT_GE(lvl.pivot_insertions, 1);
  EXPECT_LE(lvl.result.theta_drift, 1e-10);
  EXPECT_GT(lvl.result.sol_error, 0.0);
  EXPECT_LT(lvl.result.sol_error, 0.02);
  EXPECT_GT(lvl.result.mesh_error, 0.0);
  EXPECT_LT(lvl.result.mesh_error, 0.02);
  EXPECT_GT(lvl.result.n_dof, 150);
}

TEST(Obstacles, PlacementIsSeededClearedAndResolved) {
  DemoSpec spec;
  spec.obstacle_seed = 42;
  spec.n_obstacles = 3;
  const ObstacleSet a = random_round_obstacles(spec, 0.05);
  const ObstacleSet b = random_round_obstacles(spec, 0.05);
  ASSERT_EQ(a.loops.size(), 3u);
  ASSERT_EQ(b.loops.size(), 3u);
  for (std::size_t k = 0; k < a.loops.size(); ++k) {
    ASSERT_EQ(a.loops[k].size(), b.loops[k].size());
    for (std::size_t i = 0; i < a.loops[k].size(); ++i) {
      EXPECT_EQ(a.loops[k][i].x, b.loops[k][i].x);
      EXPECT_EQ(a.loops[k][i].y, b.loops[k][i].y);
    }
    EXPECT_GE(a.loops[k].size(), 16u);
    // every vertex clear of the initial support radius 0.5
    for (const Point2& p : a.loops[k]) EXPECT_GT(std::hypot(p.x, p.y), 0.5);
  }
  DemoSpec crowded = spec;
  crowded.n_obstacles = 200;
  EXPECT_THROW(random_round_obstacles(crowded, 0.05), ConfigError);
}

TEST(Demos, TwoBumpReportBeforeMergeIsWellFormed) {
  DemoSpec spec;
  spec.target_cells = 200;
  spec.t_end_absolute = 0.06;  // well before the bumps can touch
  spec.snapshot_every = 100;
  int snapshots = 0;
  const DemoReport rep =
      run_two_bump_demo(spec, [&](int, const PolyMesh&, const MonitorState&,
                                  const StepDiagnostics&) { ++snapshots; });
  EXPECT_FALSE(rep.degenerated);
  EXPECT_EQ(rep.termination, "completed");
  EXPECT_NEAR(rep.end_time, 0.06, 1e-9);
  EXPECT_GT(rep.steps, 10);
  EXPECT_GE(snapshots, 1);
  EXPECT_EQ(rep.merges, 0);
  EXPECT_EQ(rep.boundary_components, 2);
  EXPECT_LE(rep.theta_drift, 1e-10);
  EXPECT_TRUE(validate(rep.mesh).ok);
}

TEST(Demos, ObstacleRunReportsAndConserves) {
  DemoSpec spec;
  spec.target_cells = 200;
  spec.extra_time = 0.03;
  spec.obstacle_seed = 42;
  ObstacleSet obs;
  const DemoReport rep = run_obstacle_demo(spec, {}, &obs);
  EXPECT_EQ(obs.loops.size(), 3u);
  EXPECT_GT(rep.steps, 10);
  EXPECT_LE(rep.theta_drift, 1e-10);
  EXPECT_TRUE(validate(rep.mesh).ok);
  if (!rep.degenerated) EXPECT_NEAR(rep.end_time, 0.03125 + 0.03, 1e-9);
}

}  // namespace

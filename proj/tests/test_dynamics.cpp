#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "sendi/systems.hpp"

using namespace sendi;

TEST_SUITE_BEGIN("dynamics");

TEST_CASE("prey-predator equilibrium start stays constant") {
  LotkaVolterraParams p;  // alpha 0.5, beta 0.025, delta 0.5, gamma 0.005, c 0
  const double x_eq = p.gamma / p.delta;  // 0.01
  const double y_eq = p.alpha / p.beta;   // 20
  Trajectory traj = simulate_lotka_volterra(p, x_eq, y_eq, uniform_grid(0, 10, 100));
  for (Eigen::Index i = 0; i < traj.length(); ++i) {
    CHECK(std::fabs(traj.states(i, 0) - x_eq) < 1e-9);
    CHECK(std::fabs(traj.states(i, 1) - y_eq) < 1e-7);
  }
}

TEST_CASE("prey-predator reference orbit stays positive and bounded") {
  LotkaVolterraParams p;
  Trajectory traj = simulate_lotka_volterra(p, 27.5, 10.0, uniform_grid(0, 30, 300));
  CHECK(traj.states.allFinite());
  // The cycle around (gamma/delta, alpha/beta) = (0.01, 20) is extreme: prey
  // collapses toward zero while predators spike, but nothing escapes.
  CHECK(traj.states.minCoeff() > -1e-9);  // positive up to integrator accuracy
  CHECK(traj.states.maxCoeff() < 1e4);
  // Predators bloom off the prey stock, prey collapses toward the small
  // equilibrium, predators then decay slowly at rate gamma.
  CHECK(traj.states.col(1).maxCoeff() > 100.0);
  CHECK(traj.states.col(0).tail(100).maxCoeff() < 0.1);
  CHECK(traj.states(traj.length() - 1, 1) < traj.states.col(1).maxCoeff());
}

TEST_CASE("halving the tolerance barely moves the endpoint") {
  LotkaVolterraParams p;
  auto grid = uniform_grid(0, 30, 60);
  Trajectory a = simulate_lotka_volterra(p, 27.5, 10.0, grid, {1e-8, 1e-10});
  Trajectory b = simulate_lotka_volterra(p, 27.5, 10.0, grid, {5e-9, 5e-11});
  double rel = (a.states.row(a.length() - 1) - b.states.row(b.length() - 1)).norm() /
               a.states.row(a.length() - 1).norm();
  CHECK(rel < 1e-6);
}

TEST_CASE("lorenz fixed point drifts slowly under integration noise") {
  LorenzParams p;  // 10, 28, 8/3
  const double z_eq = p.rho - 1.0;
  const double xy_eq = std::sqrt(p.beta * z_eq);
  Trajectory traj = simulate_lorenz(p, xy_eq, xy_eq, z_eq, uniform_grid(0, 0.1, 50));
  for (Eigen::Index i = 0; i < traj.length(); ++i) {
    CHECK(std::fabs(traj.states(i, 0) - xy_eq) < 1e-3);
    CHECK(std::fabs(traj.states(i, 2) - z_eq) < 1e-3);
  }
}

TEST_CASE("lorenz: nearby starts diverge past unit distance (chaos)") {
  LorenzParams p;
  // Spin up onto the attractor first so the twin-run growth rate is the
  // attractor's own.
  Trajectory spin = simulate_lorenz(p, 1.0, 1.0, 1.0, uniform_grid(0, 30, 300));
  Vec s0 = spin.states.row(spin.length() - 1).transpose();
  auto grid = uniform_grid(0, 30, 3000);
  Trajectory a = simulate_lorenz(p, s0(0), s0(1), s0(2), grid);
  Trajectory b = simulate_lorenz(p, s0(0) + 1e-9, s0(1), s0(2), grid);
  double max_gap = 0, gap_early = 0;
  for (Eigen::Index i = 0; i < a.length(); ++i) {
    double gap = (a.states.row(i) - b.states.row(i)).norm();
    max_gap = std::max(max_gap, gap);
    if (grid[static_cast<std::size_t>(i)] <= 5.0) gap_early = std::max(gap_early, gap);
  }
  CHECK(gap_early < 1e-4);  // still close after five time units
  CHECK(max_gap > 1.0);     // unit separation reached within the horizon
}

TEST_CASE("integrator error shrinks in line with tolerance on dy/dt = -y") {
  OdeRhs rhs = [](double, const Vec& y, Vec& d) { d = -y; };
  Vec y0 = Vec::Ones(1);
  auto grid = uniform_grid(0, 5, 10);
  double errs[2];
  OdeTolerances tols[2] = {{1e-6, 1e-8}, {1e-10, 1e-12}};
  for (int k = 0; k < 2; ++k) {
    Mat sol = integrate_dopri5(rhs, y0, grid, tols[k]);
    errs[k] = std::fabs(sol(10, 0) - std::exp(-5.0));
  }
  CHECK(errs[0] < 1e-5);
  CHECK(errs[1] < errs[0]);
  CHECK(errs[1] < 1e-9);
}

TEST_CASE("integrator reports divergence with the last valid time") {
  OdeRhs rhs = [](double, const Vec& y, Vec& d) { d(0) = y(0) * y(0); };  // blows up at t=1
  Vec y0 = Vec::Ones(1);
  try {
    integrate_dopri5(rhs, y0, uniform_grid(0, 2, 20));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.last_valid_time > 0.5);
    CHECK(e.last_valid_time < 1.05);
  }
}

TEST_CASE("trajectory validation rejects a non-increasing grid") {
  Trajectory t;
  t.times = {0.0, 1.0, 1.0};
  t.states = Mat::Zero(3, 2);
  t.controls = Mat(3, 0);
  CHECK_THROWS_AS(t.validate(), DataError);
}

TEST_CASE("trajectory csv round trip preserves data and provenance") {
  LotkaVolterraParams p;
  p.control = 1.5;
  Trajectory traj = simulate_lotka_volterra(p, 20.0, 10.0, uniform_grid(0, 3, 30));
  auto dir = std::filesystem::temp_directory_path() / "sendi_traj_test";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "t.csv").string();
  save_trajectory_csv(traj, path);
  Trajectory back = load_trajectory_csv(path);
  REQUIRE(back.length() == traj.length());
  CHECK((back.states - traj.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.controls - traj.controls).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.provenance == traj.provenance);
  std::filesystem::remove_all(dir);
}

TEST_SUITE_END();

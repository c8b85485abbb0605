#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sendi/signal.hpp"

using namespace sendi;

namespace {

Trajectory series_trajectory(const std::vector<double>& times, const Vec& values) {
  Trajectory t;
  t.times = times;
  t.states = Mat(values.size(), 1);
  t.states.col(0) = values;
  t.controls = Mat(values.size(), 0);
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("signal");

TEST_CASE("zero noise level returns the identical trajectory") {
  auto grid = uniform_grid(0, 1, 50);
  Vec v(51);
  for (int i = 0; i <= 50; ++i) v(i) = std::sin(grid[static_cast<std::size_t>(i)]);
  Trajectory t = series_trajectory(grid, v);
  Trajectory noisy = add_noise(t, {0.0, 99});
  CHECK((noisy.states - t.states).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise scale tracks the clean channel deviation") {
  LorenzParams p;
  Trajectory clean = simulate_lorenz(p, 1.0, 1.0, 1.0, uniform_grid(0, 100, 10000));
  Trajectory noisy = add_noise(clean, {0.05, 7});
  for (int ch = 0; ch < 3; ++ch) {
    double mean = clean.states.col(ch).mean();
    double sd = std::sqrt((clean.states.col(ch).array() - mean).square().mean());
    Vec delta = noisy.states.col(ch) - clean.states.col(ch);
    double dm = delta.mean();
    double dsd = std::sqrt((delta.array() - dm).square().mean());
    CHECK(dsd == doctest::Approx(0.05 * sd).epsilon(0.05));
  }
}

TEST_CASE("noise with a fixed seed reproduces bit-for-bit") {
  LorenzParams p;
  Trajectory clean = simulate_lorenz(p, 1.0, 1.0, 1.0, uniform_grid(0, 5, 500));
  Trajectory a = add_noise(clean, {0.02, 1234});
  Trajectory b = add_noise(clean, {0.02, 1234});
  CHECK(a.states == b.states);
}

TEST_CASE("central difference is exact for quadratics at interior nodes") {
  auto grid = uniform_grid(0, 2, 20);
  Vec v(21);
  for (int i = 0; i <= 20; ++i) {
    double t = grid[static_cast<std::size_t>(i)];
    v(i) = t * t;
  }
  Vec d = central_difference(v, grid[1] - grid[0]);
  for (int i = 1; i < 20; ++i)
    CHECK(d(i) == doctest::Approx(2.0 * grid[static_cast<std::size_t>(i)]).epsilon(1e-12));
  // The second-order end stencils are exact for quadratics too.
  CHECK(d(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d(20) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("central difference of a constant is zero") {
  Vec v = Vec::Constant(9, 3.5);
  Vec d = central_difference(v, 0.1);
  CHECK(d.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("central difference error on sin(t) is second order") {
  const double h = 1e-3;
  const int n = 2000;
  Vec v(n + 1);
  std::vector<double> grid(n + 1);
  for (int i = 0; i <= n; ++i) {
    grid[static_cast<std::size_t>(i)] = i * h;
    v(i) = std::sin(i * h);
  }
  Vec d = central_difference(v, h);
  double worst = 0;
  for (int i = 1; i < n; ++i)
    worst = std::max(worst, std::fabs(d(i) - std::cos(i * h)));
  CHECK(worst < 1e-6);
}

TEST_CASE("central difference on a trajectory demands a uniform grid") {
  Trajectory t = series_trajectory({0.0, 0.1, 0.3}, Vec::Zero(3));
  CHECK_THROWS_WITH_AS(central_difference(t),
                       "central_difference: non-uniform grid; use gradient_nonuniform "
                       "instead",
                       UsageError);
}

TEST_CASE("cumulative trapezoid: constant derivative integrates to a ramp") {
  Vec d = Vec::Constant(5, 2.0);
  Vec x = cumtrapz(d, {0.0, 0.5, 1.0, 1.5, 2.0}, 0.0);
  for (int i = 0; i < 5; ++i) CHECK(x(i) == doctest::Approx(i * 1.0).epsilon(1e-15));
}

TEST_CASE("differentiate-then-integrate round trip is second order on sin") {
  const int n = 500;
  auto grid = uniform_grid(0, 3.0, n);
  Vec v(n + 1);
  for (int i = 0; i <= n; ++i) v(i) = std::sin(grid[static_cast<std::size_t>(i)]);
  Vec d = central_difference(v, grid[1] - grid[0]);
  Vec back = cumtrapz(d, grid, v(0));
  CHECK((back - v).cwiseAbs().maxCoeff() < 5e-5);  // O(h^2), h = 6e-3
}

TEST_CASE("round trip is exact for affine signals on any grid") {
  std::vector<double> grid{0.0, 0.2, 0.5, 0.9, 1.0, 1.7};
  Vec v(6);
  for (int i = 0; i < 6; ++i) v(i) = 2.0 - 3.0 * grid[static_cast<std::size_t>(i)];
  Vec d = gradient_nonuniform(v, grid);
  Vec back = cumtrapz(d, grid, v(0));
  CHECK((back - v).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("tv differentiation recovers a clean constant slope") {
  const int n = 200;
  auto grid = uniform_grid(0, 2, n);
  Vec v(n + 1);
  for (int i = 0; i <= n; ++i) v(i) = grid[static_cast<std::size_t>(i)];
  TvResult r = tv_differentiate(v, grid, 1e-3, 100);
  for (Eigen::Index i = 0; i < r.derivative.size(); ++i)
    CHECK(std::fabs(r.derivative(i) - 1.0) < 1e-3);
}

TEST_CASE("tv derivative of a noisy ramp matches the least-squares slope") {
  const int n = 400;
  auto grid = uniform_grid(0, 4, n);
  RngStream rng(5);
  Vec v(n + 1);
  for (int i = 0; i <= n; ++i)
    v(i) = grid[static_cast<std::size_t>(i)] + 0.05 * rng.normal();
  TvResult r = tv_differentiate(v, grid, default_tv_weight(v), 100);

  // Global least-squares slope as the reference.
  double tm = 0, vm = v.mean();
  for (double t : grid) tm += t;
  tm /= static_cast<double>(grid.size());
  double num = 0, den = 0;
  for (int i = 0; i <= n; ++i) {
    num += (grid[static_cast<std::size_t>(i)] - tm) * (v(i) - vm);
    den += (grid[static_cast<std::size_t>(i)] - tm) * (grid[static_cast<std::size_t>(i)] - tm);
  }
  double slope = num / den;
  CHECK(r.derivative.mean() == doctest::Approx(slope).epsilon(0.02));
}

TEST_CASE("tv derivative of a ramp-then-plateau stays piecewise constant") {
  const int n = 300;
  auto grid = uniform_grid(0, 3, n);
  Vec v(n + 1);
  for (int i = 0; i <= n; ++i) {
    double t = grid[static_cast<std::size_t>(i)];
    v(i) = t < 1.5 ? t : 1.5;
  }
  TvResult r = tv_differentiate(v, grid, 5e-3, 200);
  // Derivative values should concentrate near 1 and 0.
  int near_one = 0, near_zero = 0;
  for (Eigen::Index i = 0; i < r.derivative.size(); ++i) {
    if (std::fabs(r.derivative(i) - 1.0) < 0.05) ++near_one;
    if (std::fabs(r.derivative(i)) < 0.05) ++near_zero;
  }
  CHECK(near_one + near_zero > static_cast<int>(0.9 * static_cast<double>(n)));
}

TEST_CASE("tv objective history never increases") {
  const int n = 250;
  auto grid = uniform_grid(0, 5, n);
  RngStream rng(6);
  Vec v(n + 1);
  for (int i = 0; i <= n; ++i)
    v(i) = std::sin(grid[static_cast<std::size_t>(i)]) + 0.05 * rng.normal();
  TvResult r = tv_differentiate(v, grid, default_tv_weight(v), 60);
  for (std::size_t k = 1; k < r.objective_history.size(); ++k)
    CHECK(r.objective_history[k] <=
          r.objective_history[k - 1] + 1e-9 * std::fabs(r.objective_history[k - 1]));
}

TEST_CASE("denoising reduces the error of a noisy chaotic signal") {
  LorenzParams p;
  Trajectory clean = simulate_lorenz(p, 1.0, 1.0, 1.0, uniform_grid(0, 10, 1000));
  Trajectory noisy = add_noise(clean, {0.05, 11});
  for (int ch = 0; ch < 3; ++ch) {
    DenoisedChannel den = denoise_channel(Vec(noisy.states.col(ch)), noisy.times);
    double err_noisy = (noisy.states.col(ch) - clean.states.col(ch)).norm();
    double err_denoised = (den.smoothed - clean.states.col(ch)).norm();
    CHECK(err_denoised < err_noisy);
  }
}

TEST_CASE("fixed windows of width 10 partition a 30-step trajectory") {
  Trajectory t = series_trajectory(uniform_grid(0, 29, 29), Vec::Zero(30));
  auto windows = make_windows(t, 10, WindowMode::fixed);
  REQUIRE(windows.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(windows[static_cast<std::size_t>(k)].start == 10 * k);
    CHECK(windows[static_cast<std::size_t>(k)].length == 10);
  }
}

TEST_CASE("expanding windows grow by the stride") {
  Trajectory t = series_trajectory(uniform_grid(0, 1, 999), Vec::Zero(1000));
  auto windows = make_windows(t, 100, WindowMode::expanding, 200);
  REQUIRE(windows.size() == 5);
  int expected[] = {100, 300, 500, 700, 900};
  for (int k = 0; k < 5; ++k) {
    CHECK(windows[static_cast<std::size_t>(k)].start == 0);
    CHECK(windows[static_cast<std::size_t>(k)].length == expected[k]);
  }
}

TEST_CASE("width-one fixed windows isolate every sample") {
  Trajectory t = series_trajectory(uniform_grid(0, 1, 7), Vec::Zero(8));
  auto windows = make_windows(t, 1, WindowMode::fixed);
  CHECK(windows.size() == 8);
}

TEST_CASE("oversized width yields no windows") {
  Trajectory t = series_trajectory(uniform_grid(0, 1, 4), Vec::Zero(5));
  CHECK(make_windows(t, 10, WindowMode::fixed).empty());
}

TEST_CASE("fixed windows with default stride never overlap and cover a prefix") {
  RngStream rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    int n = rng.uniform_int(5, 200);
    int width = rng.uniform_int(1, n);
    Trajectory t = series_trajectory(uniform_grid(0, 1, n - 1), Vec::Zero(n));
    auto windows = make_windows(t, width, WindowMode::fixed);
    std::vector<int> covered(static_cast<std::size_t>(n), 0);
    for (const Window& w : windows)
      for (Eigen::Index i = w.start; i < w.start + w.length; ++i)
        covered[static_cast<std::size_t>(i)]++;
    int k = static_cast<int>(windows.size());
    for (int i = 0; i < k * width; ++i) CHECK(covered[static_cast<std::size_t>(i)] == 1);
    for (int i = k * width; i < n; ++i) CHECK(covered[static_cast<std::size_t>(i)] == 0);
  }
}

TEST_SUITE_END();

#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sendi/heat.hpp"
#include "sendi/sobol.hpp"

using namespace sendi;

TEST_SUITE_BEGIN("heat_sobol");

TEST_CASE("diffusivity profile: value at the dip center and far from it") {
  HeatProblem p;
  p.alpha_ref = 1e-6;
  p.ratio = 60.0;
  p.center = 0.005;
  CHECK(alpha_profile(p, p.center) == doctest::Approx(p.alpha_ref / p.ratio).epsilon(1e-12));
  CHECK(std::fabs(alpha_profile(p, 0.0) - p.alpha_ref) < 1e-12 * p.alpha_ref);
  CHECK(std::fabs(alpha_profile(p, p.length) - p.alpha_ref) < 1e-12 * p.alpha_ref);
  // Localized well: a plateau at alpha_ref with a dip reaching alpha_ref/ratio.
  CHECK(alpha_profile(p, p.center + p.half_width) ==
        doctest::Approx(p.alpha_ref - 0.5 * p.alpha_ref * (1.0 - 1.0 / p.ratio))
            .epsilon(1e-9));
  CHECK(alpha_profile(p, p.center + 3 * p.half_width) > 0.99 * p.alpha_ref);
}

TEST_CASE("zero flux and uniform start is an exact equilibrium") {
  HeatProblem p;
  p.flux = 0.0;
  p.horizon = 50.0;
  Trajectory run = simulate_heat_1d(p);
  CHECK((run.states.array() - p.t_initial).abs().maxCoeff() < 1e-10);
}

TEST_CASE("heating switches off once the surface passes the cutoff") {
  HeatProblem p;  // reference configuration
  Trajectory run = simulate_heat_1d(p);
  // Surface temperature rises monotonically while below the cutoff.
  Eigen::Index first_hot = -1;
  for (Eigen::Index s = 1; s < run.length(); ++s) {
    if (run.states(s - 1, 0) < p.t_max) {
      CHECK(run.states(s, 0) >= run.states(s - 1, 0) - 1e-9);
    }
    if (first_hot < 0 && run.states(s, 0) > p.t_max) first_hot = s;
  }
  REQUIRE(first_hot > 0);  // the cutoff is actually reached within the horizon
  CHECK(run.states.maxCoeff() < p.t_max + 50.0);
  CHECK(run.states.allFinite());
}

TEST_CASE("insulated solver conserves the volume-weighted mean temperature") {
  HeatProblem p;
  p.flux = 0.0;  // both boundaries insulated
  p.horizon = 200.0;
  const int n = p.node_count;
  p.initial_profile = Vec(n);
  for (int i = 0; i < n; ++i)
    p.initial_profile(i) = 20.0 + 480.0 * std::sin(3.14159 * i / (n - 1.0));
  Trajectory run = simulate_heat_1d(p);

  // Diffusion must genuinely move heat, and the conserved functional of the
  // flux-form scheme (volume-weighted mean) must stay fixed every step.
  CHECK((run.states.row(run.length() - 1) - run.states.row(0)).cwiseAbs().maxCoeff() > 1.0);
  Vec w = heat_volume_weights(p);
  double total_w = w.sum();
  double mean_prev = (w.transpose() * run.states.row(0).transpose())(0) / total_w;
  for (Eigen::Index s = 1; s < run.length(); ++s) {
    double mean = (w.transpose() * run.states.row(s).transpose())(0) / total_w;
    CHECK(std::fabs(mean - mean_prev) < 1e-10);
    mean_prev = mean;
  }
}

TEST_CASE("sobol: first point is the sequence start (zeros skipped)") {
  Mat pts = sobol_sample(2, 1, {{0.0, 1.0}, {0.0, 1.0}});
  CHECK(pts(0, 0) == doctest::Approx(0.5));
  CHECK(pts(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("sobol: samples respect their bounds") {
  std::vector<std::pair<double, double>> bounds{{-1, 5}, {5, 50}, {5, 15}};
  Mat pts = sobol_sample(3, 512, bounds);
  for (int i = 0; i < 512; ++i)
    for (int d = 0; d < 3; ++d) {
      CHECK(pts(i, d) >= bounds[static_cast<std::size_t>(d)].first);
      CHECK(pts(i, d) <= bounds[static_cast<std::size_t>(d)].second);
    }
}

TEST_CASE("sobol: start_index partitions the sequence without overlap") {
  Mat a = sobol_sample(2, 8, {{0, 1}, {0, 1}}, 0);
  Mat b = sobol_sample(2, 4, {{0, 1}, {0, 1}}, 4);
  CHECK((a.bottomRows(4) - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sobol: rejects unsupported dimension counts") {
  CHECK_THROWS_AS(sobol_sample(7, 4, std::vector<std::pair<double, double>>(7, {0, 1})),
                  ConfigError);
}

namespace {
// Coarse box-count discrepancy: max over a grid of anchored boxes of
// |empirical fraction - box volume|.
double box_discrepancy(const Mat& pts) {
  const int grid = 32;
  double worst = 0;
  const double n = static_cast<double>(pts.rows());
  for (int gx = 1; gx <= grid; ++gx) {
    for (int gy = 1; gy <= grid; ++gy) {
      double bx = gx / static_cast<double>(grid);
      double by = gy / static_cast<double>(grid);
      int count = 0;
      for (int i = 0; i < pts.rows(); ++i)
        if (pts(i, 0) < bx && pts(i, 1) < by) ++count;
      worst = std::max(worst, std::fabs(count / n - bx * by));
    }
  }
  return worst;
}
}  // namespace

TEST_CASE("sobol beats pseudo-random sampling on star discrepancy") {
  const int n = 1024;
  Mat sob = sobol_sample(2, n, {{0, 1}, {0, 1}});
  RngStream rng(123);
  Mat unif = sendi::testing::random_mat(n, 2, rng, 0.0, 1.0);
  CHECK(box_discrepancy(sob) < box_discrepancy(unif));
}

TEST_SUITE_END();

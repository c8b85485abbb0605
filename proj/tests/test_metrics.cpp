#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sendi/metrics.hpp"
#include "sendi/sparse_reg.hpp"

using namespace sendi;
using sendi::testing::random_vec;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("percentage error basics") {
  Vec t = random_vec(20, *[] { static RngStream r(71); return &r; }());
  CHECK(mape(t, t) == 0.0);
  Vec scaled = 1.1 * t;
  CHECK(mape(scaled, t) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("percentage error matches a naive loop on random data") {
  RngStream rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    Vec p = random_vec(30, rng), t = random_vec(30, rng);
    double acc = 0;
    int used = 0;
    for (int i = 0; i < 30; ++i) {
      if (t(i) == 0) continue;
      acc += 100.0 * std::fabs(p(i) - t(i)) / std::fabs(t(i));
      ++used;
    }
    CHECK(std::fabs(mape(p, t) - acc / used) < 1e-12);
  }
}

TEST_CASE("zero-truth points are excluded and counted") {
  Vec t(3), p(3);
  t << 0.0, 2.0, 4.0;
  p << 5.0, 2.0, 4.0;
  int excluded = 0;
  CHECK(mape(p, t, &excluded) == 0.0);
  CHECK(excluded == 1);
  Vec zero = Vec::Zero(2);
  CHECK_THROWS_AS(mape(Vec::Ones(2), zero), UndefinedMetricError);
}

TEST_CASE("symmetric percentage error: bounds and symmetry") {
  RngStream rng(73);
  Vec t = random_vec(25, rng);
  CHECK(smape(t, t) == 0.0);
  Vec zeros = Vec::Zero(25);
  CHECK(smape(zeros, t) == doctest::Approx(200.0));
  for (int trial = 0; trial < 30; ++trial) {
    Vec a = random_vec(25, rng), b = random_vec(25, rng);
    double ab = smape(a, b);
    CHECK(ab == smape(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 200.0);
  }
}

TEST_CASE("coefficient of determination basics and oracle") {
  RngStream rng(74);
  Vec t = random_vec(40, rng);
  CHECK(r2(t, t) == doctest::Approx(1.0));
  Vec mean_pred = Vec::Constant(40, t.mean());
  CHECK(r2(mean_pred, t) == doctest::Approx(0.0).epsilon(1e-12));
  for (int trial = 0; trial < 30; ++trial) {
    Vec p = random_vec(40, rng);
    double ss_res = 0, ss_tot = 0, mean = t.mean();
    for (int i = 0; i < 40; ++i) {
      ss_res += (t(i) - p(i)) * (t(i) - p(i));
      ss_tot += (t(i) - mean) * (t(i) - mean);
    }
    CHECK(std::fabs(r2(p, t) - (1.0 - ss_res / ss_tot)) < 1e-12);
    CHECK(r2(p, t) <= 1.0);
  }
  CHECK_THROWS_AS(r2(Vec::Ones(5), Vec::Ones(5)), UndefinedMetricError);
}

TEST_CASE("inverse-size weighting favors small windows") {
  CHECK(weighted_r2({0.7, 0.7, 0.7}, {100, 300, 500}) == doctest::Approx(0.7));
  CHECK(weighted_r2({1.0, 0.0}, {100, 900}) == doctest::Approx(0.9));
  // Weights sum to one for the reference size list.
  std::vector<int> sizes{100, 300, 500, 700, 900};
  double f = 0;
  for (int n : sizes) f += 1.0 / n;
  double sum = 0;
  for (int n : sizes) sum += (1.0 / n) / f;
  CHECK(std::fabs(sum - 1.0) < 1e-12);
  CHECK_THROWS_AS(weighted_r2({}, {}), UndefinedMetricError);
}

TEST_CASE("summary of identical values is flat with no outliers") {
  std::vector<double> v(12, 4.2);
  std::vector<bool> d(12, false);
  MetricSummary s = summarize(v, d, OutlierPolicy::zscore);
  CHECK(s.mean == doctest::Approx(4.2));
  CHECK(s.median == doctest::Approx(4.2));
  CHECK(s.p90 == doctest::Approx(4.2));
  CHECK(s.outliers_removed == 0);
  CHECK(s.divergence_pct == 0.0);
}

TEST_CASE("one divergence among ten is 10 percent and leaves the statistics") {
  std::vector<double> v(10, 1.0);
  std::vector<bool> d(10, false);
  d[3] = true;
  MetricSummary s = summarize(v, d, OutlierPolicy::zscore);
  CHECK(s.divergence_pct == doctest::Approx(10.0));
  CHECK(s.population == 9);
  CHECK(s.mean == doctest::Approx(1.0));
}

TEST_CASE("an extreme outlier is dropped by the z-score policy and kept otherwise") {
  RngStream rng(75);
  std::vector<double> v;
  std::vector<bool> d;
  for (int i = 0; i < 40; ++i) {
    v.push_back(1.0 + 0.05 * rng.normal());
    d.push_back(false);
  }
  v.push_back(5e6);  // absurd percentage error
  d.push_back(false);
  MetricSummary with = summarize(v, d, OutlierPolicy::zscore);
  CHECK(with.outliers_removed == 1);
  CHECK(with.mean < 2.0);
  MetricSummary without = summarize(v, d, OutlierPolicy::none);
  CHECK(without.outliers_removed == 0);
  CHECK(without.mean > 1e4);
}

TEST_CASE("summary ignores input order") {
  RngStream rng(76);
  std::vector<double> v;
  std::vector<bool> d;
  for (int i = 0; i < 25; ++i) {
    v.push_back(std::fabs(rng.normal()) + 0.1);
    d.push_back(i % 7 == 0);
  }
  MetricSummary a = summarize(v, d, OutlierPolicy::zscore);
  std::vector<double> v2(v.rbegin(), v.rend());
  std::vector<bool> d2(d.rbegin(), d.rend());
  MetricSummary b = summarize(v2, d2, OutlierPolicy::zscore);
  CHECK(a.mean == b.mean);
  CHECK(a.median == b.median);
  CHECK(a.p90 == b.p90);
  CHECK(a.divergence_pct == b.divergence_pct);
}

TEST_CASE("percentile interpolates between order statistics") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(percentile(v, 50.0) == doctest::Approx(2.5));
  CHECK(percentile(v, 90.0) == doctest::Approx(3.7));
  CHECK(percentile(v, 0.0) == doctest::Approx(1.0));
  CHECK(percentile(v, 100.0) == doctest::Approx(4.0));
}

// ---------------------------------------------------------------------------
// Forecasting
// ---------------------------------------------------------------------------

namespace {

struct ForecastFixture {
  LotkaVolterraParams params;
  Trajectory traj;
  FeatureLibrary lib = FeatureLibrary::polynomial({"x", "y", "c"}, 3);
  Mat truth_xi;

  ForecastFixture() {
    params.control = 0.5;
    traj = simulate_lotka_volterra(params, 27.5, 10.0, uniform_grid(0, 30, 300));
    truth_xi = Mat::Zero(20, 2);
    for (int k = 0; k < lib.term_count(); ++k) {
      const std::string name = lib.term_name(k);
      if (name == "x") truth_xi(k, 0) = params.alpha;
      if (name == "x*y") {
        truth_xi(k, 0) = -params.beta;
        truth_xi(k, 1) = params.delta;
      }
      if (name == "y") truth_xi(k, 1) = -params.gamma;
      if (name == "c") truth_xi(k, 1) = 1.0;
    }
  }
};

}  // namespace

TEST_CASE("forecast with the exact dynamics tracks the truth to under one percent") {
  ForecastFixture fx;
  CoefficientPredictor oracle = [&](const Trajectory&, const Window&) {
    return fx.truth_xi;
  };
  Window w{0, 0, 10, "fixed"};  // first window: both channels well off zero
  ForecastResult r = forecast(oracle, fx.traj, w, fx.lib, 1);
  REQUIRE_FALSE(r.diverged);
  CHECK(r.mape_per_channel[0] < 1.0);
  CHECK(r.mape_per_channel[1] < 1.0);
}

TEST_CASE("all-zero coefficients freeze the state, with the matching error") {
  ForecastFixture fx;
  CoefficientPredictor zeros = [&](const Trajectory&, const Window&) {
    return Mat(Mat::Zero(20, 2));
  };
  Window w{0, 5, 10, "fixed"};
  ForecastResult r = forecast(zeros, fx.traj, w, fx.lib, 1);
  REQUIRE_FALSE(r.diverged);
  const Eigen::Index anchor = w.start + w.length - 1;
  // Closed form: the prediction is the frozen anchor state.
  Vec frozen = fx.traj.states.row(anchor).transpose();
  for (int ch = 0; ch < 2; ++ch) {
    double acc = 0;
    for (Eigen::Index i = 0; i < r.truth.rows(); ++i)
      acc += 100.0 * std::fabs(frozen(ch) - r.truth(i, ch)) / std::fabs(r.truth(i, ch));
    acc /= static_cast<double>(r.truth.rows());
    CHECK(r.mape_per_channel[static_cast<std::size_t>(ch)] ==
          doctest::Approx(acc).epsilon(1e-9));
    CHECK((r.predicted.col(ch).array() - frozen(ch)).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("explosive dynamics raise the divergence flag instead of metrics") {
  ForecastFixture fx;
  CoefficientPredictor bad = [&](const Trajectory&, const Window&) {
    Mat xi = Mat::Zero(20, 2);
    for (int k = 0; k < fx.lib.term_count(); ++k) {
      if (fx.lib.term_name(k) == "x^2") xi(k, 0) = 50.0;  // finite-time blow-up
      if (fx.lib.term_name(k) == "y^2") xi(k, 1) = 50.0;
    }
    return xi;
  };
  Window w{0, 5, 10, "fixed"};
  ForecastResult r = forecast(bad, fx.traj, w, fx.lib, 4);
  CHECK(r.diverged);
  CHECK(r.mape_per_channel.empty());
}

TEST_SUITE_END();

#pragma once

#include <functional>

#include "sendi/library.hpp"
#include "sendi/signal.hpp"
#include "sendi/systems.hpp"

namespace sendi {

struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mean of 100*|pred-truth|/|truth|; zero-truth points are excluded and
// counted. Throws UndefinedMetricError when nothing remains.
double mape(const Vec& pred, const Vec& truth, int* excluded = nullptr);

// Mean of 200*|pred-truth|/(|pred|+|truth|), bounded by 200.
double smape(const Vec& pred, const Vec& truth, int* excluded = nullptr);

// 1 - SS_res/SS_tot. Requires length >= 2 and non-constant truth.
double r2(const Vec& pred, const Vec& truth);

// Inverse-size weighting: sum_i (1/n_i)/F * score_i with F = sum_i 1/n_i.
double weighted_r2(const std::vector<double>& scores, const std::vector<int>& sizes);

// ---------------------------------------------------------------------------
// Identify-then-extrapolate forecasting
// ---------------------------------------------------------------------------

struct ForecastOptions {
  double divergence_factor = 1e3;  // |state| bound as a multiple of max |truth|
  OdeTolerances tol{1e-8, 1e-10};
};

struct ForecastResult {
  Mat predicted;            // rows aligned with the compared truth samples
  Mat truth;
  std::vector<double> times;
  std::vector<double> mape_per_channel;
  std::vector<double> smape_per_channel;
  bool diverged = false;
  int horizon_multiple = 1;
};

// Produces the coefficient block (terms x state_dim) the forecast integrates.
using CoefficientPredictor = std::function<Mat(const Trajectory&, const Window&)>;

// Predicts the next sub-domain's dynamics from `window`, integrates
// dx/dt = theta(x, u) * xi from the window's final state over
// horizon_multiple * window-width, and compares to the ground truth.
ForecastResult forecast(const CoefficientPredictor& predictor, const Trajectory& truth,
                        const Window& window, const FeatureLibrary& lib,
                        int horizon_multiple, const ForecastOptions& opts = {});

// ---------------------------------------------------------------------------
// Population summaries
// ---------------------------------------------------------------------------

enum class OutlierPolicy { zscore, none };  // zscore: drop |z| > 3 on log values

struct MetricSummary {
  double mean = 0;
  double median = 0;
  double p90 = 0;  // linear interpolation between order statistics
  double divergence_pct = 0;
  int outliers_removed = 0;
  int population = 0;  // non-diverged, non-outlier count
};

// Divergence percentage over all entries; statistics over the surviving
// population. Input order does not matter.
MetricSummary summarize(const std::vector<double>& values,
                        const std::vector<bool>& diverged, OutlierPolicy policy,
                        double z_threshold = 3.0);

double percentile(std::vector<double> sorted_or_not, double p);

}  // namespace sendi

#include "sendi/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace sendi {

double mape(const Vec& pred, const Vec& truth, int* excluded) {
  if (pred.size() != truth.size()) throw DimensionError("mape: length mismatch");
  double acc = 0;
  int used = 0, skipped = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (truth(i) == 0.0) {
      ++skipped;
      continue;
    }
    acc += 100.0 * std::fabs(pred(i) - truth(i)) / std::fabs(truth(i));
    ++used;
  }
  if (excluded) *excluded = skipped;
  if (used == 0) throw UndefinedMetricError("mape: every point excluded (zero truth)");
  return acc / static_cast<double>(used);
}

double smape(const Vec& pred, const Vec& truth, int* excluded) {
  if (pred.size() != truth.size()) throw DimensionError("smape: length mismatch");
  double acc = 0;
  int used = 0, skipped = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    double denom = std::fabs(pred(i)) + std::fabs(truth(i));
    if (denom == 0.0) {
      ++skipped;
      continue;
    }
    acc += 200.0 * std::fabs(pred(i) - truth(i)) / denom;
    ++used;
  }
  if (excluded) *excluded = skipped;
  if (used == 0) throw UndefinedMetricError("smape: every point excluded");
  return acc / static_cast<double>(used);
}

double r2(const Vec& pred, const Vec& truth) {
  if (pred.size() != truth.size()) throw DimensionError("r2: length mismatch");
  if (truth.size() < 2) throw UndefinedMetricError("r2: need at least 2 points");
  double mean = truth.mean();
  double ss_tot = (truth.array() - mean).square().sum();
  if (ss_tot == 0.0) throw UndefinedMetricError("r2: constant truth");
  double ss_res = (truth - pred).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

double weighted_r2(const std::vector<double>& scores, const std::vector<int>& sizes) {
  if (scores.empty() || scores.size() != sizes.size())
    throw UndefinedMetricError("weighted_r2: empty or mismatched input");
  double f_total = 0;
  for (int n : sizes) {
    if (n <= 0) throw UndefinedMetricError("weighted_r2: sizes must be positive");
    f_total += 1.0 / static_cast<double>(n);
  }
  double acc = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    acc += (1.0 / static_cast<double>(sizes[i])) / f_total * scores[i];
  return acc;
}

ForecastResult forecast(const CoefficientPredictor& predictor, const Trajectory& truth,
                        const Window& window, const FeatureLibrary& lib,
                        int horizon_multiple, const ForecastOptions& opts) {
  if (horizon_multiple < 1) throw UsageError("forecast: horizon multiple must be >= 1");
  const Eigen::Index anchor = window.start + window.length - 1;
  const Eigen::Index span = window.length - 1;  // grid steps per window width
  const Eigen::Index last = anchor + horizon_multiple * std::max<Eigen::Index>(span, 1);
  if (anchor < 0 || last >= truth.length())
    throw UsageError("forecast: horizon extends past the ground truth");

  Mat xi = predictor(truth, window);
  if (xi.rows() != lib.term_count() || xi.cols() != truth.state_dim())
    throw ConfigError("forecast: coefficient block does not match library/state dims");

  ForecastResult result;
  result.horizon_multiple = horizon_multiple;
  const Eigen::Index n_cmp = last - anchor;
  result.times.assign(truth.times.begin() + anchor + 1, truth.times.begin() + last + 1);
  result.truth = truth.states.middleRows(anchor + 1, n_cmp);

  // Control held at its value at the anchor sample (piecewise-constant input).
  Mat control_row(1, truth.control_dim());
  if (truth.control_dim() > 0) control_row.row(0) = truth.controls.row(anchor);

  OdeRhs rhs = [&](double, const Vec& y, Vec& dydt) {
    Mat state_row(1, y.size());
    state_row.row(0) = y.transpose();
    Mat theta = lib.evaluate(state_row, control_row);
    dydt = (theta * xi).row(0).transpose();
  };

  std::vector<double> grid(truth.times.begin() + anchor, truth.times.begin() + last + 1);
  double bound = opts.divergence_factor *
                 std::max(1.0, result.truth.cwiseAbs().maxCoeff());
  try {
    Mat sol = integrate_dopri5(rhs, Vec(truth.states.row(anchor).transpose()), grid, opts.tol);
    result.predicted = sol.bottomRows(n_cmp);
  } catch (const DivergenceError&) {
    result.diverged = true;
    return result;
  }
  if (!result.predicted.allFinite() ||
      result.predicted.cwiseAbs().maxCoeff() > bound) {
    result.diverged = true;
    return result;
  }
  for (Eigen::Index j = 0; j < truth.state_dim(); ++j) {
    result.mape_per_channel.push_back(
        mape(Vec(result.predicted.col(j)), Vec(result.truth.col(j))));
    result.smape_per_channel.push_back(
        smape(Vec(result.predicted.col(j)), Vec(result.truth.col(j))));
  }
  return result;
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw UndefinedMetricError("percentile: empty input");
  std::sort(v.begin(), v.end());
  double rank = p / 100.0 * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
  double frac = rank - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

MetricSummary summarize(const std::vector<double>& values,
                        const std::vector<bool>& diverged, OutlierPolicy policy,
                        double z_threshold) {
  if (values.empty() || values.size() != diverged.size())
    throw UsageError("summarize: empty or mismatched input");
  MetricSummary s;
  int div_count = 0;
  std::vector<double> alive;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (diverged[i] || !std::isfinite(values[i]))
      ++div_count;
    else
      alive.push_back(values[i]);
  }
  s.divergence_pct = 100.0 * static_cast<double>(div_count) /
                     static_cast<double>(values.size());
  if (alive.empty()) return s;
  std::sort(alive.begin(), alive.end());

  if (policy == OutlierPolicy::zscore && alive.size() >= 3) {
    // z-scores on log values: percentage errors are heavy-tailed.
    std::vector<double> logs(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i)
      logs[i] = std::log(std::max(alive[i], 1e-300));
    double mean = 0;
    for (double v : logs) mean += v;
    mean /= static_cast<double>(logs.size());
    double var = 0;
    for (double v : logs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(logs.size());
    double sd = std::sqrt(var);
    if (sd > 0) {
      std::vector<double> kept;
      for (std::size_t i = 0; i < alive.size(); ++i) {
        if (std::fabs(logs[i] - mean) / sd > z_threshold)
          ++s.outliers_removed;
        else
          kept.push_back(alive[i]);
      }
      alive = std::move(kept);
    }
  }
  if (alive.empty()) return s;
  s.population = static_cast<int>(alive.size());
  double mean = 0;
  for (double v : alive) mean += v;
  s.mean = mean / static_cast<double>(alive.size());
  s.median = percentile(alive, 50.0);
  s.p90 = percentile(alive, 90.0);
  return s;
}

}  // namespace sendi

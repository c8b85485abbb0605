#include "sendi/signal.hpp"

#include <cmath>
#include <iostream>

namespace sendi {

void NoiseSpec::validate() const {
  if (level < 0 || !std::isfinite(level)) throw ConfigError("noise: level must be >= 0");
}

Trajectory add_noise(const Trajectory& traj, const NoiseSpec& spec) {
  spec.validate();
  Trajectory out = traj;
  if (spec.level == 0.0) return out;
  RngStream rng(spec.seed);
  const Eigen::Index n = traj.length();
  for (Eigen::Index j = 0; j < traj.state_dim(); ++j) {
    double mean = traj.states.col(j).mean();
    double sd = std::sqrt((traj.states.col(j).array() - mean).square().sum() /
                          static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      out.states(i, j) += spec.level * rng.normal(0.0, sd);
  }
  return out;
}

Vec central_difference(const Vec& values, double h) {
  const Eigen::Index n = values.size();
  if (n < 3) throw UsageError("central_difference: need at least 3 samples");
  Vec d(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) d(i) = (values(i + 1) - values(i - 1)) / (2 * h);
  d(0) = (-3 * values(0) + 4 * values(1) - values(2)) / (2 * h);
  d(n - 1) = (3 * values(n - 1) - 4 * values(n - 2) + values(n - 3)) / (2 * h);
  return d;
}

Mat central_difference(const Trajectory& traj) {
  if (traj.length() < 3) throw UsageError("central_difference: need at least 3 samples");
  if (!traj.has_uniform_grid())
    throw UsageError(
        "central_difference: non-uniform grid; use gradient_nonuniform instead");
  const double h = traj.dt();
  Mat d(traj.length(), traj.state_dim());
  for (Eigen::Index j = 0; j < traj.state_dim(); ++j)
    d.col(j) = central_difference(Vec(traj.states.col(j)), h);
  return d;
}

Vec gradient_nonuniform(const Vec& values, const std::vector<double>& times) {
  const Eigen::Index n = values.size();
  if (n < 3) throw UsageError("gradient: need at least 3 samples");
  if (static_cast<Eigen::Index>(times.size()) != n)
    throw DimensionError("gradient: times/values length mismatch");
  Vec d(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    double h1 = times[i] - times[i - 1];
    double h2 = times[i + 1] - times[i];
    d(i) = (values(i + 1) * h1 * h1 - values(i - 1) * h2 * h2 +
            values(i) * (h2 * h2 - h1 * h1)) /
           (h1 * h2 * (h1 + h2));
  }
  double h0 = times[1] - times[0];
  d(0) = (values(1) - values(0)) / h0;
  double hn = times[n - 1] - times[n - 2];
  d(n - 1) = (values(n - 1) - values(n - 2)) / hn;
  return d;
}

Vec cumtrapz(const Vec& derivs, const std::vector<double>& times, double initial) {
  const Eigen::Index n = derivs.size();
  if (static_cast<Eigen::Index>(times.size()) != n)
    throw DimensionError("cumtrapz: times/values length mismatch");
  Vec out(n);
  if (n == 0) return out;
  out(0) = initial;
  for (Eigen::Index i = 1; i < n; ++i)
    out(i) = out(i - 1) + 0.5 * (times[i] - times[i - 1]) * (derivs(i) + derivs(i - 1));
  return out;
}

namespace {

// y = A u, cumulative trapezoid with y(0) = 0.
Vec apply_integration(const Vec& u, const std::vector<double>& t) {
  const Eigen::Index n = u.size();
  Vec y(n);
  y(0) = 0.0;
  for (Eigen::Index i = 1; i < n; ++i)
    y(i) = y(i - 1) + 0.5 * (t[i] - t[i - 1]) * (u(i) + u(i - 1));
  return y;
}

// g = A^T r via suffix sums.
Vec apply_integration_transpose(const Vec& r, const std::vector<double>& t) {
  const Eigen::Index n = r.size();
  Vec suffix(n + 1);
  suffix(n) = 0.0;
  for (Eigen::Index i = n - 1; i >= 0; --i) suffix(i) = suffix(i + 1) + r(i);
  Vec g(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double acc = 0.0;
    if (j > 0) acc += 0.5 * (t[j] - t[j - 1]) * suffix(j);
    if (j + 1 < n) acc += 0.5 * (t[j + 1] - t[j]) * suffix(j + 1);
    g(j) = acc;
  }
  return g;
}

// g = D^T (w .* (D u)) with (Du)_k = u_{k+1} - u_k.
Vec apply_tv_term(const Vec& u, const Vec& w) {
  const Eigen::Index n = u.size();
  Vec g = Vec::Zero(n);
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    double d = w(k) * (u(k + 1) - u(k));
    g(k) -= d;
    g(k + 1) += d;
  }
  return g;
}

double tv_objective(const Vec& u, const Vec& fhat, const std::vector<double>& t,
                    double reg) {
  Vec r = apply_integration(u, t) - fhat;
  double tv = 0.0;
  for (Eigen::Index k = 0; k + 1 < u.size(); ++k) tv += std::fabs(u(k + 1) - u(k));
  return 0.5 * r.squaredNorm() + reg * tv;
}

}  // namespace

double default_tv_weight(const Vec& values) {
  double mean = values.mean();
  double sd = std::sqrt((values.array() - mean).square().sum() /
                        static_cast<double>(values.size()));
  return 1e-2 * sd;
}

TvResult tv_differentiate(const Vec& values, const std::vector<double>& times,
                          double reg_weight, int iters) {
  const Eigen::Index n = values.size();
  if (n < 3) throw UsageError("tv_differentiate: need at least 3 samples");
  if (static_cast<Eigen::Index>(times.size()) != n)
    throw DimensionError("tv_differentiate: times/values length mismatch");
  if (reg_weight <= 0) throw ConfigError("tv_differentiate: reg_weight must be positive");
  if (iters < 1) throw ConfigError("tv_differentiate: iters must be >= 1");

  const Vec fhat = values.array() - values(0);
  constexpr double kEdgeSmooth = 1e-8;

  TvResult res;
  res.derivative = gradient_nonuniform(values, times);
  Vec& u = res.derivative;
  double prev_obj = tv_objective(u, fhat, times, reg_weight);
  res.objective_history.push_back(prev_obj);

  for (int outer = 0; outer < iters; ++outer) {
    // Lagged diffusivity weights for the current iterate.
    Vec w(n - 1);
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
      double d = u(k + 1) - u(k);
      w(k) = 1.0 / std::sqrt(d * d + kEdgeSmooth * kEdgeSmooth);
    }
    // Solve (A^T A + reg * D^T W D) u = A^T fhat by conjugate gradients; the
    // operator applications are all O(n).
    auto op = [&](const Vec& x) -> Vec {
      return apply_integration_transpose(apply_integration(x, times), times) +
             reg_weight * apply_tv_term(x, w);
    };
    Vec b = apply_integration_transpose(fhat, times);
    Vec r = b - op(u);
    Vec p = r;
    double rs = r.squaredNorm();
    // Inexact inner solves are fine: warm-started CG decreases the quadratic
    // majorant monotonically, so the outer objective still never increases.
    const double cg_tol = 1e-10 * std::max(1.0, b.squaredNorm());
    const int cg_cap = std::min(4 * static_cast<int>(n), 200);
    for (int it = 0; it < cg_cap && rs > cg_tol; ++it) {
      Vec ap = op(p);
      double alpha = rs / p.dot(ap);
      u += alpha * p;
      r -= alpha * ap;
      double rs_new = r.squaredNorm();
      p = r + (rs_new / rs) * p;
      rs = rs_new;
    }

    double obj = tv_objective(u, fhat, times, reg_weight);
    res.objective_history.push_back(obj);
    res.iterations = outer + 1;
    if (std::fabs(prev_obj - obj) <= 1e-9 * std::max(1.0, std::fabs(prev_obj))) {
      res.converged = true;
      break;
    }
    prev_obj = obj;
  }
  return res;
}

DenoisedChannel denoise_channel(const Vec& noisy, const std::vector<double>& times,
                                double reg_weight, int iters) {
  if (reg_weight <= 0) reg_weight = default_tv_weight(noisy);
  TvResult tv = tv_differentiate(noisy, times, reg_weight, iters);
  Vec rebuilt = cumtrapz(tv.derivative, times, 0.0);
  double offset = (noisy - rebuilt).mean();
  DenoisedChannel out;
  out.smoothed = rebuilt.array() + offset;
  out.derivative = tv.derivative;
  return out;
}

std::vector<Window> make_windows(const Trajectory& traj, int width, WindowMode mode,
                                 int stride, int trajectory_id) {
  if (width < 1) throw UsageError("make_windows: width must be >= 1");
  const Eigen::Index n = traj.length();
  std::vector<Window> out;
  if (width > n) {
    std::cerr << "make_windows: width " << width << " exceeds trajectory length " << n
              << "; no windows produced\n";
    return out;
  }
  if (mode == WindowMode::fixed) {
    if (stride <= 0) stride = width;
    for (Eigen::Index start = 0; start + width <= n; start += stride)
      out.push_back({trajectory_id, start, width, "fixed"});
  } else {
    if (stride <= 0) stride = width;
    for (Eigen::Index len = width; len <= n; len += stride)
      out.push_back({trajectory_id, 0, len, "expanding"});
  }
  return out;
}

}  // namespace sendi

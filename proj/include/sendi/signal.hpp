#pragma once

#include <string>
#include <vector>

#include "sendi/systems.hpp"

namespace sendi {

// Gaussian perturbation scaled per channel by the clean channel's standard
// deviation over the full trajectory, so `level` is comparable across windows.
struct NoiseSpec {
  double level = 0.0;  // dimensionless
  std::uint64_t seed = 0;

  void validate() const;
};

Trajectory add_noise(const Trajectory& traj, const NoiseSpec& spec);

// Second-order differentiation on a uniform grid: central differences inside,
// one-sided stencils at the ends. Throws UsageError for non-uniform grids
// (use gradient_nonuniform for those).
Mat central_difference(const Trajectory& traj);
Vec central_difference(const Vec& values, double h);
Vec gradient_nonuniform(const Vec& values, const std::vector<double>& times);

// Cumulative trapezoidal integration.
Vec cumtrapz(const Vec& derivs, const std::vector<double>& times, double initial);

// Total-variation regularized differentiation in the integral formulation:
//   minimize 0.5 * ||A u - (f - f0)||^2 + reg_weight * TV(u)
// where A is cumulative trapezoidal integration. Solved by lagged-diffusivity
// outer iterations with conjugate-gradient inner solves.
struct TvResult {
  Vec derivative;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_history;  // non-increasing
};

TvResult tv_differentiate(const Vec& values, const std::vector<double>& times,
                          double reg_weight, int iters = 100);

double default_tv_weight(const Vec& values);  // 1e-2 * std(values)

// Denoise one channel: TV derivative, re-integrate, then shift so the result
// matches the noisy samples in the mean (the initial sample alone would carry
// its full noise into the offset).
struct DenoisedChannel {
  Vec smoothed;
  Vec derivative;
};
DenoisedChannel denoise_channel(const Vec& noisy, const std::vector<double>& times,
                                double reg_weight = -1.0, int iters = 100);

// Contiguous index slice of a trajectory used as one identification sample.
struct Window {
  int trajectory_id = 0;
  Eigen::Index start = 0;
  Eigen::Index length = 0;
  std::string mode;  // "fixed" or "expanding"
};

enum class WindowMode { fixed, expanding };

// fixed: windows of exactly `width` every `stride` samples (stride defaults
// to width, giving a partition). expanding: prefixes of lengths width,
// width+stride, width+2*stride, ... capped at the trajectory length.
std::vector<Window> make_windows(const Trajectory& traj, int width, WindowMode mode,
                                 int stride = 0, int trajectory_id = 0);

}  // namespace sendi

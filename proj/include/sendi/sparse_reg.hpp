#pragma once

#include "sendi/library.hpp"
#include "sendi/signal.hpp"
#include "sendi/systems.hpp"

namespace sendi {

enum class SparseSolverKind { stlsq, lasso };

struct StlsqConfig {
  double threshold = 0.05;
  double ridge = 1e-10;
  int max_iters = 20;
  SparseSolverKind solver = SparseSolverKind::stlsq;
  // Coordinate-descent settings, used when solver == lasso.
  double lasso_tol = 1e-12;
  int lasso_max_sweeps = 20000;

  void validate() const;
};

// Sparse parameter matrix: column j holds the library weights for state
// derivative j. Masked-out entries are exactly zero.
struct CoefficientMatrix {
  Mat coeffs;  // terms x l
  std::vector<std::vector<bool>> mask;  // mask[term][state], true = active
  bool degenerate = false;
  std::uint64_t library_hash = 0;

  bool active(int term, int state) const { return mask[static_cast<std::size_t>(term)][static_cast<std::size_t>(state)]; }
  int support_size(int state) const;
};

// Sequentially thresholded ridge regression (default) or coordinate-descent
// L1 behind the same interface. Rank-deficient active sets fall back to a
// least-norm solve and set the degeneracy flag.
CoefficientMatrix stlsq(const Mat& theta, const Mat& targets, const StlsqConfig& cfg);

// Differentiate a window of a trajectory, evaluate the library on it and run
// the sparse solver; failures are rethrown with the window id attached.
CoefficientMatrix identify_local(const Trajectory& traj, const Window& window,
                                 const FeatureLibrary& lib, const StlsqConfig& cfg);

struct LorenzFit {
  double sigma = 0;
  double rho = 0;
  double beta = 0;
};

// Per-parameter least squares on the rearranged targets
//   dx = sigma (y - x),  dy + y + x z = rho x,  x y - dz = beta z.
LorenzFit identify_lorenz_constrained(const Mat& states, const Mat& derivs);
LorenzFit identify_lorenz_constrained(const Trajectory& traj);  // central differences

// Noisy variant: per-channel TV differentiation, trapezoidal reintegration,
// then the constrained fits on the smoothed signals.
LorenzFit identify_lorenz_denoised(const Trajectory& noisy, double reg_weight = -1.0,
                                   int iters = -1);  // -1: pipeline default (40)

}  // namespace sendi

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sendi/ode.hpp"

namespace sendi {

// Predator-prey rates; the control channel bounds the predator balance.
struct LotkaVolterraParams {
  double alpha = 0.5;
  double beta = 0.025;
  double delta = 0.5;
  double gamma = 0.005;
  double control = 0.0;  // constant control value c

  void validate() const;
};

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;

  void validate() const;
};

// Uniformly or non-uniformly sampled multivariate time series with an
// optional control block and a provenance record (system, parameters, seed).
struct Trajectory {
  std::vector<double> times;
  Mat states;    // N x l
  Mat controls;  // N x p, 0 columns when absent
  std::string provenance;  // JSON text

  Eigen::Index length() const { return states.rows(); }
  Eigen::Index state_dim() const { return states.cols(); }
  Eigen::Index control_dim() const { return controls.cols(); }
  bool has_uniform_grid(double tol = 1e-9) const;
  double dt() const;  // grid step; requires a uniform grid
  void validate() const;
};

std::vector<double> uniform_grid(double t0, double t1, Eigen::Index steps);

Trajectory simulate_lotka_volterra(const LotkaVolterraParams& params, double x0, double y0,
                                   const std::vector<double>& t_grid,
                                   const OdeTolerances& tol = {});

Trajectory simulate_lorenz(const LorenzParams& params, double x0, double y0, double z0,
                           const std::vector<double>& t_grid,
                           const OdeTolerances& tol = {});

// Analytic right-hand sides, shared by the simulators and by tests that need
// exact derivatives.
void lotka_volterra_rhs(const LotkaVolterraParams& p, double x, double y, double& dx,
                        double& dy);
void lorenz_rhs(const LorenzParams& p, double x, double y, double z, double& dx, double& dy,
                double& dz);

// CSV with header t,x1..xl[,u1..up]; provenance goes to <path>.json.
void save_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_csv(const std::string& path);

}  // namespace sendi

#pragma once

#include "sendi/systems.hpp"

namespace sendi {

// 1-D heat conduction with a space-dependent diffusivity dip. Nodes sit on
// z_i = i*dz including both boundaries; the left boundary carries a prescribed
// temperature-gradient inflow that switches off once the surface exceeds
// t_max, the right boundary is insulated.
struct HeatProblem {
  double length = 0.01;        // m
  int node_count = 101;
  double alpha_ref = 1e-6;     // m^2/s
  double center = 0.005;       // abnormality center G, m
  double ratio = 60.0;         // alpha_ref / alpha at the dip minimum
  double half_width = 0.001;   // half-width of the dip, m
  double flux = 30000.0;       // q0/k, K/m
  double t_max = 500.0;        // heating cutoff, deg C
  double t_initial = 20.0;     // deg C
  double dt = 1.0;             // s
  double horizon = 200.0;      // s
  Vec initial_profile;         // optional per-node start; empty = uniform t_initial

  void validate() const;
};

// alpha(z) = alpha_ref - A exp(-B (G - z)^6), with A chosen so the minimum is
// alpha_ref/ratio and B = ln 2 / half_width^6.
double alpha_profile(const HeatProblem& problem, double z);

// Implicit-Euler solve of the conservative flux-form discretization. Output
// states hold the temperature at every node per step (including t = 0). The
// flux cutoff is evaluated on the previous step's surface temperature so each
// step stays a single linear solve.
Trajectory simulate_heat_1d(const HeatProblem& problem);

// Control-volume weights of the discretization (half cells at the ends).
// sum_i w_i T_i is conserved exactly when both boundaries are insulated.
Vec heat_volume_weights(const HeatProblem& problem);

}  // namespace sendi

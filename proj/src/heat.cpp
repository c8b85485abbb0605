#include "sendi/heat.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace sendi {

void HeatProblem::validate() const {
  if (length <= 0 || !std::isfinite(length)) throw ConfigError("heat: length must be positive");
  if (node_count < 3) throw ConfigError("heat: node_count must be >= 3");
  if (!(center > 0 && center < length)) throw ConfigError("heat: center must lie in (0, L)");
  if (!(ratio > 1.0)) throw ConfigError("heat: ratio must exceed 1");
  if (alpha_ref <= 0) throw ConfigError("heat: alpha_ref must be positive");
  if (half_width <= 0) throw ConfigError("heat: half_width must be positive");
  if (dt <= 0) throw ConfigError("heat: dt must be positive");
  if (horizon < dt) throw ConfigError("heat: horizon shorter than one step");
  if (initial_profile.size() > 0 && initial_profile.size() != node_count)
    throw ConfigError("heat: initial_profile length must match node_count");
}

double alpha_profile(const HeatProblem& problem, double z) {
  const double amplitude = problem.alpha_ref * (1.0 - 1.0 / problem.ratio);
  const double b = std::log(2.0) / std::pow(problem.half_width, 6);
  const double d = problem.center - z;
  return problem.alpha_ref - amplitude * std::exp(-b * std::pow(d, 6));
}

Vec heat_volume_weights(const HeatProblem& problem) {
  const int n = problem.node_count;
  const double dz = problem.length / static_cast<double>(n - 1);
  Vec w = Vec::Constant(n, dz);
  w(0) = 0.5 * dz;
  w(n - 1) = 0.5 * dz;
  return w;
}

namespace {

// Thomas solve for a tridiagonal system; the heat matrix is strictly
// diagonally dominant so no pivoting is needed.
void solve_tridiagonal(Vec& lower, Vec& diag, Vec& upper, Vec& rhs) {
  const Eigen::Index n = diag.size();
  for (Eigen::Index i = 1; i < n; ++i) {
    if (std::fabs(diag(i - 1)) < 1e-300)
      throw NumericError("heat: singular tridiagonal system");
    double m = lower(i) / diag(i - 1);
    diag(i) -= m * upper(i - 1);
    rhs(i) -= m * rhs(i - 1);
  }
  if (std::fabs(diag(n - 1)) < 1e-300)
    throw NumericError("heat: singular tridiagonal system");
  rhs(n - 1) /= diag(n - 1);
  for (Eigen::Index i = n - 2; i >= 0; --i)
    rhs(i) = (rhs(i) - upper(i) * rhs(i + 1)) / diag(i);
}

}  // namespace

Trajectory simulate_heat_1d(const HeatProblem& problem) {
  problem.validate();
  const int n = problem.node_count;
  const double dz = problem.length / static_cast<double>(n - 1);
  const long steps = static_cast<long>(std::llround(problem.horizon / problem.dt));

  Vec alpha(n);
  for (int i = 0; i < n; ++i) alpha(i) = alpha_profile(problem, i * dz);
  Vec face(n - 1);  // arithmetic-mean face diffusivity
  for (int i = 0; i + 1 < n; ++i) face(i) = 0.5 * (alpha(i) + alpha(i + 1));
  Vec vol = heat_volume_weights(problem);

  Trajectory traj;
  traj.times.resize(static_cast<std::size_t>(steps) + 1);
  traj.states = Mat(steps + 1, n);
  traj.controls = Mat(steps + 1, 0);

  Vec temp = problem.initial_profile.size() > 0 ? problem.initial_profile
                                                : Vec::Constant(n, problem.t_initial);
  traj.times[0] = 0.0;
  traj.states.row(0) = temp.transpose();

  Vec lower(n), diag(n), upper(n), rhs(n);
  for (long s = 1; s <= steps; ++s) {
    // vol_i (T_i^{new} - T_i^{old}) / dt = sum of face fluxes into node i.
    lower.setZero();
    upper.setZero();
    for (int i = 0; i < n; ++i) {
      double c = vol(i) / problem.dt;
      double west = (i > 0) ? face(i - 1) / dz : 0.0;
      double east = (i + 1 < n) ? face(i) / dz : 0.0;
      diag(i) = c + west + east;
      if (i > 0) lower(i) = -west;
      if (i + 1 < n) upper(i) = -east;
      rhs(i) = c * temp(i);
    }
    // Heating switch depends on the surface value before the step.
    const bool heating = temp(0) < problem.t_max;
    if (heating) rhs(0) += alpha(0) * problem.flux;

    solve_tridiagonal(lower, diag, upper, rhs);
    temp = rhs;
    if (!temp.allFinite()) throw NumericError("heat: non-finite temperature field");
    traj.times[static_cast<std::size_t>(s)] = s * problem.dt;
    traj.states.row(s) = temp.transpose();
  }

  nlohmann::json prov;
  prov["system"] = "heat_1d";
  prov["parameters"] = {{"length", problem.length},     {"node_count", problem.node_count},
                        {"alpha_ref", problem.alpha_ref}, {"center", problem.center},
                        {"ratio", problem.ratio},       {"half_width", problem.half_width},
                        {"flux", problem.flux},         {"t_max", problem.t_max},
                        {"t_initial", problem.t_initial}, {"dt", problem.dt},
                        {"horizon", problem.horizon}};
  traj.provenance = prov.dump();
  return traj;
}

}  // namespace sendi

#include "sendi/systems.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sendi {

void LotkaVolterraParams::validate() const {
  for (double v : {alpha, beta, delta, gamma, control})
    if (!std::isfinite(v)) throw ConfigError("lotka-volterra: non-finite parameter");
  if (alpha <= 0 || beta <= 0 || delta <= 0 || gamma <= 0)
    throw ConfigError("lotka-volterra: rates must be positive");
}

void LorenzParams::validate() const {
  for (double v : {sigma, rho, beta})
    if (!std::isfinite(v)) throw ConfigError("lorenz: non-finite parameter");
}

bool Trajectory::has_uniform_grid(double tol) const {
  if (times.size() < 3) return true;
  double h = times[1] - times[0];
  for (std::size_t i = 2; i < times.size(); ++i)
    if (std::fabs((times[i] - times[i - 1]) - h) > tol * std::max(1.0, std::fabs(h)))
      return false;
  return true;
}

double Trajectory::dt() const {
  if (times.size() < 2) throw UsageError("trajectory: no grid step with < 2 samples");
  if (!has_uniform_grid()) throw UsageError("trajectory: grid is not uniform");
  return times[1] - times[0];
}

void Trajectory::validate() const {
  if (static_cast<Eigen::Index>(times.size()) != states.rows())
    throw DataError("trajectory: times/states row mismatch");
  if (controls.size() > 0 && controls.rows() != states.rows())
    throw DataError("trajectory: times/controls row mismatch");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1])
      throw DataError("trajectory: times must be strictly increasing");
}

std::vector<double> uniform_grid(double t0, double t1, Eigen::Index steps) {
  if (steps < 1 || t1 <= t0) throw UsageError("uniform_grid: bad range");
  std::vector<double> g(static_cast<std::size_t>(steps) + 1);
  double h = (t1 - t0) / static_cast<double>(steps);
  for (Eigen::Index i = 0; i <= steps; ++i) g[static_cast<std::size_t>(i)] = t0 + h * i;
  return g;
}

void lotka_volterra_rhs(const LotkaVolterraParams& p, double x, double y, double& dx,
                        double& dy) {
  dx = p.alpha * x - p.beta * x * y;
  dy = p.delta * x * y - p.gamma * y + p.control;
}

void lorenz_rhs(const LorenzParams& p, double x, double y, double z, double& dx, double& dy,
                double& dz) {
  dx = p.sigma * (y - x);
  dy = p.rho * x - y - x * z;
  dz = x * y - p.beta * z;
}

Trajectory simulate_lotka_volterra(const LotkaVolterraParams& params, double x0, double y0,
                                   const std::vector<double>& t_grid,
                                   const OdeTolerances& tol) {
  params.validate();
  Vec y0v(2);
  y0v << x0, y0;
  OdeRhs rhs = [&params](double, const Vec& y, Vec& d) {
    lotka_volterra_rhs(params, y(0), y(1), d(0), d(1));
  };
  Trajectory traj;
  traj.times = t_grid;
  traj.states = integrate_dopri5(rhs, y0v, t_grid, tol);
  traj.controls = Mat::Constant(traj.states.rows(), 1, params.control);
  nlohmann::json prov;
  prov["system"] = "lotka_volterra";
  prov["parameters"] = {{"alpha", params.alpha}, {"beta", params.beta},
                        {"delta", params.delta}, {"gamma", params.gamma},
                        {"control", params.control}};
  prov["initial_state"] = {x0, y0};
  prov["tolerances"] = {{"rel", tol.rel}, {"abs", tol.abs}};
  traj.provenance = prov.dump();
  return traj;
}

Trajectory simulate_lorenz(const LorenzParams& params, double x0, double y0, double z0,
                           const std::vector<double>& t_grid, const OdeTolerances& tol) {
  params.validate();
  Vec y0v(3);
  y0v << x0, y0, z0;
  OdeRhs rhs = [&params](double, const Vec& y, Vec& d) {
    lorenz_rhs(params, y(0), y(1), y(2), d(0), d(1), d(2));
  };
  Trajectory traj;
  traj.times = t_grid;
  traj.states = integrate_dopri5(rhs, y0v, t_grid, tol);
  traj.controls = Mat(traj.states.rows(), 0);
  nlohmann::json prov;
  prov["system"] = "lorenz";
  prov["parameters"] = {{"sigma", params.sigma}, {"rho", params.rho}, {"beta", params.beta}};
  prov["initial_state"] = {x0, y0, z0};
  prov["tolerances"] = {{"rel", tol.rel}, {"abs", tol.abs}};
  traj.provenance = prov.dump();
  return traj;
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
  traj.validate();
  std::ofstream out(path);
  if (!out) throw DataError("trajectory: cannot open for writing: " + path);
  out << "t";
  for (Eigen::Index j = 0; j < traj.state_dim(); ++j) out << ",x" << (j + 1);
  for (Eigen::Index j = 0; j < traj.control_dim(); ++j) out << ",u" << (j + 1);
  out << "\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < traj.length(); ++i) {
    out << traj.times[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < traj.state_dim(); ++j) out << "," << traj.states(i, j);
    for (Eigen::Index j = 0; j < traj.control_dim(); ++j) out << "," << traj.controls(i, j);
    out << "\n";
  }
  std::ofstream side(path + ".json");
  if (!side) throw DataError("trajectory: cannot write sidecar: " + path + ".json");
  side << (traj.provenance.empty() ? "{}" : traj.provenance);
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("trajectory: cannot open: " + path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("trajectory: empty file: " + path);

  int n_state = 0, n_control = 0;
  {
    std::stringstream ss(header);
    std::string col;
    bool first = true;
    while (std::getline(ss, col, ',')) {
      if (first) {
        if (col != "t") throw DataError("trajectory: first column must be t");
        first = false;
      } else if (col.size() > 1 && col[0] == 'x') {
        ++n_state;
      } else if (col.size() > 1 && col[0] == 'u') {
        ++n_control;
      } else {
        throw DataError("trajectory: unknown column '" + col + "'");
      }
    }
  }
  std::vector<double> times;
  std::vector<double> flat;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int idx = 0;
    while (std::getline(ss, cell, ',')) {
      double v = std::stod(cell);
      if (idx == 0)
        times.push_back(v);
      else
        flat.push_back(v);
      ++idx;
    }
    if (idx != 1 + n_state + n_control)
      throw DataError("trajectory: ragged row in " + path);
  }
  const Eigen::Index n = static_cast<Eigen::Index>(times.size());
  Trajectory traj;
  traj.times = std::move(times);
  traj.states = Mat(n, n_state);
  traj.controls = Mat(n, n_control);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < n_state; ++j)
      traj.states(i, j) = flat[static_cast<std::size_t>(i) * (n_state + n_control) + j];
    for (int j = 0; j < n_control; ++j)
      traj.controls(i, j) =
          flat[static_cast<std::size_t>(i) * (n_state + n_control) + n_state + j];
  }
  std::ifstream side(path + ".json");
  if (side) {
    traj.provenance.assign((std::istreambuf_iterator<char>(side)),
                           std::istreambuf_iterator<char>());
  }
  traj.validate();
  return traj;
}

}  // namespace sendi

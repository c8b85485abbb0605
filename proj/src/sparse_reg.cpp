#include "sendi/sparse_reg.hpp"

#include <cmath>
#include <numeric>

namespace sendi {

void StlsqConfig::validate() const {
  if (threshold < 0) throw ConfigError("stlsq: threshold must be >= 0");
  if (ridge < 0) throw ConfigError("stlsq: ridge must be >= 0");
  if (max_iters < 1) throw ConfigError("stlsq: max_iters must be >= 1");
}

int CoefficientMatrix::support_size(int state) const {
  int n = 0;
  for (const auto& row : mask)
    if (row[static_cast<std::size_t>(state)]) ++n;
  return n;
}

namespace {

// Ridge solve restricted to the active columns; least-norm fallback when the
// active block is rank deficient.
Vec solve_active(const Mat& theta, const Vec& y, const std::vector<int>& active,
                 double ridge, bool& degenerate) {
  const int k = static_cast<int>(active.size());
  Mat sub(theta.rows(), k);
  for (int j = 0; j < k; ++j) sub.col(j) = theta.col(active[static_cast<std::size_t>(j)]);

  Eigen::CompleteOrthogonalDecomposition<Mat> cod(sub);
  if (cod.rank() < k) {
    degenerate = true;
    return cod.solve(y);
  }
  if (ridge > 0) {
    Mat gram = sub.transpose() * sub;
    gram.diagonal().array() += ridge;
    return gram.ldlt().solve(sub.transpose() * y);
  }
  return cod.solve(y);
}

Vec lasso_coordinate_descent(const Mat& theta, const Vec& y, double lambda, double tol,
                             int max_sweeps) {
  const int t = static_cast<int>(theta.cols());
  Vec beta = Vec::Zero(t);
  Vec residual = y;
  Vec col_sq(t);
  for (int j = 0; j < t; ++j) col_sq(j) = theta.col(j).squaredNorm();

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (int j = 0; j < t; ++j) {
      if (col_sq(j) <= 0) continue;
      double rho = theta.col(j).dot(residual) + col_sq(j) * beta(j);
      double bj;
      if (rho > lambda)
        bj = (rho - lambda) / col_sq(j);
      else if (rho < -lambda)
        bj = (rho + lambda) / col_sq(j);
      else
        bj = 0.0;
      double delta = bj - beta(j);
      if (delta != 0.0) {
        residual -= delta * theta.col(j);
        beta(j) = bj;
        max_delta = std::max(max_delta, std::fabs(delta));
      }
    }
    if (max_delta < tol) break;
  }
  return beta;
}

}  // namespace

CoefficientMatrix stlsq(const Mat& theta, const Mat& targets, const StlsqConfig& cfg) {
  cfg.validate();
  if (theta.rows() != targets.rows())
    throw DimensionError("stlsq: theta/targets row mismatch");
  if (!theta.allFinite() || !targets.allFinite())
    throw NumericError("stlsq: non-finite entries");

  const int t = static_cast<int>(theta.cols());
  const int l = static_cast<int>(targets.cols());

  CoefficientMatrix out;
  out.coeffs = Mat::Zero(t, l);
  out.mask.assign(static_cast<std::size_t>(t),
                  std::vector<bool>(static_cast<std::size_t>(l), false));

  for (int state = 0; state < l; ++state) {
    Vec y = targets.col(state);

    if (cfg.solver == SparseSolverKind::lasso) {
      Vec beta =
          lasso_coordinate_descent(theta, y, cfg.threshold, cfg.lasso_tol, cfg.lasso_max_sweeps);
      bool any = false;
      for (int j = 0; j < t; ++j) {
        if (beta(j) != 0.0) {
          out.coeffs(j, state) = beta(j);
          out.mask[static_cast<std::size_t>(j)][static_cast<std::size_t>(state)] = true;
          any = true;
        }
      }
      if (!any) out.degenerate = true;
      continue;
    }

    std::vector<int> active(t);
    std::iota(active.begin(), active.end(), 0);
    bool degenerate = false;
    Vec xi;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
      if (active.empty()) break;
      xi = solve_active(theta, y, active, cfg.ridge, degenerate);
      std::vector<int> kept;
      for (std::size_t j = 0; j < active.size(); ++j)
        if (std::fabs(xi(static_cast<Eigen::Index>(j))) >= cfg.threshold)
          kept.push_back(active[j]);
      if (kept.size() == active.size()) break;  // support stabilized
      active = std::move(kept);
      xi.resize(0);
    }
    if (active.empty()) {
      out.degenerate = true;
      continue;
    }
    if (xi.size() == 0) xi = solve_active(theta, y, active, cfg.ridge, degenerate);
    for (std::size_t j = 0; j < active.size(); ++j) {
      out.coeffs(active[j], state) = xi(static_cast<Eigen::Index>(j));
      out.mask[static_cast<std::size_t>(active[j])][static_cast<std::size_t>(state)] = true;
    }
    out.degenerate = out.degenerate || degenerate;
  }
  return out;
}

CoefficientMatrix identify_local(const Trajectory& traj, const Window& window,
                                 const FeatureLibrary& lib, const StlsqConfig& cfg) {
  try {
    if (window.start < 0 || window.start + window.length > traj.length())
      throw UsageError("window out of range");
    Trajectory slice;
    slice.times.assign(traj.times.begin() + window.start,
                       traj.times.begin() + window.start + window.length);
    slice.states = traj.states.middleRows(window.start, window.length);
    slice.controls = traj.controls.rows() > 0
                         ? Mat(traj.controls.middleRows(window.start, window.length))
                         : Mat(window.length, 0);
    Mat derivs = central_difference(slice);
    Mat theta = lib.evaluate(slice.states, slice.controls);
    CoefficientMatrix xi = stlsq(theta, derivs, cfg);
    xi.library_hash = lib.hash();
    return xi;
  } catch (const std::runtime_error& e) {
    throw DataError("window " + std::to_string(window.trajectory_id) + ":" +
                    std::to_string(window.start) + "+" + std::to_string(window.length) +
                    ": " + e.what());
  }
}

namespace {

double ratio_fit(const Vec& target, const Vec& regressor, const char* name) {
  double denom = regressor.squaredNorm();
  double scale = std::max(1.0, target.squaredNorm());
  if (denom < 1e-12 * scale / std::max<double>(1, target.size()))
    throw NumericError(std::string("lorenz fit: regressor for ") + name +
                       " is numerically zero");
  return regressor.dot(target) / denom;
}

}  // namespace

LorenzFit identify_lorenz_constrained(const Mat& states, const Mat& derivs) {
  if (states.cols() != 3) throw DimensionError("lorenz fit: need 3 state channels");
  if (states.rows() != derivs.rows() || derivs.cols() != 3)
    throw DimensionError("lorenz fit: derivative shape mismatch");

  Vec x = states.col(0), y = states.col(1), z = states.col(2);
  Vec dx = derivs.col(0), dy = derivs.col(1), dz = derivs.col(2);

  LorenzFit fit;
  Vec ymx = y - x;
  fit.sigma = ratio_fit(dx, ymx, "sigma");
  Vec rho_target = dy + y + x.cwiseProduct(z);
  fit.rho = ratio_fit(rho_target, x, "rho");
  Vec beta_target = x.cwiseProduct(y) - dz;
  fit.beta = ratio_fit(beta_target, z, "beta");
  return fit;
}

LorenzFit identify_lorenz_constrained(const Trajectory& traj) {
  return identify_lorenz_constrained(traj.states, central_difference(traj));
}

LorenzFit identify_lorenz_denoised(const Trajectory& noisy, double reg_weight, int iters) {
  if (iters <= 0) iters = 40;
  const Eigen::Index n = noisy.length();
  Mat smoothed(n, 3), derivs(n, 3);
  for (int j = 0; j < 3; ++j) {
    DenoisedChannel ch =
        denoise_channel(Vec(noisy.states.col(j)), noisy.times, reg_weight, iters);
    smoothed.col(j) = ch.smoothed;
    derivs.col(j) = ch.derivative;
  }
  return identify_lorenz_constrained(smoothed, derivs);
}

}  // namespace sendi

#include "sendi/ode.hpp"

#include <algorithm>
#include <cmath>

namespace sendi {

namespace {

// Dormand-Prince coefficients (FSAL pair).
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense-output quartic (Hairer's contd5).
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

double error_norm(const Vec& err, const Vec& y0, const Vec& y1, const OdeTolerances& tol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    double sc = tol.abs + tol.rel * std::max(std::fabs(y0(i)), std::fabs(y1(i)));
    double r = err(i) / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

}  // namespace

Mat integrate_dopri5(const OdeRhs& rhs, const Vec& y0, const std::vector<double>& t_grid,
                     const OdeTolerances& tol) {
  if (t_grid.size() < 1) throw UsageError("integrate: empty output grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (t_grid[i] <= t_grid[i - 1])
      throw UsageError("integrate: output grid must be strictly increasing");

  const Eigen::Index dim = y0.size();
  Mat out(static_cast<Eigen::Index>(t_grid.size()), dim);

  double t = t_grid.front();
  Vec y = y0;
  out.row(0) = y.transpose();
  std::size_t next_sample = 1;
  if (next_sample == t_grid.size()) return out;

  Vec k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim), ytmp(dim), ynew(dim),
      err(dim);
  rhs(t, y, k1);

  const double t_end = t_grid.back();
  double h = std::min(1e-3 * std::max(1.0, std::fabs(t_end - t)), t_end - t);
  const double h_min = 1e-14 * std::max(1.0, std::fabs(t_end));

  while (next_sample < t_grid.size()) {
    if (t + h > t_end) h = t_end - t;

    ytmp = y + h * (a21 * k1);
    rhs(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, ytmp, k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs(t + h, ynew, k7);

    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = error_norm(err, y, ynew, tol);

    if (!ynew.allFinite() || !std::isfinite(en)) {
      h *= 0.25;
      if (h < h_min) throw DivergenceError("integrate: state became non-finite", t);
      continue;
    }

    if (en <= 1.0) {
      // Accepted: emit dense-output samples inside (t, t+h].
      Vec dy = ynew - y;
      Vec r3 = h * k1 - dy;
      Vec r4 = dy - h * k7 - r3;
      Vec r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      while (next_sample < t_grid.size() && t_grid[next_sample] <= t + h + 1e-14) {
        double theta = (t_grid[next_sample] - t) / h;
        theta = std::clamp(theta, 0.0, 1.0);
        Vec s = y + theta * (dy + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)));
        out.row(static_cast<Eigen::Index>(next_sample)) = s.transpose();
        ++next_sample;
      }
      t += h;
      y = ynew;
      k1 = k7;  // FSAL
    }

    double fac = 0.9 * std::pow(std::max(en, 1e-10), -0.2);
    h *= std::clamp(fac, 0.2, 5.0);
    if (h < h_min && next_sample < t_grid.size())
      throw DivergenceError("integrate: step size underflow", t);
  }
  return out;
}

}  // namespace sendi

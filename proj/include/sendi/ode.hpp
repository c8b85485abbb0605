#pragma once

#include <functional>
#include <vector>

#include "sendi/common.hpp"

namespace sendi {

struct OdeTolerances {
  double rel = 1e-8;
  double abs = 1e-10;
};

using OdeRhs = std::function<void(double t, const Vec& y, Vec& dydt)>;

// Adaptive Dormand-Prince 5(4) with 4th-order dense output. Samples the
// solution on the caller's grid; throws DivergenceError (carrying the last
// valid time) on step-size underflow or non-finite states.
Mat integrate_dopri5(const OdeRhs& rhs, const Vec& y0, const std::vector<double>& t_grid,
                     const OdeTolerances& tol = {});

}  // namespace sendi

#pragma once

#include <doctest.h>

#include <functional>

#include "sendi/nn.hpp"

namespace sendi::testing {

inline Mat random_mat(Eigen::Index r, Eigen::Index c, RngStream& rng, double lo = -1.0,
                      double hi = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline Vec random_vec(Eigen::Index n, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

// Central finite-difference check of d(loss)/d(param) for every listed
// parameter. `loss_fn` must rebuild the graph from current parameter values.
inline double check_gradients(const std::vector<Param*>& params,
                              const std::function<double()>& loss_fn,
                              const std::function<void()>& backward_fn,
                              double step = 1e-5) {
  for (Param* p : params) p->zero_grad();
  backward_fn();
  double worst = 0.0;
  for (Param* p : params) {
    Mat analytic = p->grad;
    worst = std::max(worst, max_relative_gradient_error(*p, loss_fn, analytic, step));
  }
  return worst;
}

inline Mat permute_rows(const Mat& m, const std::vector<int>& perm) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

inline std::vector<int> random_permutation(int n, RngStream& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  std::shuffle(p.begin(), p.end(), rng.engine());
  return p;
}

}  // namespace sendi::testing

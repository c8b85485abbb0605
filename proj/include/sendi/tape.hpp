#pragma once

#include <functional>
#include <unordered_map>
#include <memory>
#include <string>
#include <vector>

#include "sendi/common.hpp"

namespace sendi {

// A named, persistent trainable parameter. Gradients accumulate into `grad`
// when a tape that references the parameter runs backward().
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
};

class Tape;

// Lightweight handle to a node on a tape. Values are immutable once recorded.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Single-threaded reverse-mode tape over whole-matrix operations. One tape
// records one forward pass; backward() may be called once per recording.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Tensor constant(Mat v);
  Tensor leaf(Param& p);  // gradient sink

  // Linear algebra.
  Tensor matmul(Tensor a, Tensor b);
  Tensor transpose(Tensor a);
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor hadamard(Tensor a, Tensor b);
  Tensor scale(Tensor a, double s);
  Tensor scale_by(Tensor a, Tensor scalar11);  // broadcast multiply by a 1x1 node
  Tensor add_rowvec(Tensor a, Tensor row1xd);  // bias broadcast over rows
  Tensor affine(Tensor a, double s, double c);  // s*a + c elementwise

  // Shape ops.
  Tensor slice_cols(Tensor a, int first, int count);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor slice_rows(Tensor a, int first, int count);

  // Elementwise nonlinearities.
  Tensor relu(Tensor a);
  Tensor gelu(Tensor a);
  Tensor sigmoid(Tensor a);
  Tensor abs(Tensor a);

  // Row-wise softmax with max subtraction. Rejects non-finite input.
  Tensor softmax_rows(Tensor a);

  // Row-wise layer normalization with affine gain/shift (both 1xd).
  Tensor layer_norm_rows(Tensor x, Tensor gain, Tensor shift, double eps = 1e-5);

  // Pooling over the row (set) dimension: n x d -> 1 x d.
  Tensor mean_rows(Tensor a);
  Tensor sum_rows(Tensor a);
  Tensor max_rows(Tensor a);
  Tensor repeat_rows(Tensor row1xd, int n);

  // Reductions to 1x1.
  Tensor sum(Tensor a);
  Tensor mean(Tensor a);
  Tensor sum_squares(Tensor a);
  Tensor l1_norm(Tensor a);
  Tensor l2_norm(Tensor a);  // sqrt(sum of squares), smoothed at 0

  double scalar(Tensor a) const;

  // Populates Param::grad for every learnable leaf reachable from `loss`.
  // `loss` must be 1x1.
  void backward(Tensor loss);

  const Mat& value_of(int id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Param* sink = nullptr;
    std::function<void()> backprop;  // adds into parent grads
  };

  int push(Mat value, bool needs_grad, std::function<void()> backprop = nullptr,
           Param* sink = nullptr);
  Node& node(Tensor t) { return nodes_[t.id()]; }
  bool needs(Tensor t) const { return nodes_[t.id()].needs_grad; }
  Mat& grad(Tensor t) { return nodes_[t.id()].grad; }
  void check_same_tape(Tensor t) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> leaf_cache_;
  bool ran_backward_ = false;
};

// Gradient check helper: central finite differences of `f` w.r.t. `p`,
// compared against the analytic gradient accumulated in p.grad.
double max_relative_gradient_error(Param& p, const std::function<double()>& scalar_fn,
                                   const Mat& analytic_grad, double step = 1e-5);

}  // namespace sendi

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sendi/tape.hpp"

namespace sendi {

enum class Activation { none, relu, gelu, sigmoid };
enum class PoolKind { max, mean, sum, absmean };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);
PoolKind pool_from_string(const std::string& s);
std::string to_string(PoolKind p);

Tensor apply_activation(Tape& tape, Tensor x, Activation act);
Tensor apply_pool(Tape& tape, Tensor x, PoolKind pool);  // n x d -> 1 x d

// Fully connected layer, y = act(x W + b).
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(const std::string& name, int d_in, int d_out, Activation act,
             RngStream& rng);

  Tensor forward(Tape& tape, Tensor x);
  int input_dim() const { return static_cast<int>(weights.value.rows()); }
  int output_dim() const { return static_cast<int>(weights.value.cols()); }
  void collect(std::vector<Param*>& out);

  Param weights;  // d_in x d_out
  Param bias;     // 1 x d_out
  Activation activation = Activation::none;
};

// Permutation-equivariant set layer: y = act((lambda*x + gamma*pool(x)) W).
// The pooled row is broadcast back over the set dimension, so permuting input
// rows permutes output rows identically.
class EquivariantLayer {
 public:
  EquivariantLayer() = default;
  EquivariantLayer(const std::string& name, int d_in, int d_out, PoolKind pool,
                   Activation act, RngStream& rng);

  Tensor forward(Tape& tape, Tensor x);
  void collect(std::vector<Param*>& out);

  Param lambda;   // 1x1
  Param gamma;    // 1x1
  Param weights;  // d_in x d_out
  PoolKind pool = PoolKind::mean;
  Activation activation = Activation::none;
};

// Unscaled dot-product attention: softmax(q k^T) v, softmax row-wise.
Tensor attention(Tape& tape, Tensor q, Tensor k, Tensor v);

// Multi-head attention. Per-head width defaults to model_dim / heads and must
// divide evenly; an explicit head_dim lifts that restriction (each head then
// projects to head_dim and the concatenation has heads*head_dim columns).
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int model_dim, int heads,
                     std::optional<int> head_dim, RngStream& rng);

  Tensor forward(Tape& tape, Tensor q, Tensor k, Tensor v);
  void collect(std::vector<Param*>& out);
  int model_dim() const { return model_dim_; }
  int heads() const { return heads_; }
  int head_dim() const { return head_dim_; }

  Param wq, bq, wk, bk, wv, bv;  // d x (h*p), biases 1 x (h*p)
  Param wo, bo;                  // (h*p) x d, 1 x d

 private:
  int model_dim_ = 0;
  int heads_ = 0;
  int head_dim_ = 0;
};

// Layer normalization with learnable gain/shift.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);
  Tensor forward(Tape& tape, Tensor x);
  void collect(std::vector<Param*>& out);

  Param gain;   // 1 x d
  Param shift;  // 1 x d
  double eps = 1e-5;
};

// Adam with bias correction. Moment buffers are keyed by parameter identity;
// the whole set advances one step per call.
class AdamState {
 public:
  AdamState(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params, double lr);
  long step_count() const { return step_; }

 private:
  double beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<Mat> m_, v_;
  std::vector<const Param*> keys_;
};

// Initializers. Dense layers use uniform fan-in scaling; attention projections
// use a 0.02-scale normal. The draw order is fixed so a seed pins every weight.
Mat init_dense(int d_in, int d_out, RngStream& rng);
Mat init_attention(int d_in, int d_out, RngStream& rng);

long total_param_count(const std::vector<Param*>& params);

}  // namespace sendi

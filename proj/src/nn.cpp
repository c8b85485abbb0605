#include "sendi/nn.hpp"

#include <cmath>

namespace sendi {

Activation activation_from_string(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "none";
}

PoolKind pool_from_string(const std::string& s) {
  if (s == "max") return PoolKind::max;
  if (s == "mean") return PoolKind::mean;
  if (s == "sum") return PoolKind::sum;
  if (s == "absmean") return PoolKind::absmean;
  throw ConfigError("unknown pool kind: " + s);
}

std::string to_string(PoolKind p) {
  switch (p) {
    case PoolKind::max: return "max";
    case PoolKind::mean: return "mean";
    case PoolKind::sum: return "sum";
    case PoolKind::absmean: return "absmean";
  }
  return "mean";
}

Tensor apply_activation(Tape& tape, Tensor x, Activation act) {
  switch (act) {
    case Activation::none: return x;
    case Activation::relu: return tape.relu(x);
    case Activation::gelu: return tape.gelu(x);
    case Activation::sigmoid: return tape.sigmoid(x);
  }
  return x;
}

Tensor apply_pool(Tape& tape, Tensor x, PoolKind pool) {
  switch (pool) {
    case PoolKind::max: return tape.max_rows(x);
    case PoolKind::mean: return tape.mean_rows(x);
    case PoolKind::sum: return tape.sum_rows(x);
    case PoolKind::absmean: return tape.mean_rows(tape.abs(x));
  }
  return tape.mean_rows(x);
}

Mat init_dense(int d_in, int d_out, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(d_in));
  Mat w(d_in, d_out);
  for (int i = 0; i < d_in; ++i)
    for (int j = 0; j < d_out; ++j) w(i, j) = rng.uniform(-bound, bound);
  return w;
}

Mat init_attention(int d_in, int d_out, RngStream& rng) {
  Mat w(d_in, d_out);
  for (int i = 0; i < d_in; ++i)
    for (int j = 0; j < d_out; ++j) w(i, j) = rng.normal(0.0, 0.02);
  return w;
}

DenseLayer::DenseLayer(const std::string& name, int d_in, int d_out, Activation act,
                       RngStream& rng)
    : weights(name + "/weights", init_dense(d_in, d_out, rng)),
      bias(name + "/bias", Mat::Zero(1, d_out)),
      activation(act) {}

Tensor DenseLayer::forward(Tape& tape, Tensor x) {
  if (x.cols() != weights.value.rows())
    throw DimensionError("dense forward: input has " + std::to_string(x.cols()) +
                         " features, layer expects " +
                         std::to_string(weights.value.rows()));
  Tensor y = tape.add_rowvec(tape.matmul(x, tape.leaf(weights)), tape.leaf(bias));
  return apply_activation(tape, y, activation);
}

void DenseLayer::collect(std::vector<Param*>& out) {
  out.push_back(&weights);
  out.push_back(&bias);
}

EquivariantLayer::EquivariantLayer(const std::string& name, int d_in, int d_out,
                                   PoolKind pool_kind, Activation act, RngStream& rng)
    : lambda(name + "/lambda", Mat::Ones(1, 1)),
      gamma(name + "/gamma", Mat::Constant(1, 1, 0.1)),
      weights(name + "/weights", init_dense(d_in, d_out, rng)),
      pool(pool_kind),
      activation(act) {}

Tensor EquivariantLayer::forward(Tape& tape, Tensor x) {
  Tensor pooled = apply_pool(tape, x, pool);
  Tensor mixed = tape.add(tape.scale_by(x, tape.leaf(lambda)),
                          tape.scale_by(tape.repeat_rows(pooled, static_cast<int>(x.rows())),
                                        tape.leaf(gamma)));
  return apply_activation(tape, tape.matmul(mixed, tape.leaf(weights)), activation);
}

void EquivariantLayer::collect(std::vector<Param*>& out) {
  out.push_back(&lambda);
  out.push_back(&gamma);
  out.push_back(&weights);
}

Tensor attention(Tape& tape, Tensor q, Tensor k, Tensor v) {
  if (q.cols() != k.cols())
    throw DimensionError("attention: query/key feature dimensions differ");
  if (k.rows() != v.rows())
    throw DimensionError("attention: key/value row counts differ");
  if (!q.value().allFinite() || !k.value().allFinite() || !v.value().allFinite())
    throw NumericError("attention: non-finite input");
  Tensor scores = tape.matmul(q, tape.transpose(k));
  return tape.matmul(tape.softmax_rows(scores), v);
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, int model_dim, int heads,
                                       std::optional<int> head_dim, RngStream& rng)
    : model_dim_(model_dim), heads_(heads) {
  if (heads < 1 || model_dim < 1)
    throw ConfigError("multi-head attention: heads and model_dim must be positive");
  if (head_dim) {
    head_dim_ = *head_dim;
    if (head_dim_ < 1) throw ConfigError("multi-head attention: head_dim must be positive");
  } else {
    if (model_dim % heads != 0)
      throw ConfigError("multi-head attention: model_dim " + std::to_string(model_dim) +
                        " not divisible by heads " + std::to_string(heads) +
                        "; set head_dim explicitly");
    head_dim_ = model_dim / heads;
  }
  const int inner = heads_ * head_dim_;
  wq = Param(name + "/wq", init_attention(model_dim, inner, rng));
  bq = Param(name + "/bq", Mat::Zero(1, inner));
  wk = Param(name + "/wk", init_attention(model_dim, inner, rng));
  bk = Param(name + "/bk", Mat::Zero(1, inner));
  wv = Param(name + "/wv", init_attention(model_dim, inner, rng));
  bv = Param(name + "/bv", Mat::Zero(1, inner));
  wo = Param(name + "/wo", init_attention(inner, model_dim, rng));
  bo = Param(name + "/bo", Mat::Zero(1, model_dim));
}

Tensor MultiHeadAttention::forward(Tape& tape, Tensor q, Tensor k, Tensor v) {
  if (q.cols() != model_dim_ || k.cols() != model_dim_ || v.cols() != model_dim_)
    throw DimensionError("multi-head attention: inputs must have model_dim columns");
  Tensor qp = tape.add_rowvec(tape.matmul(q, tape.leaf(wq)), tape.leaf(bq));
  Tensor kp = tape.add_rowvec(tape.matmul(k, tape.leaf(wk)), tape.leaf(bk));
  Tensor vp = tape.add_rowvec(tape.matmul(v, tape.leaf(wv)), tape.leaf(bv));
  std::vector<Tensor> heads_out;
  heads_out.reserve(heads_);
  for (int j = 0; j < heads_; ++j) {
    Tensor qj = tape.slice_cols(qp, j * head_dim_, head_dim_);
    Tensor kj = tape.slice_cols(kp, j * head_dim_, head_dim_);
    Tensor vj = tape.slice_cols(vp, j * head_dim_, head_dim_);
    heads_out.push_back(attention(tape, qj, kj, vj));
  }
  Tensor cat = heads_ == 1 ? heads_out.front() : tape.concat_cols(heads_out);
  return tape.add_rowvec(tape.matmul(cat, tape.leaf(wo)), tape.leaf(bo));
}

void MultiHeadAttention::collect(std::vector<Param*>& out) {
  for (Param* p : {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}) out.push_back(p);
}

LayerNorm::LayerNorm(const std::string& name, int dim)
    : gain(name + "/gain", Mat::Ones(1, dim)), shift(name + "/shift", Mat::Zero(1, dim)) {}

Tensor LayerNorm::forward(Tape& tape, Tensor x) {
  return tape.layer_norm_rows(x, tape.leaf(gain), tape.leaf(shift), eps);
}

void LayerNorm::collect(std::vector<Param*>& out) {
  out.push_back(&gain);
  out.push_back(&shift);
}

void AdamState::step(const std::vector<Param*>& params, double lr) {
  if (lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
  if (keys_.empty()) {
    for (const Param* p : params) {
      keys_.push_back(p);
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  } else if (keys_.size() != params.size()) {
    throw UsageError("adam: parameter set changed between steps");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (params[i] != keys_[i]) throw UsageError("adam: parameter order changed");
    if (!p.grad.allFinite())
      throw NumericError("adam: non-finite gradient for parameter '" + p.name + "'");
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    Mat mhat = m_[i] / bc1;
    Mat vhat = v_[i] / bc2;
    p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

long total_param_count(const std::vector<Param*>& params) {
  long n = 0;
  for (const Param* p : params) n += static_cast<long>(p->value.size());
  return n;
}

}  // namespace sendi

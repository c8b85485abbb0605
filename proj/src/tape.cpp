#include "sendi/tape.hpp"

#include <cmath>
#include <sstream>

namespace sendi {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

const Mat& Tensor::value() const { return tape_->value_of(id_); }

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string base64_encode(const void* data, std::size_t n) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  const auto* p = static_cast<const unsigned char*>(data);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    unsigned v = p[i] << 16;
    if (i + 1 < n) v |= p[i + 1] << 8;
    if (i + 2 < n) v |= p[i + 2];
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? tbl[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? tbl[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    if (c == '=') return -1;
    throw DataError("base64: invalid character");
  };
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i + 3 < s.size(); i += 4) {
    int a = val(s[i]), b = val(s[i + 1]), c = val(s[i + 2]), d = val(s[i + 3]);
    if (a < 0 || b < 0) throw DataError("base64: malformed block");
    unsigned v = (unsigned(a) << 18) | (unsigned(b) << 12);
    if (c >= 0) v |= unsigned(c) << 6;
    if (d >= 0) v |= unsigned(d);
    out.push_back((v >> 16) & 0xff);
    if (c >= 0) out.push_back((v >> 8) & 0xff);
    if (d >= 0) out.push_back(v & 0xff);
  }
  return out;
}

int Tape::push(Mat value, bool needs_grad, std::function<void()> backprop, Param* sink) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.sink = sink;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_same_tape(Tensor t) const {
  if (t.tape() != this) throw UsageError("tensor belongs to a different tape");
}

Tensor Tape::constant(Mat v) { return Tensor(this, push(std::move(v), false)); }

Tensor Tape::leaf(Param& p) {
  // One node per parameter per tape; repeated requests share the recording.
  auto it = leaf_cache_.find(&p);
  if (it != leaf_cache_.end()) return Tensor(this, it->second);
  int id = push(p.value, true, nullptr, &p);
  leaf_cache_.emplace(&p, id);
  return Tensor(this, id);
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: inner dimensions disagree (" << a.rows() << "x" << a.cols() << " vs "
       << b.rows() << "x" << b.cols() << ")";
    throw DimensionError(os.str());
  }
  Mat v = a.value() * b.value();
  bool ng = needs(a) || needs(b);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, b, id]() {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) grad(a).noalias() += g * b.value().transpose();
      if (needs(b)) grad(b).noalias() += a.value().transpose() * g;
    };
  }
  return Tensor(this, id);
}

Tensor Tape::transpose(Tensor a) {
  check_same_tape(a);
  Mat v = a.value().transpose();
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() { grad(a) += nodes_[id].grad.transpose(); };
  }
  return Tensor(this, id);
}

Tensor Tape::add(Tensor a, Tensor b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("add: shape mismatch");
  bool ng = needs(a) || needs(b);
  int id = push(a.value() + b.value(), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, b, id]() {
      if (needs(a)) grad(a) += nodes_[id].grad;
      if (needs(b)) grad(b) += nodes_[id].grad;
    };
  }
  return Tensor(this, id);
}

Tensor Tape::sub(Tensor a, Tensor b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("sub: shape mismatch");
  bool ng = needs(a) || needs(b);
  int id = push(a.value() - b.value(), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, b, id]() {
      if (needs(a)) grad(a) += nodes_[id].grad;
      if (needs(b)) grad(b) -= nodes_[id].grad;
    };
  }
  return Tensor(this, id);
}

Tensor Tape::hadamard(Tensor a, Tensor b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("hadamard: shape mismatch");
  bool ng = needs(a) || needs(b);
  int id = push(a.value().cwiseProduct(b.value()), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, b, id]() {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) grad(a) += g.cwiseProduct(b.value());
      if (needs(b)) grad(b) += g.cwiseProduct(a.value());
    };
  }
  return Tensor(this, id);
}

Tensor Tape::scale(Tensor a, double s) {
  bool ng = needs(a);
  int id = push(a.value() * s, ng);
  if (ng) nodes_[id].backprop = [this, a, id, s]() { grad(a) += nodes_[id].grad * s; };
  return Tensor(this, id);
}

Tensor Tape::affine(Tensor a, double s, double c) {
  bool ng = needs(a);
  int id = push((a.value().array() * s + c).matrix(), ng);
  if (ng) nodes_[id].backprop = [this, a, id, s]() { grad(a) += nodes_[id].grad * s; };
  return Tensor(this, id);
}

Tensor Tape::scale_by(Tensor a, Tensor scalar11) {
  if (scalar11.rows() != 1 || scalar11.cols() != 1)
    throw DimensionError("scale_by: scale factor must be 1x1");
  double s = scalar11.value()(0, 0);
  bool ng = needs(a) || needs(scalar11);
  int id = push(a.value() * s, ng);
  if (ng) {
    nodes_[id].backprop = [this, a, scalar11, id, s]() {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) grad(a) += g * s;
      if (needs(scalar11)) grad(scalar11)(0, 0) += g.cwiseProduct(a.value()).sum();
    };
  }
  return Tensor(this, id);
}

Tensor Tape::add_rowvec(Tensor a, Tensor row1xd) {
  if (row1xd.rows() != 1 || row1xd.cols() != a.cols())
    throw DimensionError("add_rowvec: bias must be 1 x cols(a)");
  Mat v = a.value().rowwise() + row1xd.value().row(0);
  bool ng = needs(a) || needs(row1xd);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, row1xd, id]() {
      const Mat& g = nodes_[id].grad;
      if (needs(a)) grad(a) += g;
      if (needs(row1xd)) grad(row1xd).row(0) += g.colwise().sum();
    };
  }
  return Tensor(this, id);
}

Tensor Tape::slice_cols(Tensor a, int first, int count) {
  if (first < 0 || count < 1 || first + count > a.cols())
    throw DimensionError("slice_cols: range out of bounds");
  Mat v = a.value().middleCols(first, count);
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id, first, count]() {
      grad(a).middleCols(first, count) += nodes_[id].grad;
    };
  }
  return Tensor(this, id);
}

Tensor Tape::slice_rows(Tensor a, int first, int count) {
  if (first < 0 || count < 1 || first + count > a.rows())
    throw DimensionError("slice_rows: range out of bounds");
  Mat v = a.value().middleRows(first, count);
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id, first, count]() {
      grad(a).middleRows(first, count) += nodes_[id].grad;
    };
  }
  return Tensor(this, id);
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool ng = false;
  for (const Tensor& t : parts) {
    if (t.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += t.cols();
    ng = ng || needs(t);
  }
  Mat v(rows, cols);
  Eigen::Index off = 0;
  for (const Tensor& t : parts) {
    v.middleCols(off, t.cols()) = t.value();
    off += t.cols();
  }
  int id = push(std::move(v), ng);
  if (ng) {
    std::vector<Tensor> ps = parts;
    nodes_[id].backprop = [this, ps, id]() {
      Eigen::Index off = 0;
      for (const Tensor& t : ps) {
        if (needs(t)) grad(t) += nodes_[id].grad.middleCols(off, t.cols());
        off += t.cols();
      }
    };
  }
  return Tensor(this, id);
}

Tensor Tape::relu(Tensor a) {
  bool ng = needs(a);
  int id = push(a.value().cwiseMax(0.0), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() {
      grad(a).array() +=
          nodes_[id].grad.array() * (a.value().array() > 0.0).cast<double>();
    };
  }
  return Tensor(this, id);
}

Tensor Tape::gelu(Tensor a) {
  // Exact form x * Phi(x).
  Mat v = a.value().unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() {
      grad(a).array() += nodes_[id].grad.array() * a.value().array().unaryExpr([](double x) {
        double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return phi + x * pdf;
      });
    };
  }
  return Tensor(this, id);
}

Tensor Tape::sigmoid(Tensor a) {
  Mat v = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() {
      const Mat& y = nodes_[id].value;
      grad(a).array() += nodes_[id].grad.array() * y.array() * (1.0 - y.array());
    };
  }
  return Tensor(this, id);
}

Tensor Tape::abs(Tensor a) {
  bool ng = needs(a);
  int id = push(a.value().cwiseAbs(), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() {
      grad(a).array() += nodes_[id].grad.array() * a.value().array().sign();
    };
  }
  return Tensor(this, id);
}

Tensor Tape::softmax_rows(Tensor a) {
  if (!a.value().allFinite()) throw NumericError("softmax_rows: non-finite input");
  Mat v(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Eigen::ArrayXd row = a.value().row(i).array();
    row -= row.maxCoeff();
    Eigen::ArrayXd e = row.exp();
    v.row(i) = (e / e.sum()).matrix();
  }
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() {
      const Mat& y = nodes_[id].value;
      const Mat& g = nodes_[id].grad;
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        double dot = g.row(i).dot(y.row(i));
        grad(a).row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
      }
    };
  }
  return Tensor(this, id);
}

Tensor Tape::layer_norm_rows(Tensor x, Tensor gain, Tensor shift, double eps) {
  if (gain.rows() != 1 || gain.cols() != x.cols() || shift.rows() != 1 ||
      shift.cols() != x.cols())
    throw DimensionError("layer_norm_rows: gain/shift must be 1 x cols(x)");
  const Eigen::Index n = x.rows(), d = x.cols();
  Mat xhat(n, d);
  Vec inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mu = x.value().row(i).mean();
    double var = (x.value().row(i).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(i) = is;
    xhat.row(i) = ((x.value().row(i).array() - mu) * is).matrix();
  }
  Mat v = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
          shift.value().row(0).array();
  bool ng = needs(x) || needs(gain) || needs(shift);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, x, gain, shift, id, xhat, inv_std]() {
      const Mat& g = nodes_[id].grad;
      if (needs(shift)) grad(shift).row(0) += g.colwise().sum();
      if (needs(gain)) grad(gain).row(0) += g.cwiseProduct(xhat).colwise().sum();
      if (needs(x)) {
        for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
          Eigen::Array<double, 1, Eigen::Dynamic> dxhat =
              g.row(i).array() * gain.value().row(0).array();
          double m1 = dxhat.mean();
          double m2 = (dxhat * xhat.row(i).array()).mean();
          grad(x).row(i).array() +=
              inv_std(i) * (dxhat - m1 - xhat.row(i).array() * m2);
        }
      }
    };
  }
  return Tensor(this, id);
}

Tensor Tape::mean_rows(Tensor a) {
  const double n = static_cast<double>(a.rows());
  Mat v = a.value().colwise().mean();
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id, n]() {
      grad(a).rowwise() += (nodes_[id].grad.row(0) / n);
    };
  }
  return Tensor(this, id);
}

Tensor Tape::sum_rows(Tensor a) {
  Mat v = a.value().colwise().sum();
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() { grad(a).rowwise() += nodes_[id].grad.row(0); };
  }
  return Tensor(this, id);
}

Tensor Tape::max_rows(Tensor a) {
  const Eigen::Index n = a.rows(), d = a.cols();
  Mat v(1, d);
  std::vector<Eigen::Index> arg(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (a.value()(i, j) > a.value()(best, j)) best = i;
    arg[j] = best;
    v(0, j) = a.value()(best, j);
  }
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id, arg]() {
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(arg.size()); ++j)
        grad(a)(arg[j], j) += nodes_[id].grad(0, j);
    };
  }
  return Tensor(this, id);
}

Tensor Tape::repeat_rows(Tensor row1xd, int n) {
  if (row1xd.rows() != 1) throw DimensionError("repeat_rows: input must be 1 x d");
  Mat v = row1xd.value().replicate(n, 1);
  bool ng = needs(row1xd);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, row1xd, id]() {
      grad(row1xd).row(0) += nodes_[id].grad.colwise().sum();
    };
  }
  return Tensor(this, id);
}

Tensor Tape::sum(Tensor a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() {
      grad(a).array() += nodes_[id].grad(0, 0);
    };
  }
  return Tensor(this, id);
}

Tensor Tape::mean(Tensor a) {
  const double n = static_cast<double>(a.rows() * a.cols());
  Mat v(1, 1);
  v(0, 0) = a.value().sum() / n;
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id, n]() {
      grad(a).array() += nodes_[id].grad(0, 0) / n;
    };
  }
  return Tensor(this, id);
}

Tensor Tape::sum_squares(Tensor a) {
  Mat v(1, 1);
  v(0, 0) = a.value().squaredNorm();
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() {
      grad(a) += 2.0 * nodes_[id].grad(0, 0) * a.value();
    };
  }
  return Tensor(this, id);
}

Tensor Tape::l1_norm(Tensor a) {
  Mat v(1, 1);
  v(0, 0) = a.value().cwiseAbs().sum();
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id]() {
      grad(a).array() += nodes_[id].grad(0, 0) * a.value().array().sign();
    };
  }
  return Tensor(this, id);
}

Tensor Tape::l2_norm(Tensor a) {
  constexpr double kSmooth = 1e-12;
  Mat v(1, 1);
  double norm = std::sqrt(a.value().squaredNorm() + kSmooth);
  v(0, 0) = norm;
  bool ng = needs(a);
  int id = push(std::move(v), ng);
  if (ng) {
    nodes_[id].backprop = [this, a, id, norm]() {
      grad(a) += (nodes_[id].grad(0, 0) / norm) * a.value();
    };
  }
  return Tensor(this, id);
}

double Tape::scalar(Tensor a) const {
  if (a.rows() != 1 || a.cols() != 1) throw UsageError("scalar: tensor is not 1x1");
  return a.value()(0, 0);
}

void Tape::backward(Tensor loss) {
  check_same_tape(loss);
  if (loss.rows() != 1 || loss.cols() != 1)
    throw UsageError("backward: loss must be a 1x1 scalar");
  if (ran_backward_) throw UsageError("backward: tape already consumed");
  ran_backward_ = true;

  for (Node& n : nodes_)
    if (n.needs_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  nodes_[loss.id()].grad(0, 0) = 1.0;

  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.backprop) n.backprop();
    if (n.sink) n.sink->grad += n.grad;
  }
}

double max_relative_gradient_error(Param& p, const std::function<double()>& scalar_fn,
                                   const Mat& analytic_grad, double step) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
      const double keep = p.value(i, j);
      p.value(i, j) = keep + step;
      double up = scalar_fn();
      p.value(i, j) = keep - step;
      double down = scalar_fn();
      p.value(i, j) = keep;
      double fd = (up - down) / (2.0 * step);
      double denom = std::max({std::fabs(fd), std::fabs(analytic_grad(i, j)), 1e-8});
      worst = std::max(worst, std::fabs(fd - analytic_grad(i, j)) / denom);
    }
  }
  return worst;
}

}  // namespace sendi

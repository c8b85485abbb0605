#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sendi/checkpoint.hpp"
#include "sendi/nn.hpp"

namespace sendi {

enum class ModelKind { oasis, deep_set, set_transformer };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

// Architecture + feature layout of an identification model. The config hash
// is embedded in checkpoints so weights cannot be loaded into a mismatched
// architecture.
struct ModelConfig {
  ModelKind kind = ModelKind::deep_set;
  int input_dim = 0;
  int output_dim = 0;      // per decoder head
  int decoder_heads = 1;   // parallel decoders sharing one encoder

  // MLP settings (oasis / deep_set).
  std::vector<int> encoder_widths;
  std::vector<int> decoder_widths;
  Activation activation = Activation::relu;
  PoolKind pool = PoolKind::mean;
  bool equivariant_encoder = false;  // lambda/gamma set layers instead of per-row dense
  bool mlp_layer_norm = false;       // LayerNorm after each hidden dense layer

  // Attention settings (set_transformer).
  int model_dim = 0;
  int heads = 1;
  int head_dim = 0;        // 0: model_dim / heads (must divide)
  int inducing_points = 0; // 0: plain self-attention encoder blocks
  int encoder_blocks = 1;
  int rff_layers = 2;
  Activation rff_activation = Activation::none;
  int pooled_dim = 0;      // projection after attention pooling; 0: keep model_dim
  bool decoder_self_attention = true;
  std::vector<int> head_widths;  // final MLP hidden widths

  // Optional affine feature/target maps, fitted on training data and stored
  // with the weights.
  std::vector<double> input_offset, input_scale;
  std::vector<double> target_offset, target_scale;

  std::uint64_t seed = 0;

  int total_output_dim() const { return output_dim * decoder_heads; }
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  std::string hash() const;
};

// Multihead attention block: H = LN(x + MultiHead(x, y, y)),
// out = LN(H + rFF(H)).
class MabBlock {
 public:
  MabBlock() = default;
  MabBlock(const std::string& name, int dim, int heads, std::optional<int> head_dim,
           int rff_layers, Activation rff_act, RngStream& rng);
  Tensor forward(Tape& tape, Tensor x, Tensor y);
  void collect(std::vector<Param*>& out);

  MultiHeadAttention mha;
  LayerNorm norm_attn, norm_ff;
  std::vector<DenseLayer> rff;
};

// Induced self-attention: two chained MABs through m learnable inducing rows,
// O(n*m) instead of O(n^2).
class IsabBlock {
 public:
  IsabBlock() = default;
  IsabBlock(const std::string& name, int dim, int heads, std::optional<int> head_dim,
            int inducing_points, int rff_layers, Activation rff_act, RngStream& rng);
  Tensor forward(Tape& tape, Tensor x);
  void collect(std::vector<Param*>& out);

  Param inducing;  // m x d
  MabBlock project, expand;
};

// Attention pooling from a learnable seed: PMA(z) = MAB(seed, rFF(z)).
class PmaBlock {
 public:
  PmaBlock() = default;
  PmaBlock(const std::string& name, int dim, int heads, std::optional<int> head_dim,
           int seeds, int rff_layers, Activation rff_act, RngStream& rng);
  Tensor forward(Tape& tape, Tensor z);
  void collect(std::vector<Param*>& out);

  Param seed;  // k x d
  std::vector<DenseLayer> rff_z;
  MabBlock mab;
};

// Common interface: a window of rows (time/state/control features) in,
// a parameter vector out. Models are immutable during inference; training
// mutates parameters and needs exclusive access.
class SetModel {
 public:
  virtual ~SetModel() = default;

  // Builds the forward graph on the caller's tape. `window` is the raw
  // (unnormalized) input; the returned tensor is 1 x total_output_dim in
  // target units.
  virtual Tensor forward(Tape& tape, const Mat& window) = 0;

  Vec predict(const Mat& window);

  virtual std::vector<Param*> parameters() = 0;
  const ModelConfig& config() const { return config_; }
  long param_count();

  Checkpoint serialize();
  static std::unique_ptr<SetModel> deserialize(const Checkpoint& ckpt);
  static std::unique_ptr<SetModel> build(const ModelConfig& config);

 protected:
  explicit SetModel(ModelConfig cfg) : config_(std::move(cfg)) {}
  Mat normalize_input(const Mat& window) const;
  Tensor denormalize_output(Tape& tape, Tensor raw) const;
  void check_features(const Mat& window) const;

  ModelConfig config_;
};

// Single-time-point baseline: a dense stack on exactly one row.
class OasisModel : public SetModel {
 public:
  explicit OasisModel(const ModelConfig& cfg);
  Tensor forward(Tape& tape, const Mat& window) override;
  std::vector<Param*> parameters() override;

 private:
  std::vector<DenseLayer> layers_;
};

class DeepSetModel : public SetModel {
 public:
  explicit DeepSetModel(const ModelConfig& cfg);
  Tensor forward(Tape& tape, const Mat& window) override;
  std::vector<Param*> parameters() override;

  // Encoder stack only (pre-pooling), used by equivariance tests.
  Tensor encode(Tape& tape, const Mat& window);

 private:
  Tensor encode_tensor(Tape& tape, Tensor rows);
  std::vector<DenseLayer> dense_encoder_;
  std::vector<EquivariantLayer> equi_encoder_;
  std::vector<LayerNorm> encoder_norms_;
  struct DecoderHead {
    std::vector<DenseLayer> layers;
    std::vector<LayerNorm> norms;
    DenseLayer out;
  };
  std::vector<DecoderHead> heads_;
};

class SetTransformerModel : public SetModel {
 public:
  explicit SetTransformerModel(const ModelConfig& cfg);
  Tensor forward(Tape& tape, const Mat& window) override;
  std::vector<Param*> parameters() override;

 private:
  DenseLayer embed_;
  std::vector<IsabBlock> isab_blocks_;
  std::vector<MabBlock> sab_blocks_;  // used when inducing_points == 0
  PmaBlock pma_;
  bool has_projection_ = false;
  DenseLayer pooled_projection_;
  bool has_decoder_sab_ = false;
  MabBlock decoder_sab_;
  std::vector<DenseLayer> head_;
};

// Reference architectures.
ModelConfig lorenz_deep_set_config();        // 320x5 ReLU, abs-mean pool, 3 outputs
ModelConfig lorenz_set_transformer_config(); // ISAB d=45 m=128 h=40, PMA, 3 outputs
ModelConfig heat_deep_set_config();          // 256x5 GELU, sum pool, 3 decoder heads

}  // namespace sendi

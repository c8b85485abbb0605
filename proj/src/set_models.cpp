#include "sendi/set_models.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace sendi {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "oasis") return ModelKind::oasis;
  if (s == "deep_set") return ModelKind::deep_set;
  if (s == "set_transformer") return ModelKind::set_transformer;
  throw ConfigError("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::oasis: return "oasis";
    case ModelKind::deep_set: return "deep_set";
    case ModelKind::set_transformer: return "set_transformer";
  }
  return "deep_set";
}

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
  if (output_dim < 1) throw ConfigError("model: output_dim must be >= 1");
  if (decoder_heads < 1) throw ConfigError("model: decoder_heads must be >= 1");
  if (kind == ModelKind::set_transformer) {
    if (model_dim < 1) throw ConfigError("model: model_dim must be >= 1");
    if (heads < 1) throw ConfigError("model: heads must be >= 1");
    if (head_dim == 0 && model_dim % heads != 0)
      throw ConfigError("model: model_dim not divisible by heads; set head_dim");
  }
  auto check_affine = [](const std::vector<double>& off, const std::vector<double>& sc,
                         int dim, const char* what) {
    if (off.empty() && sc.empty()) return;
    if (static_cast<int>(off.size()) != dim || static_cast<int>(sc.size()) != dim)
      throw ConfigError(std::string("model: ") + what + " affine size mismatch");
    for (double s : sc)
      if (s == 0.0) throw ConfigError(std::string("model: ") + what + " scale has zeros");
  };
  check_affine(input_offset, input_scale, input_dim, "input");
  check_affine(target_offset, target_scale, total_output_dim(), "target");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["kind"] = sendi::to_string(kind);
  j["input_dim"] = input_dim;
  j["output_dim"] = output_dim;
  j["decoder_heads"] = decoder_heads;
  j["encoder_widths"] = encoder_widths;
  j["decoder_widths"] = decoder_widths;
  j["activation"] = sendi::to_string(activation);
  j["pool"] = sendi::to_string(pool);
  j["equivariant_encoder"] = equivariant_encoder;
  j["mlp_layer_norm"] = mlp_layer_norm;
  j["model_dim"] = model_dim;
  j["heads"] = heads;
  j["head_dim"] = head_dim;
  j["inducing_points"] = inducing_points;
  j["encoder_blocks"] = encoder_blocks;
  j["rff_layers"] = rff_layers;
  j["rff_activation"] = sendi::to_string(rff_activation);
  j["pooled_dim"] = pooled_dim;
  j["decoder_self_attention"] = decoder_self_attention;
  j["head_widths"] = head_widths;
  j["input_offset"] = input_offset;
  j["input_scale"] = input_scale;
  j["target_offset"] = target_offset;
  j["target_scale"] = target_scale;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.kind = model_kind_from_string(j.at("kind").get<std::string>());
  c.input_dim = j.at("input_dim").get<int>();
  c.output_dim = j.at("output_dim").get<int>();
  c.decoder_heads = j.value("decoder_heads", 1);
  c.encoder_widths = j.value("encoder_widths", std::vector<int>{});
  c.decoder_widths = j.value("decoder_widths", std::vector<int>{});
  c.activation = activation_from_string(j.value("activation", std::string("relu")));
  c.pool = pool_from_string(j.value("pool", std::string("mean")));
  c.equivariant_encoder = j.value("equivariant_encoder", false);
  c.mlp_layer_norm = j.value("mlp_layer_norm", false);
  c.model_dim = j.value("model_dim", 0);
  c.heads = j.value("heads", 1);
  c.head_dim = j.value("head_dim", 0);
  c.inducing_points = j.value("inducing_points", 0);
  c.encoder_blocks = j.value("encoder_blocks", 1);
  c.rff_layers = j.value("rff_layers", 2);
  c.rff_activation = activation_from_string(j.value("rff_activation", std::string("none")));
  c.pooled_dim = j.value("pooled_dim", 0);
  c.decoder_self_attention = j.value("decoder_self_attention", true);
  c.head_widths = j.value("head_widths", std::vector<int>{});
  c.input_offset = j.value("input_offset", std::vector<double>{});
  c.input_scale = j.value("input_scale", std::vector<double>{});
  c.target_offset = j.value("target_offset", std::vector<double>{});
  c.target_scale = j.value("target_scale", std::vector<double>{});
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

std::string ModelConfig::hash() const { return hash_hex(fnv1a64(to_json())); }

// ---------------------------------------------------------------------------
// Attention blocks
// ---------------------------------------------------------------------------

MabBlock::MabBlock(const std::string& name, int dim, int heads,
                   std::optional<int> head_dim, int rff_layers, Activation rff_act,
                   RngStream& rng)
    : mha(name + "/mha", dim, heads, head_dim, rng),
      norm_attn(name + "/norm_attn", dim),
      norm_ff(name + "/norm_ff", dim) {
  for (int i = 0; i < rff_layers; ++i)
    rff.emplace_back(name + "/rff" + std::to_string(i), dim, dim, rff_act, rng);
}

Tensor MabBlock::forward(Tape& tape, Tensor x, Tensor y) {
  Tensor h = norm_attn.forward(tape, tape.add(x, mha.forward(tape, x, y, y)));
  Tensor f = h;
  for (DenseLayer& layer : rff) f = layer.forward(tape, f);
  return norm_ff.forward(tape, tape.add(h, f));
}

void MabBlock::collect(std::vector<Param*>& out) {
  mha.collect(out);
  norm_attn.collect(out);
  norm_ff.collect(out);
  for (DenseLayer& l : rff) l.collect(out);
}

IsabBlock::IsabBlock(const std::string& name, int dim, int heads,
                     std::optional<int> head_dim, int inducing_points, int rff_layers,
                     Activation rff_act, RngStream& rng)
    : inducing(name + "/inducing", init_attention(inducing_points, dim, rng)),
      project(name + "/project", dim, heads, head_dim, rff_layers, rff_act, rng),
      expand(name + "/expand", dim, heads, head_dim, rff_layers, rff_act, rng) {
  if (inducing_points < 1) throw ConfigError("isab: need at least one inducing point");
}

Tensor IsabBlock::forward(Tape& tape, Tensor x) {
  Tensor h = project.forward(tape, tape.leaf(inducing), x);
  return expand.forward(tape, x, h);
}

void IsabBlock::collect(std::vector<Param*>& out) {
  out.push_back(&inducing);
  project.collect(out);
  expand.collect(out);
}

PmaBlock::PmaBlock(const std::string& name, int dim, int heads,
                   std::optional<int> head_dim, int seeds, int rff_layers,
                   Activation rff_act, RngStream& rng)
    : seed(name + "/seed", init_attention(seeds, dim, rng)),
      mab(name + "/mab", dim, heads, head_dim, rff_layers, rff_act, rng) {
  if (seeds < 1) throw ConfigError("pma: need at least one seed row");
  for (int i = 0; i < rff_layers; ++i)
    rff_z.emplace_back(name + "/rff_z" + std::to_string(i), dim, dim, rff_act, rng);
}

Tensor PmaBlock::forward(Tape& tape, Tensor z) {
  Tensor f = z;
  for (DenseLayer& layer : rff_z) f = layer.forward(tape, f);
  return mab.forward(tape, tape.leaf(seed), f);
}

void PmaBlock::collect(std::vector<Param*>& out) {
  out.push_back(&seed);
  for (DenseLayer& l : rff_z) l.collect(out);
  mab.collect(out);
}

// ---------------------------------------------------------------------------
// SetModel base
// ---------------------------------------------------------------------------

Mat SetModel::normalize_input(const Mat& window) const {
  if (config_.input_offset.empty()) return window;
  Mat out = window;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    double off = config_.input_offset[static_cast<std::size_t>(j)];
    double sc = config_.input_scale[static_cast<std::size_t>(j)];
    out.col(j) = (out.col(j).array() - off) / sc;
  }
  return out;
}

Tensor SetModel::denormalize_output(Tape& tape, Tensor raw) const {
  if (config_.target_offset.empty()) return raw;
  const int k = config_.total_output_dim();
  Mat scale(1, k), offset(1, k);
  for (int j = 0; j < k; ++j) {
    scale(0, j) = config_.target_scale[static_cast<std::size_t>(j)];
    offset(0, j) = config_.target_offset[static_cast<std::size_t>(j)];
  }
  Tensor scaled = tape.hadamard(
      raw, tape.repeat_rows(tape.constant(scale), static_cast<int>(raw.rows())));
  return tape.add_rowvec(scaled, tape.constant(offset));
}

void SetModel::check_features(const Mat& window) const {
  if (window.rows() < 1) throw UsageError("model: empty input window");
  if (window.cols() != config_.input_dim)
    throw ConfigError("model: window has " + std::to_string(window.cols()) +
                      " features, config expects " + std::to_string(config_.input_dim));
}

Vec SetModel::predict(const Mat& window) {
  Tape tape;
  Tensor out = forward(tape, window);
  return Vec(out.value().row(0).transpose());
}

long SetModel::param_count() { return total_param_count(parameters()); }

Checkpoint SetModel::serialize() {
  Checkpoint ckpt;
  ckpt.init_seed = config_.seed;
  ckpt.config_json = config_.to_json();
  ckpt.config_hash = config_.hash();
  for (Param* p : parameters()) ckpt.params.emplace(p->name, p->value);
  return ckpt;
}

std::unique_ptr<SetModel> SetModel::build(const ModelConfig& config) {
  config.validate();
  switch (config.kind) {
    case ModelKind::oasis: return std::make_unique<OasisModel>(config);
    case ModelKind::deep_set: return std::make_unique<DeepSetModel>(config);
    case ModelKind::set_transformer:
      return std::make_unique<SetTransformerModel>(config);
  }
  throw ConfigError("model: unknown kind");
}

std::unique_ptr<SetModel> SetModel::deserialize(const Checkpoint& ckpt) {
  ModelConfig config = ModelConfig::from_json(ckpt.config_json);
  if (!ckpt.config_hash.empty() && ckpt.config_hash != config.hash())
    throw IncompatibilityError("checkpoint: config hash mismatch");
  std::unique_ptr<SetModel> model = build(config);
  for (Param* p : model->parameters()) {
    auto it = ckpt.params.find(p->name);
    if (it == ckpt.params.end())
      throw IncompatibilityError("checkpoint: missing parameter '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw IncompatibilityError("checkpoint: shape mismatch for '" + p->name + "'");
    p->value = it->second;
  }
  return model;
}

// ---------------------------------------------------------------------------
// OASIS baseline
// ---------------------------------------------------------------------------

OasisModel::OasisModel(const ModelConfig& cfg) : SetModel(cfg) {
  RngStream rng(cfg.seed, "oasis");
  int width = cfg.input_dim;
  int idx = 0;
  for (int w : cfg.encoder_widths) {
    layers_.emplace_back("dense" + std::to_string(idx++), width, w, cfg.activation, rng);
    width = w;
  }
  layers_.emplace_back("out", width, cfg.total_output_dim(), Activation::none, rng);
}

Tensor OasisModel::forward(Tape& tape, const Mat& window) {
  check_features(window);
  if (window.rows() != 1)
    throw UsageError("oasis model: expects exactly one time row, got " +
                     std::to_string(window.rows()));
  Tensor h = tape.constant(normalize_input(window));
  for (DenseLayer& l : layers_) h = l.forward(tape, h);
  return denormalize_output(tape, h);
}

std::vector<Param*> OasisModel::parameters() {
  std::vector<Param*> out;
  for (DenseLayer& l : layers_) l.collect(out);
  return out;
}

// ---------------------------------------------------------------------------
// Deep Set
// ---------------------------------------------------------------------------

DeepSetModel::DeepSetModel(const ModelConfig& cfg) : SetModel(cfg) {
  RngStream rng(cfg.seed, "deep_set");
  int width = cfg.input_dim;
  int idx = 0;
  for (int w : cfg.encoder_widths) {
    const std::string name = "encoder/layer" + std::to_string(idx);
    if (cfg.equivariant_encoder)
      equi_encoder_.emplace_back(name, width, w, cfg.pool, cfg.activation, rng);
    else
      dense_encoder_.emplace_back(name, width, w, cfg.activation, rng);
    if (cfg.mlp_layer_norm) encoder_norms_.emplace_back(name + "/norm", w);
    width = w;
    ++idx;
  }
  for (int h = 0; h < cfg.decoder_heads; ++h) {
    DecoderHead head;
    int hw = width;
    int li = 0;
    const std::string hname = "decoder" + std::to_string(h);
    for (int w : cfg.decoder_widths) {
      head.layers.emplace_back(hname + "/layer" + std::to_string(li), hw, w,
                               cfg.activation, rng);
      if (cfg.mlp_layer_norm)
        head.norms.emplace_back(hname + "/layer" + std::to_string(li) + "/norm", w);
      hw = w;
      ++li;
    }
    head.out = DenseLayer(hname + "/out", hw, cfg.output_dim, Activation::none, rng);
    heads_.push_back(std::move(head));
  }
}

Tensor DeepSetModel::encode_tensor(Tape& tape, Tensor rows) {
  Tensor h = rows;
  if (config_.equivariant_encoder) {
    std::size_t i = 0;
    for (EquivariantLayer& l : equi_encoder_) {
      h = l.forward(tape, h);
      if (config_.mlp_layer_norm) h = encoder_norms_[i].forward(tape, h);
      ++i;
    }
  } else {
    std::size_t i = 0;
    for (DenseLayer& l : dense_encoder_) {
      h = l.forward(tape, h);
      if (config_.mlp_layer_norm) h = encoder_norms_[i].forward(tape, h);
      ++i;
    }
  }
  return h;
}

Tensor DeepSetModel::encode(Tape& tape, const Mat& window) {
  check_features(window);
  return encode_tensor(tape, tape.constant(normalize_input(window)));
}

Tensor DeepSetModel::forward(Tape& tape, const Mat& window) {
  check_features(window);
  Tensor h = encode_tensor(tape, tape.constant(normalize_input(window)));
  Tensor pooled = apply_pool(tape, h, config_.pool);
  std::vector<Tensor> outs;
  for (DecoderHead& head : heads_) {
    Tensor d = pooled;
    std::size_t i = 0;
    for (DenseLayer& l : head.layers) {
      d = l.forward(tape, d);
      if (config_.mlp_layer_norm) d = head.norms[i].forward(tape, d);
      ++i;
    }
    outs.push_back(head.out.forward(tape, d));
  }
  Tensor raw = outs.size() == 1 ? outs.front() : tape.concat_cols(outs);
  return denormalize_output(tape, raw);
}

std::vector<Param*> DeepSetModel::parameters() {
  std::vector<Param*> out;
  std::size_t i = 0;
  if (config_.equivariant_encoder) {
    for (EquivariantLayer& l : equi_encoder_) {
      l.collect(out);
      if (config_.mlp_layer_norm) encoder_norms_[i++].collect(out);
    }
  } else {
    for (DenseLayer& l : dense_encoder_) {
      l.collect(out);
      if (config_.mlp_layer_norm) encoder_norms_[i++].collect(out);
    }
  }
  for (DecoderHead& head : heads_) {
    std::size_t k = 0;
    for (DenseLayer& l : head.layers) {
      l.collect(out);
      if (config_.mlp_layer_norm) head.norms[k++].collect(out);
    }
    head.out.collect(out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Set Transformer
// ---------------------------------------------------------------------------

SetTransformerModel::SetTransformerModel(const ModelConfig& cfg) : SetModel(cfg) {
  RngStream rng(cfg.seed, "set_transformer");
  std::optional<int> head_dim =
      cfg.head_dim > 0 ? std::optional<int>(cfg.head_dim) : std::nullopt;

  embed_ = DenseLayer("embed", cfg.input_dim, cfg.model_dim, Activation::none, rng);
  for (int b = 0; b < cfg.encoder_blocks; ++b) {
    const std::string name = "encoder/block" + std::to_string(b);
    if (cfg.inducing_points > 0)
      isab_blocks_.emplace_back(name, cfg.model_dim, cfg.heads, head_dim,
                                cfg.inducing_points, cfg.rff_layers, cfg.rff_activation,
                                rng);
    else
      sab_blocks_.emplace_back(name, cfg.model_dim, cfg.heads, head_dim, cfg.rff_layers,
                               cfg.rff_activation, rng);
  }
  pma_ = PmaBlock("pool", cfg.model_dim, cfg.heads, head_dim, 1, cfg.rff_layers,
                  cfg.rff_activation, rng);

  int width = cfg.model_dim;
  if (cfg.pooled_dim > 0 && cfg.pooled_dim != cfg.model_dim) {
    has_projection_ = true;
    pooled_projection_ = DenseLayer("pooled_projection", cfg.model_dim, cfg.pooled_dim,
                                    Activation::none, rng);
    width = cfg.pooled_dim;
  }
  if (cfg.decoder_self_attention) {
    has_decoder_sab_ = true;
    // The decoder block keeps the width/heads convention when it divides,
    // otherwise it reuses the explicit per-head width.
    std::optional<int> dec_head_dim = (width % cfg.heads == 0) ? std::nullopt : head_dim;
    decoder_sab_ = MabBlock("decoder/sab", width, cfg.heads, dec_head_dim, cfg.rff_layers,
                            cfg.rff_activation, rng);
  }
  int hw = width;
  int idx = 0;
  for (int w : cfg.head_widths) {
    head_.emplace_back("head/layer" + std::to_string(idx++), hw, w, cfg.activation, rng);
    hw = w;
  }
  head_.emplace_back("head/out", hw, cfg.total_output_dim(), Activation::none, rng);
}

Tensor SetTransformerModel::forward(Tape& tape, const Mat& window) {
  check_features(window);
  Tensor h = embed_.forward(tape, tape.constant(normalize_input(window)));
  for (IsabBlock& b : isab_blocks_) h = b.forward(tape, h);
  for (MabBlock& b : sab_blocks_) h = b.forward(tape, h, h);
  Tensor pooled = pma_.forward(tape, h);  // 1 x model_dim
  if (has_projection_) pooled = pooled_projection_.forward(tape, pooled);
  if (has_decoder_sab_) pooled = decoder_sab_.forward(tape, pooled, pooled);
  Tensor out = pooled;
  for (DenseLayer& l : head_) out = l.forward(tape, out);
  return denormalize_output(tape, out);
}

std::vector<Param*> SetTransformerModel::parameters() {
  std::vector<Param*> out;
  embed_.collect(out);
  for (IsabBlock& b : isab_blocks_) b.collect(out);
  for (MabBlock& b : sab_blocks_) b.collect(out);
  pma_.collect(out);
  if (has_projection_) pooled_projection_.collect(out);
  if (has_decoder_sab_) decoder_sab_.collect(out);
  for (DenseLayer& l : head_) l.collect(out);
  return out;
}

// ---------------------------------------------------------------------------
// Reference architectures
// ---------------------------------------------------------------------------

ModelConfig lorenz_deep_set_config() {
  ModelConfig c;
  c.kind = ModelKind::deep_set;
  c.input_dim = 4;  // t, x, y, z
  c.output_dim = 3;
  c.encoder_widths = std::vector<int>(5, 320);
  c.decoder_widths = std::vector<int>(5, 320);
  c.activation = Activation::relu;
  c.pool = PoolKind::absmean;
  return c;
}

ModelConfig lorenz_set_transformer_config() {
  ModelConfig c;
  c.kind = ModelKind::set_transformer;
  c.input_dim = 4;
  c.output_dim = 3;
  c.model_dim = 45;
  c.heads = 40;
  c.head_dim = 45;  // 45 not divisible by 40 heads: each head keeps full width
  c.inducing_points = 128;
  c.encoder_blocks = 1;
  c.rff_layers = 2;
  c.rff_activation = Activation::relu;
  c.pooled_dim = 40;
  c.decoder_self_attention = true;  // runs at 40 dims, 40 heads of width 1
  c.head_widths = {40, 40};
  c.activation = Activation::relu;
  return c;
}

ModelConfig heat_deep_set_config() {
  ModelConfig c;
  c.kind = ModelKind::deep_set;
  c.input_dim = 3;  // z, t, T
  c.output_dim = 1;
  c.decoder_heads = 3;  // abnormality center, ratio, reference diffusivity
  c.encoder_widths = std::vector<int>(5, 256);
  c.decoder_widths = std::vector<int>(5, 256);
  c.activation = Activation::gelu;
  c.pool = PoolKind::sum;
  c.mlp_layer_norm = true;
  return c;
}

}  // namespace sendi

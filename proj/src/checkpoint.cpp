#include "sendi/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace sendi {

namespace {
constexpr const char* kMagic = "sendi-checkpoint";
constexpr int kVersion = 1;
}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = kMagic;
  j["version"] = kVersion;
  j["init_seed"] = ckpt.init_seed;
  j["config"] = ckpt.config_json;
  j["config_hash"] = ckpt.config_hash;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, m] : ckpt.params) {
    nlohmann::json entry;
    entry["shape"] = {m.rows(), m.cols()};
    entry["data"] = base64_encode(m.data(), sizeof(double) * m.size());
    params[name] = std::move(entry);
  }
  j["params"] = std::move(params);
  return j.dump();
}

Checkpoint checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibilityError(std::string("checkpoint: not parseable: ") + e.what());
  }
  if (!j.contains("format") || j["format"] != kMagic)
    throw IncompatibilityError("checkpoint: bad or missing format marker");
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kVersion)
    throw IncompatibilityError("checkpoint: unsupported version");

  Checkpoint ckpt;
  ckpt.version = kVersion;
  ckpt.init_seed = j.value("init_seed", std::uint64_t{0});
  ckpt.config_json = j.value("config", std::string{});
  ckpt.config_hash = j.value("config_hash", std::string{});
  if (!j.contains("params") || !j["params"].is_object())
    throw IncompatibilityError("checkpoint: missing parameter table");
  for (auto it = j["params"].begin(); it != j["params"].end(); ++it) {
    const nlohmann::json& entry = it.value();
    if (!entry.contains("shape") || !entry.contains("data"))
      throw IncompatibilityError("checkpoint: malformed entry '" + it.key() + "'");
    auto shape = entry["shape"].get<std::vector<long>>();
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0)
      throw IncompatibilityError("checkpoint: bad shape for '" + it.key() + "'");
    std::vector<unsigned char> bytes = base64_decode(entry["data"].get<std::string>());
    const std::size_t expected =
        sizeof(double) * static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]);
    if (bytes.size() != expected)
      throw IncompatibilityError("checkpoint: payload size mismatch for '" + it.key() + "'");
    Mat m(shape[0], shape[1]);
    std::memcpy(m.data(), bytes.data(), expected);
    ckpt.params.emplace(it.key(), std::move(m));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
  out << checkpoint_to_string(ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_string(text);
}

}  // namespace sendi

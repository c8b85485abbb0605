#pragma once

#include <map>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "sendi/common.hpp"

namespace sendi {

// Versioned parameter store: path -> shape + row-major float64 payload, plus
// the init seed and an arbitrary config header. Payloads are base64 of the raw
// bytes, so a save/load round trip is bit-exact.
struct Checkpoint {
  int version = 1;
  std::uint64_t init_seed = 0;
  std::string config_json;  // serialized model/experiment config
  std::string config_hash;
  std::map<std::string, Mat> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

}  // namespace sendi

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sendi {

// Row-major storage so that raw buffers, files and checkpoints share one layout.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  double last_valid_time = 0.0;
  DivergenceError(const std::string& msg, double t)
      : std::runtime_error(msg), last_valid_time(t) {}
};
struct IncompatibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, used for config/library fingerprints and seed derivation. Stable
// across platforms, unlike std::hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hash_hex(std::uint64_t h);

// Every random draw in the toolkit flows from one global seed through named
// sub-streams, so reruns with the same seed are byte-identical.
inline std::uint64_t derive_seed(std::uint64_t global_seed, const std::string& stream) {
  std::uint64_t h = fnv1a64(&global_seed, sizeof(global_seed));
  return fnv1a64(stream.data(), stream.size(), h);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}
  RngStream(std::uint64_t global_seed, const std::string& name)
      : engine_(derive_seed(global_seed, name)) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    std::uniform_int_distribution<int> d(lo, hi);
    return d(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::string base64_encode(const void* data, std::size_t n);
std::vector<unsigned char> base64_decode(const std::string& s);

}  // namespace sendi

#include "sendi/sobol.hpp"

#include <cmath>

namespace sendi {

namespace {

// Joe-Kuo primitive polynomials and initial direction numbers for dimensions
// 2..6 (dimension 1 is the van der Corput sequence).
struct DimSpec {
  int s;
  unsigned a;
  unsigned m[4];
};
constexpr DimSpec kSpecs[kSobolMaxDims - 1] = {
    {1, 0, {1, 0, 0, 0}},
    {2, 1, {1, 3, 0, 0}},
    {3, 1, {1, 3, 1, 0}},
    {3, 2, {1, 1, 1, 0}},
    {4, 1, {1, 1, 3, 3}},
};
constexpr int kBits = 32;

void direction_numbers(int dim_index, std::uint32_t v[kBits]) {
  if (dim_index == 0) {
    for (int k = 0; k < kBits; ++k) v[k] = 1u << (31 - k);
    return;
  }
  const DimSpec& spec = kSpecs[dim_index - 1];
  for (int k = 0; k < spec.s; ++k) v[k] = spec.m[k] << (31 - k);
  for (int k = spec.s; k < kBits; ++k) {
    v[k] = v[k - spec.s] ^ (v[k - spec.s] >> spec.s);
    for (int i = 1; i < spec.s; ++i)
      if ((spec.a >> (spec.s - 1 - i)) & 1u) v[k] ^= v[k - i];
  }
}

}  // namespace

Mat sobol_sample(int dims, int count, const std::vector<std::pair<double, double>>& bounds,
                 std::uint64_t start_index) {
  if (dims < 1 || dims > kSobolMaxDims)
    throw ConfigError("sobol: supported dimensions are 1.." + std::to_string(kSobolMaxDims));
  if (count < 1) throw ConfigError("sobol: count must be >= 1");
  if (static_cast<int>(bounds.size()) != dims)
    throw ConfigError("sobol: bounds size must equal dims");
  for (const auto& [lo, hi] : bounds) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo)
      throw ConfigError("sobol: bounds must be finite with hi >= lo");
  }

  std::uint32_t v[kSobolMaxDims][kBits];
  for (int d = 0; d < dims; ++d) direction_numbers(d, v[d]);

  Mat out(count, dims);
  constexpr double scale = 1.0 / 4294967296.0;  // 2^-32
  for (int i = 0; i < count; ++i) {
    // Raw index starts at 1: the all-zeros point is skipped.
    std::uint64_t n = start_index + 1 + static_cast<std::uint64_t>(i);
    std::uint64_t gray = n ^ (n >> 1);
    for (int d = 0; d < dims; ++d) {
      std::uint32_t x = 0;
      for (int b = 0; b < kBits; ++b)
        if ((gray >> b) & 1ull) x ^= v[d][b];
      double u = static_cast<double>(x) * scale;
      out(i, d) = bounds[d].first + u * (bounds[d].second - bounds[d].first);
    }
  }
  return out;
}

}  // namespace sendi

#pragma once

#include <utility>
#include <vector>

#include "sendi/common.hpp"

namespace sendi {

// Low-discrepancy Sobol points scaled into per-dimension bounds. Supports up
// to 6 dimensions (Joe-Kuo direction numbers). The initial all-zeros point of
// the raw sequence is skipped; `start_index` partitions the sequence between
// workers (point i of the returned matrix is raw index start_index + 1 + i).
Mat sobol_sample(int dims, int count, const std::vector<std::pair<double, double>>& bounds,
                 std::uint64_t start_index = 0);

constexpr int kSobolMaxDims = 6;

}  // namespace sendi

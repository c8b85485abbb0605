#pragma once

#include <string>
#include <vector>

#include "sendi/common.hpp"

namespace sendi {

enum class TermWrap { none, sin, cos, exp };

// One candidate function: a monomial over the state+control channels,
// optionally wrapped in sin/cos/exp.
struct LibraryTerm {
  std::vector<int> exponents;  // aligned with channel order, states first
  TermWrap wrap = TermWrap::none;

  int degree() const;
  std::string name(const std::vector<std::string>& channels) const;
};

// Ordered candidate-function dictionary. Term order is frozen at construction
// and round-trips through serialization, so coefficient rows stay meaningful.
class FeatureLibrary {
 public:
  FeatureLibrary() = default;
  FeatureLibrary(std::vector<std::string> channel_names, std::vector<LibraryTerm> terms);

  // All monomials of total degree <= degree, graded-lexicographic order with
  // the constant term first.
  static FeatureLibrary polynomial(std::vector<std::string> channel_names, int degree);

  // Column k holds term k evaluated on every sample row.
  Mat evaluate(const Mat& states, const Mat& controls) const;

  int term_count() const { return static_cast<int>(terms_.size()); }
  int channel_count() const { return static_cast<int>(channels_.size()); }
  const std::vector<LibraryTerm>& terms() const { return terms_; }
  const std::vector<std::string>& channels() const { return channels_; }
  std::string term_name(int k) const { return terms_[static_cast<std::size_t>(k)].name(channels_); }

  std::string to_json() const;
  static FeatureLibrary from_json(const std::string& text);
  std::uint64_t hash() const;

 private:
  std::vector<std::string> channels_;
  std::vector<LibraryTerm> terms_;
};

}  // namespace sendi

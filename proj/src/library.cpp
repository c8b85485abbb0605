#include "sendi/library.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace sendi {

namespace {
const char* wrap_name(TermWrap w) {
  switch (w) {
    case TermWrap::none: return "none";
    case TermWrap::sin: return "sin";
    case TermWrap::cos: return "cos";
    case TermWrap::exp: return "exp";
  }
  return "none";
}
TermWrap wrap_from(const std::string& s) {
  if (s == "none") return TermWrap::none;
  if (s == "sin") return TermWrap::sin;
  if (s == "cos") return TermWrap::cos;
  if (s == "exp") return TermWrap::exp;
  throw ConfigError("library: unknown wrap '" + s + "'");
}
}  // namespace

int LibraryTerm::degree() const {
  int d = 0;
  for (int e : exponents) d += e;
  return d;
}

std::string LibraryTerm::name(const std::vector<std::string>& channels) const {
  std::string mono;
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    if (exponents[i] == 0) continue;
    if (!mono.empty()) mono += "*";
    mono += channels[i];
    if (exponents[i] > 1) mono += "^" + std::to_string(exponents[i]);
  }
  if (mono.empty()) mono = "1";
  if (wrap == TermWrap::none) return mono;
  return std::string(wrap_name(wrap)) + "(" + mono + ")";
}

FeatureLibrary::FeatureLibrary(std::vector<std::string> channel_names,
                               std::vector<LibraryTerm> terms)
    : channels_(std::move(channel_names)), terms_(std::move(terms)) {
  for (const LibraryTerm& t : terms_)
    if (t.exponents.size() != channels_.size())
      throw ConfigError("library: term arity does not match channel count");
}

FeatureLibrary FeatureLibrary::polynomial(std::vector<std::string> channel_names,
                                          int degree) {
  if (degree < 0) throw ConfigError("library: degree must be >= 0");
  const int c = static_cast<int>(channel_names.size());
  if (c < 1) throw ConfigError("library: need at least one channel");

  std::vector<LibraryTerm> terms;
  std::vector<int> expo(static_cast<std::size_t>(c), 0);
  // Enumerate exponent vectors of exact degree d in lexicographic order
  // (first channel strongest), for d = 0..degree.
  std::function<void(int, int)> emit = [&](int pos, int remaining) {
    if (pos == c - 1) {
      expo[static_cast<std::size_t>(pos)] = remaining;
      terms.push_back({expo, TermWrap::none});
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      expo[static_cast<std::size_t>(pos)] = e;
      emit(pos + 1, remaining - e);
    }
  };
  for (int d = 0; d <= degree; ++d) emit(0, d);
  return FeatureLibrary(std::move(channel_names), std::move(terms));
}

Mat FeatureLibrary::evaluate(const Mat& states, const Mat& controls) const {
  const Eigen::Index n = states.rows();
  const int total_channels = static_cast<int>(states.cols() + controls.cols());
  if (controls.cols() > 0 && controls.rows() != n)
    throw DimensionError("library: states/controls row mismatch");
  if (total_channels != channel_count())
    throw ConfigError("library: expected " + std::to_string(channel_count()) +
                      " channels, got " + std::to_string(total_channels));

  Mat theta(n, term_count());
  for (int k = 0; k < term_count(); ++k) {
    const LibraryTerm& term = terms_[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = 1.0;
      for (int ch = 0; ch < total_channels; ++ch) {
        int e = term.exponents[static_cast<std::size_t>(ch)];
        if (e == 0) continue;
        double x = ch < states.cols() ? states(i, ch) : controls(i, ch - states.cols());
        for (int r = 0; r < e; ++r) v *= x;
      }
      switch (term.wrap) {
        case TermWrap::none: break;
        case TermWrap::sin: v = std::sin(v); break;
        case TermWrap::cos: v = std::cos(v); break;
        case TermWrap::exp: v = std::exp(v); break;
      }
      theta(i, k) = v;
    }
  }
  return theta;
}

std::string FeatureLibrary::to_json() const {
  nlohmann::json j;
  j["channels"] = channels_;
  nlohmann::json terms = nlohmann::json::array();
  for (const LibraryTerm& t : terms_)
    terms.push_back({{"exponents", t.exponents}, {"wrap", wrap_name(t.wrap)}});
  j["terms"] = std::move(terms);
  return j.dump();
}

FeatureLibrary FeatureLibrary::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  std::vector<std::string> channels = j.at("channels").get<std::vector<std::string>>();
  std::vector<LibraryTerm> terms;
  for (const auto& entry : j.at("terms")) {
    LibraryTerm t;
    t.exponents = entry.at("exponents").get<std::vector<int>>();
    t.wrap = wrap_from(entry.at("wrap").get<std::string>());
    terms.push_back(std::move(t));
  }
  return FeatureLibrary(std::move(channels), std::move(terms));
}

std::uint64_t FeatureLibrary::hash() const { return fnv1a64(to_json()); }

}  // namespace sendi

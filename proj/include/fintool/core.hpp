#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

namespace fintool {

// Insertion-ordered JSON so serialized artifacts keep the field order they were built with.
using json = nlohmann::ordered_json;

enum class Errc {
  MalformedJson,
  MissingField,
  BadType,
  InvalidValue,
  DuplicateRequired,
  UnknownSeed,
  UnknownTool,
  DimensionMismatch,
  ZeroVector,
  EncoderFailure,
  EncoderMismatch,
  JudgeUnavailable,
  JudgeMalformedOutput,
  AgentFailure,
  InvalidPlan,
  RewriterUnavailable,
  EmptyQuery,
  InvalidConfig,
  Io,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::MalformedJson: return "MalformedJson";
    case Errc::MissingField: return "MissingField";
    case Errc::BadType: return "BadType";
    case Errc::InvalidValue: return "InvalidValue";
    case Errc::DuplicateRequired: return "DuplicateRequired";
    case Errc::UnknownSeed: return "UnknownSeed";
    case Errc::UnknownTool: return "UnknownTool";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::EncoderFailure: return "EncoderFailure";
    case Errc::EncoderMismatch: return "EncoderMismatch";
    case Errc::JudgeUnavailable: return "JudgeUnavailable";
    case Errc::JudgeMalformedOutput: return "JudgeMalformedOutput";
    case Errc::AgentFailure: return "AgentFailure";
    case Errc::InvalidPlan: return "InvalidPlan";
    case Errc::RewriterUnavailable: return "RewriterUnavailable";
    case Errc::EmptyQuery: return "EmptyQuery";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

// Single exception type for the library; `detail` carries the offending path or name.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail, const std::string& message = {})
      : std::runtime_error(std::string(errc_name(code)) + "(" + detail + ")" +
                           (message.empty() ? "" : ": " + message)),
        code_(code),
        detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

// One dialogue message. Roles: system, user, assistant, tool.
struct Message {
  std::string role;
  std::string content;
  bool operator==(const Message&) const = default;
};

// ---------------------------------------------------------------------------
// Text utilities

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Lowercased ASCII alphanumeric runs; everything else separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline bool is_stopword(std::string_view t) {
  static constexpr std::string_view kStop[] = {
      "a",    "an",   "and",  "are",  "as",   "at",    "be",   "by",   "can",  "e",
      "eg",   "etc",  "for",  "from", "g",    "get",   "has",  "if",   "in",   "including",
      "into", "is",   "it",   "its",  "not",  "of",    "on",   "or",   "such", "that",
      "the",  "their", "this", "to",  "via",  "which", "with", "query", "returns", "return"};
  return std::find(std::begin(kStop), std::end(kStop), t) != std::end(kStop);
}

// Tokens that carry meaning: not stopwords, not purely numeric, at least two characters.
inline std::vector<std::string> content_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text)) {
    if (t.size() < 2 || is_stopword(t)) continue;
    if (std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact decimal arithmetic for scores

using Rational = boost::multiprecision::cpp_rational;

// The exact rational value of the shortest decimal that round-trips to `v`.
// 0.7 becomes 7/10 rather than the binary expansion of the nearest double.
inline Rational exact_decimal(double v) {
  if (!std::isfinite(v)) throw Error(Errc::InvalidValue, "score", "non-finite value");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string_view s(buf, static_cast<std::size_t>(res.ptr - buf));
  bool neg = false;
  if (!s.empty() && s.front() == '-') {
    neg = true;
    s.remove_prefix(1);
  }
  long exp10 = 0;
  if (auto e = s.find_first_of("eE"); e != std::string_view::npos) {
    exp10 = std::stol(std::string(s.substr(e + 1)));
    s = s.substr(0, e);
  }
  std::string digits;
  for (char c : s) {
    if (c == '.') continue;
    digits.push_back(c);
  }
  if (auto dot = s.find('.'); dot != std::string_view::npos) {
    exp10 -= static_cast<long>(s.size() - dot - 1);
  }
  // a leading zero would make cpp_int read the digits as octal
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
  boost::multiprecision::cpp_int num(digits);
  boost::multiprecision::cpp_int ten = 10;
  Rational r;
  if (exp10 >= 0) {
    r = Rational(num * boost::multiprecision::pow(ten, static_cast<unsigned>(exp10)));
  } else {
    r = Rational(num, boost::multiprecision::pow(ten, static_cast<unsigned>(-exp10)));
  }
  return neg ? Rational(-r) : r;
}

// Nearest double to an exact rational.
inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline Rational rational_mean(std::span<const double> values) {
  if (values.empty()) return Rational(0);
  Rational sum = 0;
  for (double v : values) sum += exact_decimal(v);
  return sum / Rational(static_cast<long long>(values.size()));
}

inline double mean_of(std::span<const double> values) { return to_double(rational_mean(values)); }

// ---------------------------------------------------------------------------
// Apportionment

// Largest-remainder (Hamilton) apportionment of `total` units by `weights`.
// Ties in the remainder go to the earlier index, so results are order-stable.
inline std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty()) return out;
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(Errc::InvalidValue, "weights", "negative or non-finite weight");
    wsum += w;
  }
  if (wsum <= 0.0) return out;
  std::vector<Rational> quotas(weights.size());
  Rational wsum_exact = 0;
  for (double w : weights) wsum_exact += exact_decimal(w);
  std::size_t assigned = 0;
  std::vector<std::pair<Rational, std::size_t>> rema;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Rational q = exact_decimal(weights[i]) * Rational(static_cast<long long>(total)) / wsum_exact;
    boost::multiprecision::cpp_int floor_q = boost::multiprecision::numerator(q) / boost::multiprecision::denominator(q);
    out[i] = floor_q.convert_to<std::size_t>();
    assigned += out[i];
    rema.emplace_back(q - Rational(floor_q), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < rema.size(); ++k, ++assigned) ++out[rema[k].second];
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic randomness

// SplitMix64: tiny, portable, and identical on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return r % bound;
  }

  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view salt) noexcept {
  return Rng(base ^ fnv1a64(salt)).next();
}

}  // namespace fintool

#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>

#include "json.hpp"

namespace malr {

using GoldSet = std::unordered_set<std::string>;

using json = nlohmann::json;
// Ordered variant keeps key insertion order so emitted files are byte-stable.
using ojson = nlohmann::ordered_json;

enum class ErrorCode {
  io,
  malformed_record,
  duplicate_id,
  empty_input,
  empty_gold,
  config,
  dimension_mismatch,
  provider_unavailable,
  provider_error,
  timeout,
  budget_exhausted,
  scorer_unavailable,
  parse_error,
  empty_rewrite,
  missing_context_field,
  missing_training_annotations,
  group_too_small,
  incomplete_group,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

  // Provider-side failures map to a distinct process exit code; everything
  // else is treated as a data/config problem.
  bool is_provider_error() const {
    switch (code_) {
      case ErrorCode::provider_unavailable:
      case ErrorCode::provider_error:
      case ErrorCode::timeout:
      case ErrorCode::budget_exhausted:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Number of Unicode scalar values in a UTF-8 string (continuation bytes are
// not counted). Invalid bytes count as one scalar each, which keeps the
// function total on arbitrary input.
inline size_t utf8_length(std::string_view s) {
  size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 14695981039346656037ull) {
  uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string to_hex(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

// SplitMix64 step; used to derive independent RNG streams from a master seed.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::mt19937_64 derive_rng(uint64_t master_seed, uint64_t a, uint64_t b = 0,
                                  uint64_t c = 0) {
  uint64_t s = master_seed;
  splitmix64(s);
  s ^= 0x9E3779B97F4A7C15ull * (a + 1);
  splitmix64(s);
  s ^= 0xC2B2AE3D27D4EB4Full * (b + 1);
  splitmix64(s);
  s ^= 0x165667B19E3779F9ull * (c + 1);
  return std::mt19937_64(splitmix64(s));
}

// Uniform double in [0, 1) built directly from the top 53 bits of the
// generator output. std::uniform_real_distribution is implementation-defined,
// which would break the bit-reproducibility guarantees of seeded runs.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

inline size_t uniform_index(std::mt19937_64& rng, size_t n) {
  // Rejection-free modulo is fine here; n is tiny relative to 2^64.
  return static_cast<size_t>(rng() % static_cast<uint64_t>(n));
}

// Calls fn(line_number, line) for every line of the file; line numbers are
// 1-based. Throws Error(io) when the file cannot be opened.
inline void for_each_line(const std::string& path,
                          const std::function<void(size_t, const std::string&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open file: " + path);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(line_no, line);
  }
}

inline json parse_json_line(const std::string& path, size_t line_no, const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::malformed_record,
                path + ":" + std::to_string(line_no) + ": not a JSON object");
  }
  return j;
}

inline void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::io, "short write: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Extracts the first well-formed JSON value that starts at a '{' (or, when
// allow_array is set, a '[') anywhere in the text. Model output routinely
// wraps the payload in prose or code fences, so scanning is
// position-independent: every candidate start is tried until one parses.
inline std::optional<json> extract_first_json_value(std::string_view text,
                                                    bool allow_array = false) {
  for (size_t start = 0; start < text.size(); ++start) {
    char open = text[start];
    if (open != '{' && !(allow_array && open == '[')) continue;
    char close = (open == '{') ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == open) {
        ++depth;
      } else if (c == close) {
        --depth;
        if (depth == 0) {
          json j = json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!j.is_discarded()) return j;
          break;  // malformed despite balanced brackets; try the next start
        }
      }
    }
  }
  return std::nullopt;
}

inline std::optional<json> extract_first_json_object(std::string_view text) {
  auto v = extract_first_json_value(text, /*allow_array=*/false);
  if (v && v->is_object()) return v;
  return std::nullopt;
}

}  // namespace malr

/*
 * Copyright 2026 The ERD Toolkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace erd {

enum class Errc {
  file_not_found,
  malformed_record,
  duplicate_user_id,
  empty_corpus,
  unknown_user_id,
  duplicate_outcome,
  empty_confusion,
  budget_exceeded,
  invalid_reasoning,
  policy_failure,
  config_invalid,
  unknown_run,
  incomplete_run,
  corpus_mismatch,
  storage,
  port_in_use,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::file_not_found: return "file-not-found";
    case Errc::malformed_record: return "malformed-record";
    case Errc::duplicate_user_id: return "duplicate-user-id";
    case Errc::empty_corpus: return "empty-corpus";
    case Errc::unknown_user_id: return "unknown-user-id";
    case Errc::duplicate_outcome: return "duplicate-outcome";
    case Errc::empty_confusion: return "empty-confusion";
    case Errc::budget_exceeded: return "budget-exceeded";
    case Errc::invalid_reasoning: return "invalid-reasoning";
    case Errc::policy_failure: return "policy-failure";
    case Errc::config_invalid: return "config-invalid";
    case Errc::unknown_run: return "unknown-run";
    case Errc::incomplete_run: return "incomplete-run";
    case Errc::corpus_mismatch: return "corpus-mismatch";
    case Errc::storage: return "storage";
    case Errc::port_in_use: return "port-in-use";
  }
  return "unknown";
}

/// Library-wide exception. `line` is set for record-oriented input errors
/// (1-based line number in the offending file).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail, std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail), line_(line) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  Errc code_;
  std::string detail_;
  std::optional<std::size_t> line_;
};

/// Value-or-error holder for operations whose failures are ordinary data
/// (parse results, provider calls). T and E must be distinct types.
template <class T, class E>
class Expected {
 public:
  Expected(T value) : storage_(std::in_place_index<0>, std::move(value)) {}
  Expected(E error) : storage_(std::in_place_index<1>, std::move(error)) {}

  bool has_value() const noexcept { return storage_.index() == 0; }
  explicit operator bool() const noexcept { return has_value(); }

  T& value() & {
    if (!has_value()) throw std::logic_error("Expected::value() on error");
    return std::get<0>(storage_);
  }
  const T& value() const& {
    if (!has_value()) throw std::logic_error("Expected::value() on error");
    return std::get<0>(storage_);
  }
  T&& value() && {
    if (!has_value()) throw std::logic_error("Expected::value() on error");
    return std::get<0>(std::move(storage_));
  }
  const E& error() const& {
    if (has_value()) throw std::logic_error("Expected::error() on value");
    return std::get<1>(storage_);
  }

  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }

 private:
  std::variant<T, E> storage_;
};

enum class Label { positive, negative };

inline std::string_view to_string(Label label) {
  return label == Label::positive ? "positive" : "negative";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "positive") return Label::positive;
  if (s == "negative") return Label::negative;
  return std::nullopt;
}

namespace text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Lowercases ASCII and folds the Latin-1 accented vowels and ñ (as UTF-8)
/// to their base letters. Other bytes pass through unchanged.
inline std::string fold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto c = static_cast<unsigned char>(s[i]);
    if (c == 0xC3 && i + 1 < s.size()) {
      char mapped = 0;
      switch (static_cast<unsigned char>(s[i + 1])) {
        case 0xA0: case 0xA1: case 0xA2: case 0xA4: case 0x80: case 0x81: case 0x82: case 0x84: mapped = 'a'; break;
        case 0xA8: case 0xA9: case 0xAA: case 0xAB: case 0x88: case 0x89: case 0x8A: case 0x8B: mapped = 'e'; break;
        case 0xAC: case 0xAD: case 0xAE: case 0xAF: case 0x8C: case 0x8D: case 0x8E: case 0x8F: mapped = 'i'; break;
        case 0xB2: case 0xB3: case 0xB4: case 0xB6: case 0x92: case 0x93: case 0x94: case 0x96: mapped = 'o'; break;
        case 0xB9: case 0xBA: case 0xBB: case 0xBC: case 0x99: case 0x9A: case 0x9B: case 0x9C: mapped = 'u'; break;
        case 0xB1: case 0x91: mapped = 'n'; break;
        default: break;
      }
      if (mapped != 0) {
        out.push_back(mapped);
        ++i;
        continue;
      }
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    out.push_back(static_cast<char>(c));
  }
  return out;
}

/// Folds and collapses internal whitespace runs to a single space.
inline std::string normalize_key(std::string_view s) {
  std::string folded = fold(trim(s));
  std::string out;
  out.reserve(folded.size());
  bool in_space = false;
  for (char c : folded) {
    if (is_space(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(s.substr(start));
      break;
    }
    std::string_view line = s.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace text

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace erd

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

// Parser and renderer for the labeled-block reasoning grammar:
//
//   Observaciones:
//   - posts 3, 7 [tristeza, llanto]: <note>
//   - [pesimismo]: <note>
//   - sin observaciones
//   Conclusión: <text, may continue on following lines>
//   Predicción: positivo | negativo
//   Post detectado: <N> | ninguno
//
// Header matching tolerates case, accents, markdown decoration and a missing
// colon. Values are strict: anything that is not a prediction token, a post
// number in range or a BDI symptom is a ParseError the caller can re-ask for.

#pragma once

#include <array>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "erd/bdi.hpp"
#include "erd/common.hpp"
#include "erd/corpus.hpp"
#include "erd/literals.hpp"

namespace erd {

enum class ParseErrorKind { missing_section, bad_prediction_token, bad_post_number, unknown_symptom, empty_output };

inline std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::missing_section: return "missing_section";
    case ParseErrorKind::bad_prediction_token: return "bad_prediction_token";
    case ParseErrorKind::bad_post_number: return "bad_post_number";
    case ParseErrorKind::unknown_symptom: return "unknown_symptom";
    case ParseErrorKind::empty_output: return "empty_output";
  }
  return "unknown";
}

struct ParseError {
  ParseErrorKind kind = ParseErrorKind::empty_output;
  std::string location;  // section header or "line N"
  std::string detail;
  std::string section;   // missing or offending section header
  std::string symptom;   // unknown_symptom only
  int max_post = 0;      // valid post range upper bound

  std::string message() const { return std::string(to_string(kind)) + " at " + location + ": " + detail; }
};

/// Closed set of recoverable deviations.
enum class WarningKind {
  preamble_ignored,
  duplicate_section_ignored,
  trailing_text_ignored,
  detected_post_on_negative_dropped,
  unknown_symptom_dropped,
  observation_without_symptoms_dropped,
  missing_note_separator,
};

inline std::string_view to_string(WarningKind k) {
  switch (k) {
    case WarningKind::preamble_ignored: return "preamble_ignored";
    case WarningKind::duplicate_section_ignored: return "duplicate_section_ignored";
    case WarningKind::trailing_text_ignored: return "trailing_text_ignored";
    case WarningKind::detected_post_on_negative_dropped: return "detected_post_on_negative_dropped";
    case WarningKind::unknown_symptom_dropped: return "unknown_symptom_dropped";
    case WarningKind::observation_without_symptoms_dropped: return "observation_without_symptoms_dropped";
    case WarningKind::missing_note_separator: return "missing_note_separator";
  }
  return "unknown";
}

struct ParseWarning {
  WarningKind kind;
  std::string detail;

  std::string message() const { return std::string(to_string(kind)) + (detail.empty() ? "" : ": " + detail); }
};

struct ParsedResponse {
  Reasoning reasoning;
  std::vector<ParseWarning> warnings;
  std::string raw;
};

namespace detail {

enum class Block { observations = 0, conclusion = 1, prediction = 2, detected = 3 };

inline std::string_view strip_decoration(std::string_view s) {
  auto is_deco = [](char c) { return c == '#' || c == '*' || c == '_' || c == '`' || text::is_space(c); };
  while (!s.empty() && is_deco(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_deco(s.back())) s.remove_suffix(1);
  return s;
}

/// Value part of a single-token line: decoration and a trailing period removed.
inline std::string_view strip_value(std::string_view s) {
  for (std::size_t before = s.size() + 1; s.size() != before;) {
    before = s.size();
    s = strip_decoration(s);
    while (!s.empty() && (s.back() == '.' || s.back() == '"' || s.back() == '\'')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == '"' || s.front() == '\'')) s.remove_prefix(1);
    s = text::trim(s);
  }
  return s;
}

/// If `line` is a block header, returns the block and the inline value.
inline std::optional<std::pair<Block, std::string_view>> match_header(std::string_view line, const Literals& lit) {
  std::string_view s = line;
  while (!s.empty() && (s.front() == '#' || s.front() == '*' || s.front() == '_' || text::is_space(s.front())))
    s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  const std::array<std::pair<Block, const std::string*>, 4> headers{{
      {Block::observations, &lit.observations_header},
      {Block::conclusion, &lit.conclusion_header},
      {Block::prediction, &lit.prediction_header},
      {Block::detected, &lit.detected_header},
  }};
  // Fold a bounded prefix; headers are short.
  const std::string folded = text::fold(s.substr(0, std::min<std::size_t>(s.size(), 64)));
  for (const auto& [block, name] : headers) {
    const std::string key = text::fold(*name);
    if (folded.compare(0, key.size(), key) != 0) continue;
    // Map the folded length back to bytes in `s`: folding shrinks each
    // accented 2-byte char to one byte, so walk the original.
    std::size_t bytes = 0, chars = 0;
    while (chars < key.size() && bytes < s.size()) {
      auto c = static_cast<unsigned char>(s[bytes]);
      bytes += (c == 0xC3 && bytes + 1 < s.size()) ? 2 : 1;
      ++chars;
    }
    std::string_view rest = s.substr(bytes);
    while (!rest.empty() && (rest.front() == '*' || rest.front() == '_' || rest.front() == ' ' || rest.front() == '\t'))
      rest.remove_prefix(1);
    if (rest.empty()) return std::pair{block, std::string_view{}};
    if (rest.front() != ':') continue;
    rest.remove_prefix(1);
    while (!rest.empty() && (rest.front() == '*' || rest.front() == '_')) rest.remove_prefix(1);
    return std::pair{block, text::trim(rest)};
  }
  return std::nullopt;
}

inline std::optional<int> parse_positive_int(std::string_view s) {
  s = text::trim(s);
  if (s.empty() || s.size() > 9) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline bool is_bullet(std::string_view s) {
  return !s.empty() && (s.front() == '-' || s.front() == '*' || s.front() == '+' ||
                        s.substr(0, 3) == "\xE2\x80\xA2");  // U+2022 bullet
}

inline std::string_view drop_bullet(std::string_view s) {
  if (s.substr(0, 3) == "\xE2\x80\xA2") s.remove_prefix(3);
  else if (!s.empty()) s.remove_prefix(1);
  return text::trim(s);
}

struct BulletParse {
  std::optional<Observation> observation;
  std::optional<ParseError> error;
};

/// Parses "post N" / "posts N, M" at the start of `s`; advances `s` past it.
inline std::optional<std::vector<int>> take_citation(std::string_view& s, const Literals& lit, bool& bad_number) {
  const std::string folded = text::fold(s.substr(0, std::min<std::size_t>(s.size(), 16)));
  std::size_t word = 0;
  const std::string plural = text::fold(lit.citation_plural), singular = text::fold(lit.citation_singular);
  if (folded.compare(0, plural.size(), plural) == 0) word = plural.size();
  else if (folded.compare(0, singular.size(), singular) == 0) word = singular.size();
  else return std::nullopt;
  if (word >= s.size() || !(text::is_space(s[word]) || s[word] == '#')) return std::nullopt;
  std::string_view rest = s.substr(word);
  std::vector<int> indices;
  std::size_t i = 0;
  while (true) {
    while (i < rest.size() && (text::is_space(rest[i]) || rest[i] == '#')) ++i;
    std::size_t start = i;
    while (i < rest.size() && rest[i] >= '0' && rest[i] <= '9') ++i;
    if (start == i) break;
    auto v = parse_positive_int(rest.substr(start, i - start));
    if (!v) bad_number = true;
    indices.push_back(v.value_or(0));
    std::size_t save = i;
    while (i < rest.size() && text::is_space(rest[i])) ++i;
    if (i < rest.size() && rest[i] == ',') {
      ++i;
      continue;
    }
    if (i + 1 < rest.size() && rest[i] == 'y' && text::is_space(rest[i + 1])) {
      i += 1;
      continue;
    }
    i = save;
    break;
  }
  if (indices.empty()) return std::nullopt;
  s = rest.substr(i);
  return indices;
}

inline BulletParse parse_bullet(std::string_view content, std::size_t n_posts, std::size_t line_no,
                                const Literals& lit, std::vector<ParseWarning>& warnings) {
  BulletParse out;
  Observation obs;
  std::string_view s = text::trim(content);
  const std::string where = "line " + std::to_string(line_no);

  bool bad_number = false;
  auto citation = take_citation(s, lit, bad_number);
  if (citation) {
    obs.post_indices = *citation;
    for (int p : obs.post_indices) {
      if (bad_number || p < 1 || static_cast<std::size_t>(p) > n_posts) {
        ParseError e{ParseErrorKind::bad_post_number, where,
                     "observation cites post " + std::to_string(p) + " outside [1, " + std::to_string(n_posts) + "]",
                     lit.observations_header, "", static_cast<int>(n_posts)};
        out.error = e;
        return out;
      }
    }
    s = text::trim(s);
  }

  bool bracket = false;
  std::vector<std::string> unknown;
  if (!s.empty() && s.front() == '[') {
    auto close = s.find(']');
    if (close != std::string_view::npos) {
      bracket = true;
      std::string_view list = s.substr(1, close - 1);
      s = text::trim(s.substr(close + 1));
      std::size_t start = 0;
      while (start <= list.size()) {
        std::size_t end = list.find_first_of(",;", start);
        if (end == std::string_view::npos) end = list.size();
        std::string_view name = text::trim(list.substr(start, end - start));
        if (!name.empty()) {
          if (auto sym = bdi_from_name(name)) obs.symptoms.push_back(*sym);
          else unknown.emplace_back(name);
        }
        start = end + 1;
      }
    }
  }

  if (citation || bracket) {
    if (!s.empty() && s.front() == ':') {
      s = text::trim(s.substr(1));
    } else if (!s.empty()) {
      warnings.push_back({WarningKind::missing_note_separator, where});
    }
  }
  obs.note = std::string(s);

  if (!unknown.empty()) {
    if (obs.symptoms.empty()) {
      ParseError e{ParseErrorKind::unknown_symptom, where, "unknown symptom '" + unknown.front() + "'",
                   lit.observations_header, unknown.front(), static_cast<int>(n_posts)};
      out.error = e;
      return out;
    }
    for (const auto& u : unknown) warnings.push_back({WarningKind::unknown_symptom_dropped, u});
  }
  if (obs.symptoms.empty() && !is_no_findings_note(obs.note)) {
    warnings.push_back({WarningKind::observation_without_symptoms_dropped, where});
    return out;
  }
  out.observation = std::move(obs);
  return out;
}

}  // namespace detail

/// Parses model output for a user with `n_posts` posts. Never throws on any
/// input; every failure is a classified ParseError.
inline Expected<ParsedResponse, ParseError> parse_response(std::string_view raw, std::size_t n_posts,
                                                           const Literals& lit = spanish_literals()) {
  using detail::Block;
  const int max_post = static_cast<int>(std::min<std::size_t>(n_posts, 1'000'000'000));
  if (text::trim(raw).empty()) {
    return ParseError{ParseErrorKind::empty_output, "line 1", "no output", "", "", max_post};
  }

  ParsedResponse out;
  out.raw = std::string(raw);
  auto& warnings = out.warnings;

  struct Section {
    bool present = false;
    std::size_t header_line = 0;
    std::vector<std::pair<std::size_t, std::string_view>> lines;  // (line number, content)
  };
  std::array<Section, 4> sections;
  std::optional<Block> current;
  bool ignoring_duplicate = false;
  bool preamble = false;

  const auto lines = text::split_lines(raw);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    std::string_view line = lines[i];
    if (auto h = detail::match_header(line, lit)) {
      auto& sec = sections[static_cast<std::size_t>(h->first)];
      if (sec.present) {
        warnings.push_back({WarningKind::duplicate_section_ignored, "line " + std::to_string(line_no)});
        ignoring_duplicate = true;
        current.reset();
        continue;
      }
      ignoring_duplicate = false;
      sec.present = true;
      sec.header_line = line_no;
      current = h->first;
      if (!h->second.empty()) sec.lines.emplace_back(line_no, h->second);
      continue;
    }
    if (text::trim(line).empty()) continue;
    if (ignoring_duplicate) continue;
    if (!current) {
      preamble = true;
      continue;
    }
    sections[static_cast<std::size_t>(*current)].lines.emplace_back(line_no, text::trim(line));
  }
  if (preamble) warnings.push_back({WarningKind::preamble_ignored, ""});

  const std::array<const std::string*, 4> names{&lit.observations_header, &lit.conclusion_header,
                                                &lit.prediction_header, &lit.detected_header};
  for (std::size_t b = 0; b < 4; ++b) {
    if (!sections[b].present) {
      return ParseError{ParseErrorKind::missing_section, *names[b], "section '" + *names[b] + "' not found",
                        *names[b], "", max_post};
    }
  }

  // Conclusion: required, may span lines.
  const auto& concl = sections[static_cast<std::size_t>(Block::conclusion)];
  if (concl.lines.empty()) {
    return ParseError{ParseErrorKind::missing_section, lit.conclusion_header, "empty conclusion",
                      lit.conclusion_header, "", max_post};
  }
  {
    std::vector<std::string> parts;
    for (const auto& [_, l] : concl.lines) parts.emplace_back(l);
    out.reasoning.conclusion = text::join(parts, "\n");
  }

  // Prediction.
  const auto& pred = sections[static_cast<std::size_t>(Block::prediction)];
  if (pred.lines.empty()) {
    return ParseError{ParseErrorKind::missing_section, lit.prediction_header, "empty prediction",
                      lit.prediction_header, "", max_post};
  }
  {
    const std::string token = text::normalize_key(detail::strip_value(pred.lines.front().second));
    if (token == text::fold(lit.positive_token) || token == "positive") {
      out.reasoning.prediction = Label::positive;
    } else if (token == text::fold(lit.negative_token) || token == "negative") {
      out.reasoning.prediction = Label::negative;
    } else {
      return ParseError{ParseErrorKind::bad_prediction_token, "line " + std::to_string(pred.lines.front().first),
                        "unrecognized prediction '" + std::string(pred.lines.front().second.substr(0, 80)) + "'",
                        lit.prediction_header, "", max_post};
    }
    if (pred.lines.size() > 1) warnings.push_back({WarningKind::trailing_text_ignored, lit.prediction_header});
  }

  // Detected post.
  const auto& det = sections[static_cast<std::size_t>(Block::detected)];
  if (det.lines.empty()) {
    return ParseError{ParseErrorKind::missing_section, lit.detected_header, "empty detected post",
                      lit.detected_header, "", max_post};
  }
  {
    const auto [line_no, raw_value] = det.lines.front();
    std::string_view value = detail::strip_value(raw_value);
    const std::string key = text::normalize_key(value);
    bool is_none = false;
    for (const auto& alias : lit.none_aliases)
      if (key == text::normalize_key(alias)) is_none = true;
    std::optional<int> number;
    if (!is_none) {
      std::string_view v = value;
      const std::string singular = text::fold(lit.citation_singular);
      if (text::fold(v.substr(0, std::min(v.size(), singular.size()))) == singular) v.remove_prefix(singular.size());
      v = text::trim(v);
      if (!v.empty() && v.front() == '#') v.remove_prefix(1);
      number = detail::parse_positive_int(v);
      if (!number) {
        return ParseError{ParseErrorKind::bad_post_number, "line " + std::to_string(line_no),
                          "'" + std::string(raw_value.substr(0, 80)) + "' is neither a post number nor '" +
                              lit.none_marker + "'",
                          lit.detected_header, "", max_post};
      }
    }
    if (out.reasoning.prediction == Label::positive) {
      if (!number || *number < 1 || *number > max_post) {
        return ParseError{ParseErrorKind::bad_post_number, "line " + std::to_string(line_no),
                          "positive prediction needs a detected post in [1, " + std::to_string(max_post) + "]",
                          lit.detected_header, "", max_post};
      }
      out.reasoning.detected_post = number;
    } else if (number) {
      warnings.push_back({WarningKind::detected_post_on_negative_dropped, std::to_string(*number)});
    }
    if (det.lines.size() > 1) warnings.push_back({WarningKind::trailing_text_ignored, lit.detected_header});
  }

  // Observations.
  const auto& obs = sections[static_cast<std::size_t>(Block::observations)];
  std::vector<std::pair<std::size_t, std::string>> bullets;
  for (const auto& [line_no, l] : obs.lines) {
    if (detail::is_bullet(l)) {
      bullets.emplace_back(line_no, std::string(detail::drop_bullet(l)));
    } else if (bullets.empty()) {
      bullets.emplace_back(line_no, std::string(l));
    } else {
      bullets.back().second += " ";
      bullets.back().second += l;
    }
  }
  for (const auto& [line_no, content] : bullets) {
    auto b = detail::parse_bullet(content, n_posts, line_no, lit, warnings);
    if (b.error) return *b.error;
    if (b.observation) out.reasoning.observations.push_back(std::move(*b.observation));
  }
  return out;
}

inline std::string render_observation(const Observation& o, const Literals& lit = spanish_literals()) {
  std::string line = "- ";
  bool head = false;
  if (!o.post_indices.empty()) {
    line += o.post_indices.size() == 1 ? lit.citation_singular : lit.citation_plural;
    line += ' ';
    for (std::size_t i = 0; i < o.post_indices.size(); ++i) {
      if (i) line += ", ";
      line += std::to_string(o.post_indices[i]);
    }
    head = true;
  }
  if (!o.symptoms.empty()) {
    if (head) line += ' ';
    line += '[';
    for (std::size_t i = 0; i < o.symptoms.size(); ++i) {
      if (i) line += ", ";
      line += bdi_spanish(o.symptoms[i]);
    }
    line += ']';
    head = true;
  }
  if (head) {
    line += ':';
    if (!o.note.empty()) line += ' ' + o.note;
  } else {
    line += o.note;
  }
  return line;
}

/// Canonical text for a reasoning; parse_response inverts it.
inline std::string render_reasoning(const Reasoning& r, const Literals& lit = spanish_literals()) {
  std::string out = lit.observations_header + ":\n";
  for (const auto& o : r.observations) out += render_observation(o, lit) + "\n";
  out += lit.conclusion_header + ": " + r.conclusion + "\n";
  out += lit.prediction_header + ": " + (r.prediction == Label::positive ? lit.positive_token : lit.negative_token) + "\n";
  out += lit.detected_header + ": " + (r.detected_post ? std::to_string(*r.detected_post) : lit.none_marker) + "\n";
  return out;
}

inline std::string bdi_name_list() {
  std::string out;
  for (std::size_t i = 0; i < kBdiItems.size(); ++i) {
    if (i) out += ", ";
    out += kBdiItems[i].spanish;
  }
  return out;
}

/// Corrective instruction appended to the prompt for one re-ask.
inline std::string repair_prompt(const ParseError& e, const Literals& lit = spanish_literals()) {
  std::string body;
  switch (e.kind) {
    case ParseErrorKind::missing_section:
      body = fill(lit.repair_missing_section, {{"section", e.section}});
      break;
    case ParseErrorKind::bad_prediction_token:
      body = fill(lit.repair_bad_prediction,
                  {{"section", lit.prediction_header}, {"positive", lit.positive_token}, {"negative", lit.negative_token}});
      break;
    case ParseErrorKind::bad_post_number:
      body = fill(lit.repair_bad_post_number,
                  {{"section", lit.detected_header}, {"max", std::to_string(e.max_post)}, {"none", lit.none_marker}});
      break;
    case ParseErrorKind::unknown_symptom:
      body = fill(lit.repair_unknown_symptom, {{"symptom", e.symptom}, {"list", bdi_name_list()}});
      break;
    case ParseErrorKind::empty_output:
      body = lit.repair_empty_output;
      break;
  }
  return lit.repair_intro + "\n" + body + "\n" + lit.repair_outro;
}

}  // namespace erd

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

// Corpus data model: user timelines, specialist reasonings, JSONL I/O and
// summary statistics.

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "erd/bdi.hpp"
#include "erd/common.hpp"

namespace erd {

using json = nlohmann::json;

struct Post {
  int index = 1;  // 1-based ordinal within the timeline
  std::string text;
  std::optional<std::string> timestamp;

  bool operator==(const Post&) const = default;
};

struct UserSample {
  std::string user_id;
  std::vector<Post> posts;
  Label gold_label = Label::negative;

  bool operator==(const UserSample&) const = default;
};

enum class Split { train, trial, test, custom };

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "trial") return Split::trial;
  if (name == "test") return Split::test;
  return Split::custom;
}

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::trial: return "trial";
    case Split::test: return "test";
    case Split::custom: return "custom";
  }
  return "custom";
}

struct Corpus {
  Split split = Split::custom;
  std::vector<UserSample> users;

  const UserSample* find(std::string_view user_id) const {
    for (const auto& u : users)
      if (u.user_id == user_id) return &u;
    return nullptr;
  }

  bool operator==(const Corpus&) const = default;
};

struct Observation {
  std::vector<int> post_indices;
  std::vector<BdiSymptom> symptoms;
  std::string note;

  bool operator==(const Observation&) const = default;
};

struct Reasoning {
  std::vector<Observation> observations;
  std::string conclusion;
  Label prediction = Label::negative;
  std::optional<int> detected_post;  // present iff prediction is positive

  bool operator==(const Reasoning&) const = default;
};

enum class Author { specialist, model };

struct ReasonedSample {
  UserSample user;
  Reasoning reasoning;
  int relevance_rank = 0;  // lower = more relevant for prompting
  Author author = Author::specialist;

  bool operator==(const ReasonedSample&) const = default;
};

struct CorpusStats {
  std::size_t n_users = 0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  double posts_mean = 0.0;
  std::size_t posts_min = 0;
  std::size_t posts_max = 0;

  bool operator==(const CorpusStats&) const = default;
};

struct LoadOptions {
  std::size_t min_posts = 1;
  std::size_t max_posts = std::numeric_limits<std::size_t>::max();
};

inline constexpr std::string_view kNoFindingsNote = "sin observaciones";

/// True for the explicit "no findings" observation note.
inline bool is_no_findings_note(std::string_view note) {
  const std::string key = text::normalize_key(note);
  return key == "sin observaciones" || key == "sin observaciones." || key == "ninguna observacion" ||
         key == "no hay observaciones" || key == "no findings";
}

// ---------------------------------------------------------------------------
// Reasoning invariants

enum class ViolationKind {
  dangling_post_index,
  detected_post_on_negative,
  missing_detected_post,
  detected_post_out_of_range,
  observation_without_symptoms,
  negative_relevance_rank,
};

inline std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::dangling_post_index: return "dangling post index";
    case ViolationKind::detected_post_on_negative: return "detected_post present for negative";
    case ViolationKind::missing_detected_post: return "detected_post missing for positive";
    case ViolationKind::detected_post_out_of_range: return "detected_post out of range";
    case ViolationKind::observation_without_symptoms: return "observation without symptoms";
    case ViolationKind::negative_relevance_rank: return "negative relevance_rank";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::string detail;
};

/// Checks a reasoning against the number of posts available when it was
/// produced. Returns every violated invariant; empty means valid.
inline std::vector<Violation> validate_reasoning(const Reasoning& r, std::size_t n_posts) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < r.observations.size(); ++i) {
    const auto& obs = r.observations[i];
    for (int p : obs.post_indices) {
      if (p < 1 || static_cast<std::size_t>(p) > n_posts) {
        out.push_back({ViolationKind::dangling_post_index,
                       "observation " + std::to_string(i + 1) + " cites post " + std::to_string(p) + " of " +
                           std::to_string(n_posts)});
      }
    }
    if (obs.symptoms.empty() && !is_no_findings_note(obs.note)) {
      out.push_back({ViolationKind::observation_without_symptoms, "observation " + std::to_string(i + 1)});
    }
  }
  if (r.prediction == Label::negative && r.detected_post) {
    out.push_back({ViolationKind::detected_post_on_negative, "detected_post=" + std::to_string(*r.detected_post)});
  }
  if (r.prediction == Label::positive) {
    if (!r.detected_post) {
      out.push_back({ViolationKind::missing_detected_post, ""});
    } else if (*r.detected_post < 1 || static_cast<std::size_t>(*r.detected_post) > n_posts) {
      out.push_back({ViolationKind::detected_post_out_of_range,
                     std::to_string(*r.detected_post) + " not in [1, " + std::to_string(n_posts) + "]"});
    }
  }
  return out;
}

inline std::vector<Violation> validate_reasoned_sample(const ReasonedSample& sample) {
  auto out = validate_reasoning(sample.reasoning, sample.user.posts.size());
  if (sample.relevance_rank < 0) {
    out.push_back({ViolationKind::negative_relevance_rank, std::to_string(sample.relevance_rank)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON mapping

inline json to_json(const Post& p) {
  json j = {{"index", p.index}, {"text", p.text}};
  if (p.timestamp) j["timestamp"] = *p.timestamp;
  return j;
}

inline json to_json(const UserSample& u) {
  json posts = json::array();
  for (const auto& p : u.posts) posts.push_back(to_json(p));
  return {{"user_id", u.user_id}, {"label", std::string(to_string(u.gold_label))}, {"posts", posts}};
}

inline json to_json(const Observation& o) {
  json symptoms = json::array();
  for (auto s : o.symptoms) symptoms.push_back(std::string(bdi_id(s)));
  return {{"posts", o.post_indices}, {"symptoms", symptoms}, {"note", o.note}};
}

inline json to_json(const Reasoning& r) {
  json obs = json::array();
  for (const auto& o : r.observations) obs.push_back(to_json(o));
  json j = {{"observations", obs},
            {"conclusion", r.conclusion},
            {"prediction", std::string(to_string(r.prediction))},
            {"detected_post", nullptr}};
  if (r.detected_post) j["detected_post"] = *r.detected_post;
  return j;
}

inline std::string_view to_string(Author a) { return a == Author::specialist ? "specialist" : "model"; }

namespace detail {

[[noreturn]] inline void bad_record(const std::string& what) { throw std::invalid_argument(what); }

inline const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad_record(std::string("missing field '") + key + "'");
  return j.at(key);
}

inline int require_int(const json& j, const char* what) {
  if (!j.is_number_integer()) bad_record(std::string(what) + " must be an integer");
  auto v = j.get<long long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    bad_record(std::string(what) + " out of range");
  return static_cast<int>(v);
}

inline std::string require_string(const json& j, const char* what) {
  if (!j.is_string()) bad_record(std::string(what) + " must be a string");
  return j.get<std::string>();
}

}  // namespace detail

/// Parses one corpus record. Throws std::invalid_argument describing the
/// first problem found.
inline UserSample user_from_json(const json& j) {
  UserSample u;
  u.user_id = detail::require_string(detail::require(j, "user_id"), "user_id");
  if (text::trim(u.user_id).empty()) detail::bad_record("user_id is empty");
  auto label = parse_label(detail::require_string(detail::require(j, "label"), "label"));
  if (!label) detail::bad_record("label must be \"positive\" or \"negative\"");
  u.gold_label = *label;
  const json& posts = detail::require(j, "posts");
  if (!posts.is_array() || posts.empty()) detail::bad_record("posts must be a nonempty array");
  int expected = 1;
  for (const auto& pj : posts) {
    Post p;
    p.index = detail::require_int(detail::require(pj, "index"), "post index");
    if (p.index != expected)
      detail::bad_record("post index " + std::to_string(p.index) + " where " + std::to_string(expected) +
                         " was expected");
    p.text = detail::require_string(detail::require(pj, "text"), "post text");
    if (text::trim(p.text).empty()) detail::bad_record("post " + std::to_string(p.index) + " has empty text");
    if (pj.contains("timestamp") && !pj.at("timestamp").is_null())
      p.timestamp = detail::require_string(pj.at("timestamp"), "timestamp");
    u.posts.push_back(std::move(p));
    ++expected;
  }
  return u;
}

inline Observation observation_from_json(const json& j) {
  Observation o;
  const json& posts = detail::require(j, "posts");
  if (!posts.is_array()) detail::bad_record("observation posts must be an array");
  for (const auto& p : posts) o.post_indices.push_back(detail::require_int(p, "observation post"));
  const json& symptoms = detail::require(j, "symptoms");
  if (!symptoms.is_array()) detail::bad_record("symptoms must be an array");
  for (const auto& s : symptoms) {
    auto id = detail::require_string(s, "symptom");
    auto sym = bdi_from_id(id);
    if (!sym) detail::bad_record("unknown symptom '" + id + "'");
    o.symptoms.push_back(*sym);
  }
  o.note = detail::require_string(detail::require(j, "note"), "note");
  return o;
}

inline Reasoning reasoning_from_json(const json& j) {
  Reasoning r;
  const json& obs = detail::require(j, "observations");
  if (!obs.is_array()) detail::bad_record("observations must be an array");
  for (const auto& o : obs) r.observations.push_back(observation_from_json(o));
  r.conclusion = detail::require_string(detail::require(j, "conclusion"), "conclusion");
  auto label = parse_label(detail::require_string(detail::require(j, "prediction"), "prediction"));
  if (!label) detail::bad_record("prediction must be \"positive\" or \"negative\"");
  r.prediction = *label;
  if (j.contains("detected_post") && !j.at("detected_post").is_null())
    r.detected_post = detail::require_int(j.at("detected_post"), "detected_post");
  return r;
}

/// Reasoned-sample record: the user is referenced by id, posts live in the
/// corpus.
inline json reasoned_sample_record(const ReasonedSample& s) {
  return {{"user_id", s.user.user_id},
          {"reasoning", to_json(s.reasoning)},
          {"relevance_rank", s.relevance_rank},
          {"author", std::string(to_string(s.author))}};
}

inline ReasonedSample reasoned_sample_from_json(const json& j, const Corpus& corpus) {
  ReasonedSample s;
  auto id = detail::require_string(detail::require(j, "user_id"), "user_id");
  const UserSample* user = corpus.find(id);
  if (!user) throw Error(Errc::unknown_user_id, id);
  s.user = *user;
  s.reasoning = reasoning_from_json(detail::require(j, "reasoning"));
  s.relevance_rank = detail::require_int(detail::require(j, "relevance_rank"), "relevance_rank");
  auto author = detail::require_string(detail::require(j, "author"), "author");
  if (author == "specialist") s.author = Author::specialist;
  else if (author == "model") s.author = Author::model;
  else detail::bad_record("author must be \"specialist\" or \"model\"");
  return s;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

/// Calls fn(line_number, parsed_json) for each nonblank line. Malformed JSON
/// or a record rejected by fn is reported as malformed_record with its line.
template <class Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_record, "line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    try {
      fn(line_no, j);
    } catch (const std::invalid_argument& e) {
      throw Error(Errc::malformed_record, "line " + std::to_string(line_no) + ": " + e.what(), line_no);
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_record, "line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
}

}  // namespace detail

inline Corpus load_corpus(const std::filesystem::path& path, std::string_view split_name,
                          const LoadOptions& opts = {}) {
  Corpus corpus;
  corpus.split = parse_split(split_name);
  std::unordered_map<std::string, std::size_t> seen;  // user_id -> line
  detail::for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    UserSample u = user_from_json(j);
    if (u.posts.size() < opts.min_posts || u.posts.size() > opts.max_posts) {
      detail::bad_record("user '" + u.user_id + "' has " + std::to_string(u.posts.size()) +
                         " posts, outside the configured bounds");
    }
    auto [it, inserted] = seen.emplace(u.user_id, line_no);
    if (!inserted) {
      throw Error(Errc::duplicate_user_id,
                  "'" + u.user_id + "' on lines " + std::to_string(it->second) + " and " + std::to_string(line_no),
                  line_no);
    }
    corpus.users.push_back(std::move(u));
  });
  if (corpus.users.empty()) throw Error(Errc::empty_corpus, path.string());
  return corpus;
}

inline std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& u : corpus.users) {
    out += to_json(u).dump();
    out += '\n';
  }
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::storage, "cannot write " + path.string());
  out << corpus_to_jsonl(corpus);
  if (!out) throw Error(Errc::storage, "write failed for " + path.string());
}

/// Loads reasoned samples and resolves their users against `corpus`.
inline std::vector<ReasonedSample> load_reasoned_samples(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<ReasonedSample> out;
  detail::for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    try {
      out.push_back(reasoned_sample_from_json(j, corpus));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.detail(), line_no);
    }
  });
  return out;
}

inline std::string file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

// ---------------------------------------------------------------------------
// Statistics

inline CorpusStats corpus_stats(const Corpus& corpus) {
  if (corpus.users.empty()) throw Error(Errc::empty_corpus, "corpus_stats on empty corpus");
  CorpusStats s;
  s.n_users = corpus.users.size();
  s.posts_min = std::numeric_limits<std::size_t>::max();
  std::size_t total = 0;
  for (const auto& u : corpus.users) {
    (u.gold_label == Label::positive ? s.n_positive : s.n_negative)++;
    total += u.posts.size();
    s.posts_min = std::min(s.posts_min, u.posts.size());
    s.posts_max = std::max(s.posts_max, u.posts.size());
  }
  s.posts_mean = static_cast<double>(total) / static_cast<double>(s.n_users);
  return s;
}

inline json to_json(const CorpusStats& s) {
  return {{"n_users", s.n_users}, {"n_positive", s.n_positive}, {"n_negative", s.n_negative},
          {"posts_mean", s.posts_mean}, {"posts_min", s.posts_min}, {"posts_max", s.posts_max}};
}

/// One-line table in the "Total Pos Neg Media Min Max" layout, mean at one
/// decimal.
inline std::string format_stats_row(std::string_view name, const CorpusStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8.*s %6zu %6zu %6zu %7.1f %5zu %5zu", static_cast<int>(name.size()), name.data(),
                s.n_users, s.n_positive, s.n_negative, s.posts_mean, s.posts_min, s.posts_max);
  return buf;
}

}  // namespace erd

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

// Synthetic corpora, scripted model replies and generators shared by tests.

#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "erd/erd.hpp"

namespace erd::testing {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("erd-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_text(const fs::path& p) { return storage::read_file(p); }

inline const std::vector<std::string>& filler_sentences() {
  static const std::vector<std::string> s = {
      "Hoy fui al parque con mis amigos y jugamos al fútbol.",
      "No puedo dormir bien desde hace semanas.",
      "Me siento cansado todo el tiempo, sin ganas de nada.",
      "Estoy preparando los exámenes finales de la universidad.",
      "Ayer cociné una receta nueva de lentejas.",
      "A veces pienso que nada tiene sentido.",
      "El concierto del sábado estuvo increíble.",
      "Lloro sin motivo y no sé por qué.",
      "Mi perro aprendió a dar la pata.",
      "Trabajo muchas horas y llego agotada a casa.",
      "¿Alguien recomienda una serie para el fin de semana?",
      "Me cuesta concentrarme en cualquier cosa.",
  };
  return s;
}

inline std::string user_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "user%04zu", i);
  return buf;
}

inline UserSample make_user(std::string id, Label label, std::size_t n_posts, std::mt19937_64& rng) {
  UserSample u;
  u.user_id = std::move(id);
  u.gold_label = label;
  const auto& s = filler_sentences();
  std::uniform_int_distribution<std::size_t> pick(0, s.size() - 1);
  for (std::size_t i = 1; i <= n_posts; ++i) u.posts.push_back({static_cast<int>(i), s[pick(rng)], std::nullopt});
  return u;
}

struct CorpusShape {
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t min_posts = 1;
  std::size_t max_posts = 1;
};

/// Positives first, then negatives. The first user has min_posts and the
/// second max_posts, so both bounds are attained whenever n >= 2.
inline Corpus make_corpus(const CorpusShape& shape, std::uint64_t seed, Split split = Split::test) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(shape.min_posts, shape.max_posts);
  Corpus c;
  c.split = split;
  const std::size_t n = shape.n_positive + shape.n_negative;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = i == 0 ? shape.min_posts : i == 1 ? shape.max_posts : len(rng);
    c.users.push_back(make_user(user_id(i + 1), i < shape.n_positive ? Label::positive : Label::negative, k, rng));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Model replies

inline Reasoning positive_reasoning(int detected) {
  Reasoning r;
  r.observations.push_back({{detected}, {BdiSymptom::sadness, BdiSymptom::crying}, "expresa tristeza y llanto"});
  r.conclusion = "Hay indicios consistentes de síntomas depresivos.";
  r.prediction = Label::positive;
  r.detected_post = detected;
  return r;
}

inline Reasoning negative_reasoning() {
  Reasoning r;
  r.observations.push_back({{}, {}, std::string(kNoFindingsNote)});
  r.conclusion = "No se observan síntomas relevantes.";
  r.prediction = Label::negative;
  return r;
}

/// What the scripted model does for one user.
struct UserPlan {
  Label predicted = Label::negative;
  int alarm_at = 0;  // positive predictions: round of the alarm / detected post
  bool refusal = false;
};

/// Expected outcome implied by a plan, independent of the engine.
struct ExpectedOutcome {
  std::string user_id;
  Label predicted;
  int delay_k;
  ProcessingStatus status;
};

inline ExpectedOutcome expected_outcome(const UserSample& u, const UserPlan& p) {
  const int n = static_cast<int>(u.posts.size());
  if (p.refusal) return {u.user_id, Label::negative, n, ProcessingStatus::unprocessed};
  if (p.predicted == Label::positive) return {u.user_id, Label::positive, p.alarm_at, ProcessingStatus::ok};
  return {u.user_id, Label::negative, n, ProcessingStatus::ok};
}

/// Mock script realizing `plans`. Streaming scripts answer negative until
/// the alarm round; retrospective scripts answer once.
inline json mock_script(const Corpus& corpus, const std::map<std::string, UserPlan>& plans, Mode mode) {
  json users = json::object();
  for (const auto& u : corpus.users) {
    const UserPlan& p = plans.at(u.user_id);
    if (p.refusal) {
      users[u.user_id] = {{"refusal", true}};
    } else if (p.predicted == Label::negative) {
      users[u.user_id] = render_reasoning(negative_reasoning());
    } else if (mode == Mode::retrospective) {
      users[u.user_id] = render_reasoning(positive_reasoning(p.alarm_at));
    } else {
      json seq = json::array();
      for (int r = 1; r < p.alarm_at; ++r) seq.push_back(render_reasoning(negative_reasoning()));
      seq.push_back(render_reasoning(positive_reasoning(p.alarm_at)));
      users[u.user_id] = seq;
    }
  }
  return {{"default", {{"refusal", true}}}, {"users", users}};
}

struct ScenarioFixture {
  Corpus corpus;
  std::map<std::string, UserPlan> plans;
  std::vector<ExpectedOutcome> expected;
};

inline void finish(ScenarioFixture& f) {
  for (const auto& u : f.corpus.users) f.expected.push_back(expected_outcome(u, f.plans.at(u.user_id)));
}

/// 20 users (8 positive, 12 negative). Two positives are refused; of the
/// rest, 5 positives and 1 negative alarm, the others stay negative.
inline ScenarioFixture small_run_fixture(std::uint64_t seed = 7) {
  ScenarioFixture f;
  f.corpus = make_corpus({8, 12, 11, 40}, seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  for (std::size_t i = 0; i < f.corpus.users.size(); ++i) {
    const auto& u = f.corpus.users[i];
    const int n = static_cast<int>(u.posts.size());
    std::uniform_int_distribution<int> at(1, n);
    UserPlan p;
    if (i == 3 || i == 6) p.refusal = true;
    else if (i < 5 || i == 7 || i == 12) p = {Label::positive, at(rng), false};
    f.plans[u.user_id] = p;
  }
  finish(f);
  return f;
}

/// 149 users (68 positive, 81 negative) whose run yields TP=63, TN=62,
/// FP=19, FN=5, with 2 of the false negatives unprocessed refusals.
inline ScenarioFixture mixed_149_fixture(std::uint64_t seed = 11) {
  ScenarioFixture f;
  f.corpus = make_corpus({68, 81, 11, 60}, seed);
  std::mt19937_64 rng(seed ^ 0xabcdULL);
  for (std::size_t i = 0; i < f.corpus.users.size(); ++i) {
    const auto& u = f.corpus.users[i];
    std::uniform_int_distribution<int> at(1, static_cast<int>(u.posts.size()));
    UserPlan p;
    if (i < 63) p = {Label::positive, at(rng), false};  // TP
    else if (i < 66) p = {};                             // FN
    else if (i < 68) p.refusal = true;                   // FN, unprocessed
    else if (i < 68 + 19) p = {Label::positive, at(rng), false};  // FP
    f.plans[u.user_id] = p;                               // TN otherwise
  }
  finish(f);
  return f;
}

// ---------------------------------------------------------------------------
// Random reasonings

inline std::string random_note(std::mt19937_64& rng) {
  static const std::vector<std::string> words = {"menciona", "tristeza", "constante", "cansancio", "sueño", "llora",
                                                 "ánimo",    "bajo",     "trabajo",   "familia",  "solo", "días"};
  std::uniform_int_distribution<std::size_t> n(1, 8), w(0, words.size() - 1);
  std::string out;
  for (std::size_t i = 0, k = n(rng); i < k; ++i) {
    if (i) out += ' ';
    out += words[w(rng)];
  }
  return out;
}

/// Uniformly shaped valid reasoning over `n_posts` posts.
inline Reasoning random_reasoning(std::mt19937_64& rng, int n_posts) {
  Reasoning r;
  std::uniform_int_distribution<int> n_obs(0, 4), post(1, n_posts), n_cite(0, 3), n_sym(1, 3),
      sym(0, static_cast<int>(kBdiItemCount) - 1), coin(0, 1);
  const int k = n_obs(rng);
  if (k == 0) {
    r.observations.push_back({{}, {}, std::string(kNoFindingsNote)});
  }
  for (int i = 0; i < k; ++i) {
    Observation o;
    for (int c = 0, m = n_cite(rng); c < m; ++c) o.post_indices.push_back(post(rng));
    for (int s = 0, m = n_sym(rng); s < m; ++s) o.symptoms.push_back(static_cast<BdiSymptom>(sym(rng)));
    o.note = random_note(rng);
    r.observations.push_back(std::move(o));
  }
  r.conclusion = random_note(rng) + ".";
  r.prediction = coin(rng) ? Label::positive : Label::negative;
  if (r.prediction == Label::positive) r.detected_post = post(rng);
  return r;
}

/// Counts consultations per user; alarms at a fixed round (0 = never).
class CountingPolicy final : public DecisionPolicy {
 public:
  explicit CountingPolicy(std::map<std::string, int> alarm_at) : alarm_at_(std::move(alarm_at)) {
    for (const auto& [k, v] : alarm_at_) counts_[k] = 0;
  }

  Decision decide(std::string_view user_id, std::span<const Post> seen, int round) const override {
    std::lock_guard lock(mu_);
    ++counts_[std::string(user_id)];
    const int at = alarm_at_.count(std::string(user_id)) ? alarm_at_.at(std::string(user_id)) : 0;
    (void)seen;
    return {at != 0 && round >= at ? Action::alarm : Action::defer, round, std::nullopt};
  }

  Reasoning reason(std::string_view user_id, std::span<const Post> posts) const override {
    std::lock_guard lock(mu_);
    ++counts_[std::string(user_id)];
    const int at = alarm_at_.count(std::string(user_id)) ? alarm_at_.at(std::string(user_id)) : 0;
    if (at != 0 && at <= static_cast<int>(posts.size())) return positive_reasoning(at);
    return negative_reasoning();
  }

  int consultations(const std::string& user) const {
    std::lock_guard lock(mu_);
    return counts_.count(user) ? counts_.at(user) : 0;
  }

 private:
  std::map<std::string, int> alarm_at_;
  mutable std::mutex mu_;
  mutable std::map<std::string, int> counts_;
};

}  // namespace erd::testing

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

// Replays user timelines against a decision policy.
//
// Streaming mode consults the policy once per post; the first alarm is final
// and ends the user's analysis. Retrospective mode hands the policy the whole
// timeline once and takes the detection post from its reasoning. Every user
// ends with exactly one UserOutcome; failures degrade to an unprocessed
// negative instead of aborting the batch.

#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "erd/common.hpp"
#include "erd/corpus.hpp"

namespace erd {

enum class Action { alarm, defer };

struct Decision {
  Action action = Action::defer;
  int round = 1;  // posts seen when the decision was taken
  std::optional<Reasoning> reasoning;  // kept on the outcome when present
};

enum class ProcessingStatus { ok, unprocessed };

inline std::string_view to_string(ProcessingStatus s) { return s == ProcessingStatus::ok ? "ok" : "unprocessed"; }

struct UserOutcome {
  std::string user_id;
  Label predicted_label = Label::negative;
  int delay_k = 1;
  std::optional<Reasoning> reasoning;
  ProcessingStatus status = ProcessingStatus::ok;
  std::string failure;  // cause, set only for unprocessed outcomes

  bool operator==(const UserOutcome&) const = default;
};

enum class Mode { streaming, retrospective };

inline std::string_view to_string(Mode m) { return m == Mode::streaming ? "streaming" : "retrospective"; }

inline std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "streaming") return Mode::streaming;
  if (s == "retrospective") return Mode::retrospective;
  return std::nullopt;
}

/// A policy declining to evaluate a user (e.g. a provider safety refusal).
/// The user is recorded as unprocessed.
class PolicyRefusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A failure that must stop the whole batch (provider unreachable, storage
/// broken). Users already finished keep their outcomes.
class FatalPolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decision policy contract. Implementations must be safe to call
/// concurrently for different users and must not keep per-user state that
/// leaks across users.
class DecisionPolicy {
 public:
  virtual ~DecisionPolicy() = default;

  /// Streaming entry: `seen` holds posts 1..round.
  virtual Decision decide(std::string_view user_id, std::span<const Post> seen, int round) const = 0;

  /// Retrospective entry: the full timeline, once.
  virtual Reasoning reason(std::string_view user_id, std::span<const Post> posts) const = 0;
};

struct RunResult {
  std::string run_id;
  Mode mode = Mode::retrospective;
  std::vector<UserOutcome> outcomes;  // corpus order
  json config;
  std::string started_at;
  std::string finished_at;
  double wall_seconds = 0.0;
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp = std::chrono::system_clock::now(),
                                 bool compact = false) {
  std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, compact ? "%Y%m%dT%H%M%SZ" : "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Sortable run identifier: compact UTC timestamp plus a 6-hex random suffix.
inline std::string make_run_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char suffix[8];
  std::snprintf(suffix, sizeof suffix, "%06llx", static_cast<unsigned long long>(rng() & 0xFFFFFF));
  return utc_timestamp(std::chrono::system_clock::now(), true) + "-" + suffix;
}

inline UserOutcome unprocessed_outcome(const UserSample& user, std::string cause) {
  UserOutcome o;
  o.user_id = user.user_id;
  o.predicted_label = Label::negative;
  o.delay_k = static_cast<int>(user.posts.size());
  o.status = ProcessingStatus::unprocessed;
  o.failure = std::move(cause);
  return o;
}

inline UserOutcome run_user_streaming(const UserSample& user, const DecisionPolicy& policy) {
  const int n = static_cast<int>(user.posts.size());
  std::span<const Post> posts(user.posts);
  std::optional<Reasoning> last;
  for (int round = 1; round <= n; ++round) {
    Decision d;
    try {
      d = policy.decide(user.user_id, posts.first(static_cast<std::size_t>(round)), round);
    } catch (const FatalPolicyError&) {
      throw;
    } catch (const PolicyRefusal&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(Errc::policy_failure, "round " + std::to_string(round) + ": " + e.what());
    }
    if (d.action == Action::alarm) {
      UserOutcome o;
      o.user_id = user.user_id;
      o.predicted_label = Label::positive;
      o.delay_k = round;
      o.reasoning = std::move(d.reasoning);
      return o;
    }
    last = std::move(d.reasoning);
  }
  UserOutcome o;
  o.user_id = user.user_id;
  o.predicted_label = Label::negative;
  o.delay_k = n;
  o.reasoning = std::move(last);
  return o;
}

inline UserOutcome run_user_retrospective(const UserSample& user, const DecisionPolicy& policy) {
  Reasoning r;
  try {
    r = policy.reason(user.user_id, std::span<const Post>(user.posts));
  } catch (const FatalPolicyError&) {
    throw;
  } catch (const PolicyRefusal&) {
    throw;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::policy_failure, e.what());
  }
  auto violations = validate_reasoning(r, user.posts.size());
  if (!violations.empty()) {
    std::string detail = "user " + user.user_id + ":";
    for (const auto& v : violations) detail += " " + std::string(to_string(v.kind)) + (v.detail.empty() ? "" : " (" + v.detail + ")") + ";";
    throw Error(Errc::invalid_reasoning, detail);
  }
  UserOutcome o;
  o.user_id = user.user_id;
  o.predicted_label = r.prediction;
  o.delay_k = r.prediction == Label::positive ? *r.detected_post : static_cast<int>(user.posts.size());
  o.reasoning = std::move(r);
  return o;
}

/// Runs one user in the given mode, degrading ordinary failures to an
/// unprocessed negative. FatalPolicyError propagates.
inline UserOutcome evaluate_user(const UserSample& user, const DecisionPolicy& policy, Mode mode) {
  try {
    return mode == Mode::streaming ? run_user_streaming(user, policy) : run_user_retrospective(user, policy);
  } catch (const FatalPolicyError&) {
    throw;
  } catch (const PolicyRefusal& e) {
    return unprocessed_outcome(user, std::string("refusal: ") + e.what());
  } catch (const std::exception& e) {
    return unprocessed_outcome(user, e.what());
  }
}

struct BatchOptions {
  Mode mode = Mode::retrospective;
  std::size_t parallelism = 1;
  std::string run_id;  // generated when empty
  json config = json::object();
  /// Outcomes already known (resume); those users are not re-evaluated.
  std::unordered_map<std::string, UserOutcome> completed;
  /// Called once per newly evaluated user, serialized, in completion order.
  std::function<void(std::size_t index, const UserOutcome&)> on_outcome;
};

/// Evaluates every user of `corpus`. Result order is corpus order whatever
/// the completion order. A FatalPolicyError stops scheduling new users and is
/// rethrown once in-flight users finish; outcomes delivered to on_outcome
/// before that remain valid.
inline RunResult run_batch(const Corpus& corpus, const DecisionPolicy& policy, const BatchOptions& opts) {
  if (corpus.users.empty()) throw Error(Errc::empty_corpus, "run_batch on empty corpus");
  if (opts.parallelism < 1) throw Error(Errc::config_invalid, "parallelism must be >= 1");

  RunResult result;
  result.run_id = opts.run_id.empty() ? make_run_id() : opts.run_id;
  result.mode = opts.mode;
  result.config = opts.config;
  const auto t0 = std::chrono::steady_clock::now();
  result.started_at = utc_timestamp();

  const std::size_t n = corpus.users.size();
  std::vector<std::optional<UserOutcome>> slots(n);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) {
    auto it = opts.completed.find(corpus.users[i].user_id);
    if (it != opts.completed.end()) slots[i] = it->second;
    else pending.push_back(i);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex mu;  // guards slots, callback, fatal
  std::exception_ptr fatal;

  auto worker = [&] {
    while (!abort.load()) {
      std::size_t k = next.fetch_add(1);
      if (k >= pending.size()) return;
      const std::size_t i = pending[k];
      try {
        UserOutcome o = evaluate_user(corpus.users[i], policy, opts.mode);
        std::lock_guard lock(mu);
        if (opts.on_outcome) opts.on_outcome(i, o);
        slots[i] = std::move(o);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        abort.store(true);
        return;
      }
    }
  };

  const std::size_t workers = std::min(opts.parallelism, std::max<std::size_t>(pending.size(), 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  result.outcomes.reserve(n);
  for (auto& s : slots) result.outcomes.push_back(std::move(*s));
  result.finished_at = utc_timestamp();
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Keyword baseline

/// Alarms at the first round where cumulative case-insensitive keyword
/// occurrences reach `threshold`. Stateless, so safe to share.
class KeywordPolicy final : public DecisionPolicy {
 public:
  KeywordPolicy(std::vector<std::string> keywords, int threshold) : threshold_(threshold) {
    if (keywords.empty()) throw Error(Errc::config_invalid, "keyword policy needs at least one keyword");
    if (threshold < 1) throw Error(Errc::config_invalid, "keyword threshold must be >= 1");
    for (auto& k : keywords) {
      auto folded = text::fold(text::trim(k));
      if (folded.empty()) throw Error(Errc::config_invalid, "empty keyword");
      keywords_.push_back(std::move(folded));
    }
  }

  int hits(const Post& post) const {
    const std::string body = text::fold(post.text);
    int count = 0;
    for (const auto& k : keywords_) {
      for (auto pos = body.find(k); pos != std::string::npos; pos = body.find(k, pos + k.size())) ++count;
    }
    return count;
  }

  Decision decide(std::string_view, std::span<const Post> seen, int round) const override {
    int total = 0;
    for (const auto& p : seen) total += hits(p);
    return {total >= threshold_ ? Action::alarm : Action::defer, round};
  }

  Reasoning reason(std::string_view, std::span<const Post> posts) const override {
    Reasoning r;
    int total = 0;
    for (const auto& p : posts) {
      total += hits(p);
      if (total >= threshold_) {
        r.prediction = Label::positive;
        r.detected_post = p.index;
        r.conclusion = std::to_string(total) + " coincidencias de palabras clave hasta el post " + std::to_string(p.index) + ".";
        return r;
      }
    }
    r.prediction = Label::negative;
    r.observations.push_back({{}, {}, std::string(kNoFindingsNote)});
    r.conclusion = "Sin coincidencias suficientes de palabras clave.";
    return r;
  }

 private:
  std::vector<std::string> keywords_;
  int threshold_;
};

inline std::unique_ptr<DecisionPolicy> keyword_baseline_policy(std::vector<std::string> keywords, int threshold) {
  return std::make_unique<KeywordPolicy>(std::move(keywords), threshold);
}

// ---------------------------------------------------------------------------
// Persistence

inline json to_json(const UserOutcome& o) {
  json j = {{"user_id", o.user_id},
            {"predicted_label", std::string(to_string(o.predicted_label))},
            {"delay_k", o.delay_k},
            {"processing_status", std::string(to_string(o.status))},
            {"reasoning", nullptr}};
  if (o.reasoning) j["reasoning"] = to_json(*o.reasoning);
  if (o.status == ProcessingStatus::unprocessed) j["failure"] = o.failure;
  return j;
}

inline UserOutcome outcome_from_json(const json& j) {
  UserOutcome o;
  o.user_id = detail::require_string(detail::require(j, "user_id"), "user_id");
  auto label = parse_label(detail::require_string(detail::require(j, "predicted_label"), "predicted_label"));
  if (!label) detail::bad_record("bad predicted_label");
  o.predicted_label = *label;
  o.delay_k = detail::require_int(detail::require(j, "delay_k"), "delay_k");
  auto status = detail::require_string(detail::require(j, "processing_status"), "processing_status");
  if (status == "ok") o.status = ProcessingStatus::ok;
  else if (status == "unprocessed") o.status = ProcessingStatus::unprocessed;
  else detail::bad_record("bad processing_status");
  if (j.contains("reasoning") && !j.at("reasoning").is_null()) o.reasoning = reasoning_from_json(j.at("reasoning"));
  if (j.contains("failure")) o.failure = detail::require_string(j.at("failure"), "failure");
  return o;
}

/// Outcome invariants against the user's timeline length.
inline bool outcome_is_consistent(const UserOutcome& o, std::size_t n_posts) {
  const int n = static_cast<int>(n_posts);
  if (o.status == ProcessingStatus::unprocessed && o.predicted_label != Label::negative) return false;
  if (o.predicted_label == Label::positive) return o.delay_k >= 1 && o.delay_k <= n;
  return o.delay_k == n;
}

}  // namespace erd

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

// Provider-agnostic text generation client.
//
// A Provider performs one text-in/text-out call. LlmClient wraps it with a
// shared rate limiter, bounded exponential backoff with jitter on retryable
// errors, and a JSONL call log. Safety refusals come back as a ModelResponse
// with finish_reason == safety_refusal; deciding what a refusal means for a
// user is the caller's job.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "erd/common.hpp"
#include "erd/literals.hpp"
#include "erd/prompt_builder.hpp"

namespace erd {

using Duration = std::chrono::nanoseconds;

struct GenerationConfig {
  std::string model_name = "gemini-pro";
  double temperature = 0.2;
  double top_p = 0.4;
  int max_output_tokens = 2048;
  std::chrono::milliseconds request_timeout{60'000};
};

inline void check(const GenerationConfig& cfg) {
  if (cfg.temperature < 0) throw Error(Errc::config_invalid, "temperature must be >= 0");
  if (!(cfg.top_p > 0 && cfg.top_p <= 1)) throw Error(Errc::config_invalid, "top_p must be in (0, 1]");
  if (cfg.max_output_tokens < 1) throw Error(Errc::config_invalid, "max_output_tokens must be >= 1");
}

inline json to_json(const GenerationConfig& c) {
  return {{"model_name", c.model_name},
          {"temperature", c.temperature},
          {"top_p", c.top_p},
          {"max_output_tokens", c.max_output_tokens},
          {"request_timeout_ms", c.request_timeout.count()}};
}

inline GenerationConfig generation_config_from_json(const json& j) {
  GenerationConfig c;
  c.model_name = j.value("model_name", c.model_name);
  c.temperature = j.value("temperature", c.temperature);
  c.top_p = j.value("top_p", c.top_p);
  c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
  c.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", c.request_timeout.count()));
  return c;
}

enum class FinishReason { complete, length, safety_refusal, other };

inline std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::complete: return "complete";
    case FinishReason::length: return "length";
    case FinishReason::safety_refusal: return "safety_refusal";
    case FinishReason::other: return "other";
  }
  return "other";
}

struct TokenUsage {
  std::size_t prompt_tokens = 0;
  std::size_t output_tokens = 0;
};

struct ModelResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::complete;
  std::optional<TokenUsage> usage;
  Duration latency{0};
  int retries = 0;  // filled in by LlmClient
};

enum class ClientErrorKind { transport, rate_limited, auth, provider_rejection, timeout };

inline std::string_view to_string(ClientErrorKind k) {
  switch (k) {
    case ClientErrorKind::transport: return "transport";
    case ClientErrorKind::rate_limited: return "rate_limited";
    case ClientErrorKind::auth: return "auth";
    case ClientErrorKind::provider_rejection: return "provider_rejection";
    case ClientErrorKind::timeout: return "timeout";
  }
  return "transport";
}

inline bool is_retryable(ClientErrorKind k) {
  return k == ClientErrorKind::transport || k == ClientErrorKind::rate_limited || k == ClientErrorKind::timeout;
}

struct ClientError {
  ClientErrorKind kind = ClientErrorKind::transport;
  bool retryable = true;
  std::string detail;
  int attempts = 1;

  static ClientError make(ClientErrorKind kind, std::string detail) {
    return ClientError{kind, is_retryable(kind), std::move(detail), 1};
  }
  std::string message() const { return std::string(to_string(kind)) + ": " + detail; }
};

using CompletionResult = Expected<ModelResponse, ClientError>;

// ---------------------------------------------------------------------------
// Clocks

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Duration now() const = 0;
  virtual void sleep_for(Duration d) = 0;
};

class SystemClock final : public Clock {
 public:
  Duration now() const override {
    return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now().time_since_epoch());
  }
  void sleep_for(Duration d) override {
    if (d > Duration::zero()) std::this_thread::sleep_for(d);
  }
};

/// Test clock: sleeping advances time instantly. Sleeps from concurrent
/// callers advance the same timeline to the latest wake-up point.
class SimulatedClock final : public Clock {
 public:
  Duration now() const override { return Duration(now_.load()); }
  void sleep_for(Duration d) override {
    if (d <= Duration::zero()) return;
    slept_.fetch_add(d.count());
    auto target = now_.load() + d.count();
    auto cur = now_.load();
    while (cur < target && !now_.compare_exchange_weak(cur, target)) {
    }
  }
  void advance(Duration d) { now_.fetch_add(d.count()); }
  Duration total_slept() const { return Duration(slept_.load()); }

 private:
  std::atomic<Duration::rep> now_{0};
  std::atomic<Duration::rep> slept_{0};
};

/// Generic cell rate limiter: at most `burst` immediate requests, then one
/// every 1/rate seconds. The only shared mutable state in the client.
class RateLimiter {
 public:
  RateLimiter(std::shared_ptr<Clock> clock, double requests_per_second, std::size_t burst = 0)
      : clock_(std::move(clock)) {
    if (!(requests_per_second > 0)) throw Error(Errc::config_invalid, "rate limit must be > 0");
    interval_ = std::chrono::duration_cast<Duration>(std::chrono::duration<double>(1.0 / requests_per_second));
    if (burst == 0) burst = static_cast<std::size_t>(std::max(1.0, std::floor(requests_per_second)));
    tolerance_ = interval_ * static_cast<Duration::rep>(burst - 1);
  }

  /// Blocks (on the clock) until a request may start; returns the wait.
  Duration acquire() {
    Duration wait{0};
    {
      std::lock_guard lock(mu_);
      const Duration now = clock_->now();
      if (!initialised_) {
        tat_ = now;
        initialised_ = true;
      }
      const Duration earliest = tat_ - tolerance_;
      if (earliest > now) wait = earliest - now;
      tat_ = std::max(tat_, now) + interval_;
    }
    clock_->sleep_for(wait);
    return wait;
  }

 private:
  std::shared_ptr<Clock> clock_;
  Duration interval_{};
  Duration tolerance_{};
  std::mutex mu_;
  Duration tat_{0};
  bool initialised_ = false;
};

struct RetryPolicy {
  int max_retries = 3;
  Duration base_delay = std::chrono::milliseconds(500);
  double multiplier = 2.0;
  Duration max_delay = std::chrono::seconds(30);
  double jitter = 0.25;  // fraction of the nominal delay, in [0, multiplier - 1]
  std::uint64_t seed = 0;
};

/// Backoff before retry `n` (0-based): base * multiplier^n * (1 + jitter*u),
/// capped. Non-decreasing in n because jitter <= multiplier - 1.
inline Duration backoff_delay(const RetryPolicy& p, int n, double u) {
  const double nominal = static_cast<double>(p.base_delay.count()) * std::pow(p.multiplier, n);
  const double jittered = nominal * (1.0 + p.jitter * u);
  const double capped = std::min(jittered, static_cast<double>(p.max_delay.count()));
  return Duration(static_cast<Duration::rep>(capped));
}

// ---------------------------------------------------------------------------
// Providers

class Provider {
 public:
  virtual ~Provider() = default;
  /// One attempt. Must be safe to call concurrently.
  virtual CompletionResult generate(std::string_view prompt, const GenerationConfig& cfg) = 0;
  virtual std::string name() const = 0;
};

/// Reads the user key written after the user marker in the input section.
inline std::string extract_user_key(std::string_view prompt, const Literals& lit = spanish_literals()) {
  const std::string marker = lit.user_marker + " ";
  std::size_t pos = std::string_view::npos;
  for (std::size_t at = prompt.find(marker); at != std::string_view::npos; at = prompt.find(marker, at + 1)) {
    if (at == 0 || prompt[at - 1] == '\n') pos = at;
  }
  if (pos == std::string_view::npos) return {};
  auto end = prompt.find('\n', pos);
  return std::string(text::trim(prompt.substr(pos + marker.size(), end == std::string_view::npos ? end : end - pos - marker.size())));
}

struct ScriptEntry {
  enum class Kind { text, refusal, error } kind = Kind::text;
  std::string text;
  ClientErrorKind error = ClientErrorKind::transport;

  static ScriptEntry reply(std::string t) { return {Kind::text, std::move(t), ClientErrorKind::transport}; }
  static ScriptEntry refuse() { return {Kind::refusal, {}, ClientErrorKind::transport}; }
  static ScriptEntry fail(ClientErrorKind k) { return {Kind::error, {}, k}; }
};

/// Deterministic provider keyed by the user marker in the prompt. Each key
/// holds a sequence consumed one entry per call; the last entry repeats.
class ScriptedMockProvider final : public Provider {
 public:
  using Script = std::unordered_map<std::string, std::vector<ScriptEntry>>;

  ScriptedMockProvider(Script script, ScriptEntry fallback = ScriptEntry::refuse(),
                       const Literals& lit = spanish_literals())
      : script_(std::move(script)), fallback_(std::move(fallback)), literals_(lit) {
    if (script_.empty()) throw Error(Errc::config_invalid, "mock script is empty");
    for (const auto& [k, v] : script_)
      if (v.empty()) throw Error(Errc::config_invalid, "mock script entry '" + k + "' has no responses");
  }

  CompletionResult generate(std::string_view prompt, const GenerationConfig&) override {
    const std::string key = extract_user_key(prompt, literals_);
    ScriptEntry entry = fallback_;
    {
      std::lock_guard lock(mu_);
      ++calls_[key];
      if (auto it = script_.find(key); it != script_.end()) {
        std::size_t& cursor = cursors_[key];
        entry = it->second[std::min(cursor, it->second.size() - 1)];
        ++cursor;
      }
    }
    switch (entry.kind) {
      case ScriptEntry::Kind::text: {
        ModelResponse r;
        r.text = entry.text;
        r.finish_reason = FinishReason::complete;
        r.usage = TokenUsage{estimate_tokens(prompt), estimate_tokens(entry.text)};
        return r;
      }
      case ScriptEntry::Kind::refusal: {
        ModelResponse r;
        r.finish_reason = FinishReason::safety_refusal;
        return r;
      }
      case ScriptEntry::Kind::error:
        return ClientError::make(entry.error, "scripted failure for '" + key + "'");
    }
    return ClientError::make(ClientErrorKind::transport, "unreachable");
  }

  std::string name() const override { return "mock"; }

  std::size_t calls(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(key);
    return it == calls_.end() ? 0 : it->second;
  }

 private:
  Script script_;
  ScriptEntry fallback_;
  Literals literals_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::size_t> cursors_;
  std::unordered_map<std::string, std::size_t> calls_;
};

inline ScriptEntry script_entry_from_json(const json& j) {
  if (j.is_string()) return ScriptEntry::reply(j.get<std::string>());
  if (j.value("refusal", false)) return ScriptEntry::refuse();
  if (j.contains("error")) {
    const auto k = j.at("error").get<std::string>();
    for (auto kind : {ClientErrorKind::transport, ClientErrorKind::rate_limited, ClientErrorKind::auth,
                      ClientErrorKind::provider_rejection, ClientErrorKind::timeout})
      if (to_string(kind) == k) return ScriptEntry::fail(kind);
    throw Error(Errc::config_invalid, "unknown scripted error '" + k + "'");
  }
  return ScriptEntry::reply(j.at("text").get<std::string>());
}

/// Mock script file: {"default": <entry>, "users": {"<id>": <entry> | [<entry>...]}}
/// where <entry> is a string, {"text": ...}, {"refusal": true} or {"error": "<kind>"}.
inline std::unique_ptr<ScriptedMockProvider> scripted_mock_from_json(const json& j,
                                                                    const Literals& lit = spanish_literals()) {
  try {
    ScriptedMockProvider::Script script;
    for (const auto& [user, value] : j.at("users").items()) {
      auto& seq = script[user];
      if (value.is_array()) {
        for (const auto& e : value) seq.push_back(script_entry_from_json(e));
      } else {
        seq.push_back(script_entry_from_json(value));
      }
    }
    ScriptEntry fallback = j.contains("default") ? script_entry_from_json(j.at("default")) : ScriptEntry::refuse();
    return std::make_unique<ScriptedMockProvider>(std::move(script), std::move(fallback), lit);
  } catch (const json::exception& e) {
    throw Error(Errc::config_invalid, std::string("mock script: ") + e.what());
  }
}

inline std::unique_ptr<ScriptedMockProvider> load_scripted_mock(const std::filesystem::path& path,
                                                               const Literals& lit = spanish_literals()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::config_invalid, path.string() + ": " + e.what());
  }
  return scripted_mock_from_json(j, lit);
}

/// Adapter for the Gemini generateContent REST endpoint.
class GeminiProvider final : public Provider {
 public:
  struct Options {
    std::string base_url = "https://generativelanguage.googleapis.com";
    std::string api_key_env = "LLM_API_KEY";
  };

  explicit GeminiProvider(Options opts) : opts_(std::move(opts)) {
    if (const char* key = std::getenv(opts_.api_key_env.c_str())) api_key_ = key;
  }

  CompletionResult generate(std::string_view prompt, const GenerationConfig& cfg) override {
    if (api_key_.empty()) return ClientError::make(ClientErrorKind::auth, "environment variable " + opts_.api_key_env + " not set");
    httplib::Client cli(opts_.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.request_timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.request_timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());

    json body = {{"contents", json::array({{{"role", "user"}, {"parts", json::array({{{"text", std::string(prompt)}}})}}})},
                 {"generationConfig",
                  {{"temperature", cfg.temperature}, {"topP", cfg.top_p}, {"maxOutputTokens", cfg.max_output_tokens}}}};
    httplib::Headers headers{{"x-goog-api-key", api_key_}};
    const std::string path = "/v1beta/models/" + cfg.model_name + ":generateContent";
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                             err == httplib::Error::Write;
      return ClientError::make(timed_out ? ClientErrorKind::timeout : ClientErrorKind::transport,
                               httplib::to_string(err));
    }
    return map_response(res->status, res->body);
  }

  std::string name() const override { return "gemini"; }

  /// Maps an HTTP status and body to a response or classified error.
  static CompletionResult map_response(int status, const std::string& body) {
    if (status == 429) return ClientError::make(ClientErrorKind::rate_limited, "HTTP 429");
    if (status == 401 || status == 403) return ClientError::make(ClientErrorKind::auth, "HTTP " + std::to_string(status));
    if (status >= 500) return ClientError::make(ClientErrorKind::transport, "HTTP " + std::to_string(status));
    if (status != 200) {
      return ClientError::make(ClientErrorKind::provider_rejection,
                               "HTTP " + std::to_string(status) + ": " + body.substr(0, 200));
    }
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      return ClientError::make(ClientErrorKind::provider_rejection, "unparseable response body");
    ModelResponse r;
    if (j.contains("usageMetadata") && j["usageMetadata"].is_object()) {
      const auto& u = j["usageMetadata"];
      r.usage = TokenUsage{u.value("promptTokenCount", std::size_t{0}), u.value("candidatesTokenCount", std::size_t{0})};
    }
    if (j.contains("promptFeedback") && j["promptFeedback"].is_object() && j["promptFeedback"].contains("blockReason")) {
      r.finish_reason = FinishReason::safety_refusal;
      return r;
    }
    if (!j.contains("candidates") || !j["candidates"].is_array() || j["candidates"].empty()) {
      r.finish_reason = FinishReason::other;
      return r;
    }
    const auto& cand = j["candidates"][0];
    const std::string reason = cand.is_object() ? cand.value("finishReason", std::string("STOP")) : "OTHER";
    if (reason == "STOP") r.finish_reason = FinishReason::complete;
    else if (reason == "MAX_TOKENS") r.finish_reason = FinishReason::length;
    else if (reason == "SAFETY" || reason == "RECITATION" || reason == "PROHIBITED_CONTENT" || reason == "BLOCKLIST" ||
             reason == "SPII")
      r.finish_reason = FinishReason::safety_refusal;
    else r.finish_reason = FinishReason::other;
    if (cand.is_object() && cand.contains("content") && cand["content"].is_object() &&
        cand["content"].contains("parts") && cand["content"]["parts"].is_array()) {
      for (const auto& part : cand["content"]["parts"])
        if (part.is_object() && part.contains("text") && part["text"].is_string()) r.text += part["text"].get<std::string>();
    }
    return r;
  }

 private:
  Options opts_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------
// Client

struct ClientOptions {
  RetryPolicy retry;
  std::optional<double> requests_per_second;  // unset: no rate limit
  std::shared_ptr<Clock> clock;               // unset: SystemClock
  std::optional<std::filesystem::path> log_path;
};

class LlmClient {
 public:
  LlmClient(std::shared_ptr<Provider> provider, ClientOptions opts = {})
      : provider_(std::move(provider)), opts_(std::move(opts)), rng_(opts_.retry.seed) {
    if (!provider_) throw Error(Errc::config_invalid, "null provider");
    if (opts_.retry.max_retries < 0) throw Error(Errc::config_invalid, "max_retries must be >= 0");
    if (opts_.retry.jitter < 0 || opts_.retry.jitter > opts_.retry.multiplier - 1.0)
      throw Error(Errc::config_invalid, "jitter must lie in [0, multiplier - 1]");
    if (!opts_.clock) opts_.clock = std::make_shared<SystemClock>();
    if (opts_.requests_per_second) limiter_.emplace(opts_.clock, *opts_.requests_per_second);
    if (opts_.log_path) {
      log_.open(*opts_.log_path, std::ios::binary | std::ios::app);
      if (!log_) throw Error(Errc::storage, "cannot open call log " + opts_.log_path->string());
    }
  }

  CompletionResult complete(std::string_view prompt, const GenerationConfig& cfg) {
    check(cfg);
    const Duration t0 = opts_.clock->now();
    int attempt = 0;
    while (true) {
      if (limiter_) limiter_->acquire();
      ++attempts_;
      CompletionResult r = provider_->generate(prompt, cfg);
      if (r) {
        r->retries = attempt;
        r->latency = opts_.clock->now() - t0;
        log_call(prompt, cfg, &*r, nullptr, attempt + 1);
        return r;
      }
      ClientError err = r.error();
      err.attempts = attempt + 1;
      if (!err.retryable || attempt >= opts_.retry.max_retries) {
        log_call(prompt, cfg, nullptr, &err, attempt + 1);
        return err;
      }
      Duration delay = backoff_delay(opts_.retry, attempt, next_uniform());
      record_backoff(delay);
      opts_.clock->sleep_for(delay);
      ++attempt;
    }
  }

  CompletionResult complete(const Prompt& prompt, const GenerationConfig& cfg) { return complete(prompt.text, cfg); }

  const Provider& provider() const { return *provider_; }
  std::size_t total_attempts() const { return attempts_.load(); }
  std::vector<Duration> backoff_history() const {
    std::lock_guard lock(mu_);
    return backoffs_;
  }

 private:
  double next_uniform() {
    std::lock_guard lock(mu_);
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  }

  void record_backoff(Duration d) {
    std::lock_guard lock(mu_);
    backoffs_.push_back(d);
  }

  void log_call(std::string_view prompt, const GenerationConfig& cfg, const ModelResponse* r, const ClientError* e,
                int attempts) {
    if (!log_.is_open()) return;
    json j = {{"ts", utc_now()},
              {"provider", provider_->name()},
              {"prompt_sha256", sha256_hex(prompt)},
              {"config", to_json(cfg)},
              {"attempts", attempts}};
    if (r) {
      j["finish_reason"] = std::string(to_string(r->finish_reason));
      j["latency_ms"] = std::chrono::duration<double, std::milli>(r->latency).count();
    }
    if (e) j["error"] = e->message();
    std::lock_guard lock(mu_);
    log_ << j.dump() << '\n';
    log_.flush();
  }

  static std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::shared_ptr<Provider> provider_;
  ClientOptions opts_;
  std::optional<RateLimiter> limiter_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::vector<Duration> backoffs_;
  std::ofstream log_;
  std::atomic<std::size_t> attempts_{0};
};

}  // namespace erd

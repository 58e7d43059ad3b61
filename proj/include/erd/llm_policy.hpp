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

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "erd/llm_client.hpp"
#include "erd/prompt_builder.hpp"
#include "erd/response_parser.hpp"
#include "erd/stream_engine.hpp"

namespace erd {

/// Per-evaluation record for the telemetry log. Not part of outcomes, since
/// latency is provider dependent.
struct EvaluationTelemetry {
  std::string user_id;
  int round = 0;  // posts given to the model
  int attempts = 0;
  int client_retries = 0;
  std::vector<std::string> parse_errors;
  std::vector<std::string> warnings;
  std::string result;  // "ok", "refusal", "exhausted", "client_error"
  double latency_ms = 0;
};

inline json to_json(const EvaluationTelemetry& t) {
  return {{"user_id", t.user_id},     {"round", t.round},   {"attempts", t.attempts},
          {"client_retries", t.client_retries}, {"parse_errors", t.parse_errors},
          {"warnings", t.warnings},   {"result", t.result}, {"latency_ms", t.latency_ms}};
}

/// Decision policy backed by a language model: one prompt per evaluation,
/// parsed under the canonical grammar. Malformed output is re-asked with a
/// corrective note appended, up to `max_attempts` calls in total; refusals
/// and exhausted attempts surface as PolicyRefusal / failures (the engine
/// records the user as unprocessed). An unreachable provider is fatal.
class LlmPolicy final : public DecisionPolicy {
 public:
  using TelemetrySink = std::function<void(const EvaluationTelemetry&)>;

  LlmPolicy(PromptSpec spec, std::shared_ptr<LlmClient> client, GenerationConfig cfg, int max_attempts = 3,
            TelemetrySink sink = {})
      : spec_(std::move(spec)), client_(std::move(client)), cfg_(std::move(cfg)), max_attempts_(max_attempts),
        sink_(std::move(sink)) {
    check(spec_);
    check(cfg_);
    if (!client_) throw Error(Errc::config_invalid, "null client");
    if (max_attempts_ < 1) throw Error(Errc::config_invalid, "max_attempts must be >= 1");
  }

  Decision decide(std::string_view user_id, std::span<const Post> seen, int round) const override {
    Reasoning r = evaluate(user_id, seen);
    const Action action = r.prediction == Label::positive ? Action::alarm : Action::defer;
    return {action, round, std::move(r)};
  }

  Reasoning reason(std::string_view user_id, std::span<const Post> posts) const override {
    return evaluate(user_id, posts);
  }

  Reasoning evaluate(std::string_view user_id, std::span<const Post> posts) const {
    const auto t0 = std::chrono::steady_clock::now();
    EvaluationTelemetry tel;
    tel.user_id = std::string(user_id);
    tel.round = static_cast<int>(posts.size());
    auto finish = [&](std::string result) {
      tel.result = std::move(result);
      tel.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (sink_) sink_(tel);
    };

    const Prompt prompt = build_prompt(spec_, posts, user_id);
    std::string request = prompt.text;
    for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
      tel.attempts = attempt;
      CompletionResult res = client_->complete(request, cfg_);
      if (!res) {
        const ClientError& e = res.error();
        tel.client_retries += e.attempts - 1;
        finish("client_error");
        if (e.kind == ClientErrorKind::provider_rejection) throw std::runtime_error("provider rejection: " + e.detail);
        throw FatalPolicyError("provider unreachable: " + e.message());
      }
      tel.client_retries += res->retries;
      if (res->finish_reason == FinishReason::safety_refusal) {
        finish("refusal");
        throw PolicyRefusal("provider refused user '" + std::string(user_id) + "'");
      }
      auto parsed = parse_response(res->text, posts.size(), spec_.literals);
      if (parsed) {
        for (const auto& w : parsed->warnings) tel.warnings.push_back(w.message());
        finish("ok");
        return std::move(parsed).value().reasoning;
      }
      tel.parse_errors.push_back(parsed.error().message());
      request = prompt.text + "\n" + repair_prompt(parsed.error(), spec_.literals) + "\n";
    }
    finish("exhausted");
    throw std::runtime_error("verification failed after " + std::to_string(max_attempts_) + " attempts: " +
                             (tel.parse_errors.empty() ? std::string() : tel.parse_errors.back()));
  }

  const PromptSpec& spec() const { return spec_; }

 private:
  PromptSpec spec_;
  std::shared_ptr<LlmClient> client_;
  GenerationConfig cfg_;
  int max_attempts_;
  TelemetrySink sink_;
};

}  // namespace erd

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

// Five-section prompt assembly (role, task, examples, considerations, input)
// under a hard token budget.
//
// Budget allocation: the fixed sections and the user's posts are rendered
// first and must fit on their own; whatever is left goes to examples, chosen
// greedily in relevance order. User posts are never truncated.

#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "erd/bdi.hpp"
#include "erd/corpus.hpp"
#include "erd/literals.hpp"
#include "erd/response_parser.hpp"

namespace erd {

inline constexpr std::size_t kDefaultTokenBudget = 32'000;

/// Token estimator; must be deterministic.
using TokenCounter = std::function<std::size_t(std::string_view)>;

/// Default estimator: ceil(bytes / 3) over UTF-8, an overestimate for
/// Spanish text with common subword tokenizers.
inline std::size_t estimate_tokens(std::string_view text) { return (text.size() + 2) / 3; }

struct PromptSpec {
  std::string role_text = spanish_literals().default_role;
  std::vector<std::string> task_steps = spanish_literals().task_steps;
  std::vector<ReasonedSample> examples;  // candidate pool, relevance_rank ascending
  std::vector<std::string> considerations = spanish_literals().default_considerations;
  std::size_t token_budget = kDefaultTokenBudget;
  std::string language = "es";
  Literals literals = spanish_literals();
  TokenCounter counter;  // empty: estimate_tokens
};

enum class PromptSection { role = 0, task = 1, examples = 2, considerations = 3, input = 4 };
inline constexpr std::size_t kSectionCount = 5;

struct SectionSpan {
  std::size_t begin = 0;  // byte offsets into Prompt::text, header included
  std::size_t end = 0;
};

struct ExampleSelection {
  std::vector<ReasonedSample> selected;
  bool missing_positive = false;  // pool had a positive example but none fit
  bool missing_negative = false;
  bool empty() const { return selected.empty(); }
};

struct Prompt {
  std::string text;
  std::array<SectionSpan, kSectionCount> sections{};
  std::size_t estimated_tokens = 0;
  ExampleSelection examples;

  std::string_view section(PromptSection s) const {
    const auto& span = sections[static_cast<std::size_t>(s)];
    return std::string_view(text).substr(span.begin, span.end - span.begin);
  }
};

/// The seven canonical task steps, i through vii.
inline std::vector<std::string> default_task_steps(const Literals& lit = spanish_literals()) { return lit.task_steps; }

namespace detail {

inline std::size_t count_tokens(const PromptSpec& spec, std::string_view text) {
  return spec.counter ? spec.counter(text) : estimate_tokens(text);
}

inline std::string flatten(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c == '\n' || c == '\r') c = ' ';
  return out;
}

inline std::string render_posts(std::span<const Post> posts, const Literals& lit) {
  std::string out;
  for (const auto& p : posts) out += lit.post_label + " " + std::to_string(p.index) + ": " + flatten(p.text) + "\n";
  return out;
}

inline std::string section_header(const Literals& lit, const std::string& title) {
  return lit.section_prefix + title + "\n";
}

}  // namespace detail

/// One example block as it appears under the examples section.
inline std::string render_example(const ReasonedSample& s, std::size_t ordinal, const Literals& lit = spanish_literals()) {
  std::string out = lit.example_title + " " + std::to_string(ordinal) + ":\n";
  out += lit.example_posts + "\n";
  out += detail::render_posts(s.user.posts, lit);
  out += lit.example_reasoning + "\n";
  out += render_reasoning(s.reasoning, lit);
  out += "\n";
  return out;
}

inline std::string render_format_instructions(const Literals& lit) {
  std::string out = lit.format_title + "\n";
  out += lit.observations_header + ":\n";
  out += lit.observation_placeholder + "\n";
  out += lit.conclusion_header + ": " + lit.conclusion_placeholder + "\n";
  out += lit.prediction_header + ": " + lit.positive_token + " | " + lit.negative_token + "\n";
  out += lit.detected_header + ": " + lit.detected_placeholder + "\n";
  return out;
}

inline std::string render_bdi_list(const Literals& lit) {
  std::string out = lit.bdi_title + "\n";
  for (std::size_t i = 0; i < kBdiItems.size(); ++i)
    out += std::to_string(i + 1) + ". " + std::string(kBdiItems[i].spanish) + "\n";
  return out;
}

/// Greedy selection in relevance order: a candidate is taken iff its
/// rendered block fits the remaining budget. Deterministic.
inline ExampleSelection select_examples(std::span<const ReasonedSample> candidates, std::size_t budget,
                                        const Literals& lit = spanish_literals(), const TokenCounter& counter = {}) {
  std::vector<const ReasonedSample*> order;
  order.reserve(candidates.size());
  for (const auto& c : candidates) order.push_back(&c);
  std::stable_sort(order.begin(), order.end(),
                   [](const ReasonedSample* a, const ReasonedSample* b) { return a->relevance_rank < b->relevance_rank; });

  ExampleSelection sel;
  std::size_t remaining = budget;
  bool pool_pos = false, pool_neg = false, got_pos = false, got_neg = false;
  for (const ReasonedSample* c : order) {
    (c->reasoning.prediction == Label::positive ? pool_pos : pool_neg) = true;
    const std::string block = render_example(*c, sel.selected.size() + 1, lit);
    const std::size_t cost = counter ? counter(block) : estimate_tokens(block);
    if (cost > remaining) continue;
    remaining -= cost;
    (c->reasoning.prediction == Label::positive ? got_pos : got_neg) = true;
    sel.selected.push_back(*c);
  }
  sel.missing_positive = pool_pos && !got_pos;
  sel.missing_negative = pool_neg && !got_neg;
  return sel;
}

inline void check(const PromptSpec& spec) {
  if (spec.task_steps.size() != 7) throw Error(Errc::config_invalid, "task_steps must have exactly 7 entries");
  if (spec.token_budget < 1) throw Error(Errc::config_invalid, "token_budget must be >= 1");
  if (spec.literals.step_numerals.size() != 7) throw Error(Errc::config_invalid, "literals need 7 step numerals");
}

namespace detail {

inline Prompt assemble(const PromptSpec& spec, std::string_view user_key, std::span<const Post> posts,
                       std::span<const ReasonedSample> examples) {
  const Literals& lit = spec.literals;
  Prompt p;
  auto open = [&](PromptSection s, const std::string& title) {
    p.sections[static_cast<std::size_t>(s)].begin = p.text.size();
    p.text += section_header(lit, title);
  };
  auto close = [&](PromptSection s) {
    p.text += "\n";
    p.sections[static_cast<std::size_t>(s)].end = p.text.size();
  };

  open(PromptSection::role, lit.role_title);
  p.text += spec.role_text + "\n";
  close(PromptSection::role);

  open(PromptSection::task, lit.task_title);
  p.text += lit.task_intro + "\n";
  for (std::size_t i = 0; i < spec.task_steps.size(); ++i)
    p.text += lit.step_numerals[i] + ". " + spec.task_steps[i] + "\n";
  close(PromptSection::task);

  open(PromptSection::examples, lit.examples_title);
  if (examples.empty()) p.text += lit.no_examples + "\n";
  for (std::size_t i = 0; i < examples.size(); ++i) p.text += render_example(examples[i], i + 1, lit);
  close(PromptSection::examples);

  open(PromptSection::considerations, lit.considerations_title);
  for (const auto& c : spec.considerations) p.text += "- " + c + "\n";
  p.text += render_bdi_list(lit);
  p.text += render_format_instructions(lit);
  close(PromptSection::considerations);

  open(PromptSection::input, lit.input_title);
  p.text += lit.user_marker + " " + std::string(user_key) + "\n";
  p.text += render_posts(posts, lit);
  p.sections[static_cast<std::size_t>(PromptSection::input)].end = p.text.size();

  p.estimated_tokens = count_tokens(spec, p.text);
  return p;
}

}  // namespace detail

/// Builds the prompt for one user. `user_key` is written under the input
/// section so scripted providers can recognise the user.
inline Prompt build_prompt(const PromptSpec& spec, std::span<const Post> user_posts, std::string_view user_key = "") {
  check(spec);
  if (user_posts.empty()) throw Error(Errc::config_invalid, "user has no posts");

  Prompt bare = detail::assemble(spec, user_key, user_posts, {});
  if (bare.estimated_tokens > spec.token_budget) {
    throw Error(Errc::budget_exceeded, "estimated " + std::to_string(bare.estimated_tokens) + " tokens with no examples, budget " +
                                           std::to_string(spec.token_budget));
  }
  // Fixed cost excludes the empty-examples marker that examples replace.
  const std::size_t marker_bytes = spec.literals.no_examples.size() + 1;
  std::string fixed = bare.text;
  fixed.erase(bare.sections[static_cast<std::size_t>(PromptSection::examples)].begin +
                  detail::section_header(spec.literals, spec.literals.examples_title).size(),
              marker_bytes);
  const std::size_t fixed_cost = detail::count_tokens(spec, fixed);
  const std::size_t example_budget = spec.token_budget > fixed_cost ? spec.token_budget - fixed_cost : 0;

  ExampleSelection sel = select_examples(spec.examples, example_budget, spec.literals, spec.counter);
  Prompt p = detail::assemble(spec, user_key, user_posts, sel.selected);
  // Only a non-subadditive custom counter can overshoot here.
  while (p.estimated_tokens > spec.token_budget && !sel.selected.empty()) {
    sel.selected.pop_back();
    p = detail::assemble(spec, user_key, user_posts, sel.selected);
  }
  p.examples = std::move(sel);
  return p;
}

inline Prompt build_prompt(const PromptSpec& spec, const UserSample& user) {
  return build_prompt(spec, std::span<const Post>(user.posts), user.user_id);
}

// ---------------------------------------------------------------------------
// Config file

inline json to_json(const PromptSpec& spec) {
  return {{"role_text", spec.role_text},
          {"task_steps", spec.task_steps},
          {"considerations", spec.considerations},
          {"token_budget", spec.token_budget},
          {"language", spec.language}};
}

/// Reads a prompt spec JSON file. Optional keys: role_text, task_steps,
/// considerations, token_budget, language, literals (path), and
/// reasoned_samples + examples_corpus (paths) for the example pool. Relative
/// paths resolve against the directory of the JSON file.
inline PromptSpec load_prompt_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::config_invalid, path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  PromptSpec spec;
  try {
    if (j.contains("literals")) {
      spec.literals = load_literals(resolve(j.at("literals").get<std::string>()));
      spec.role_text = spec.literals.default_role;
      spec.task_steps = spec.literals.task_steps;
      spec.considerations = spec.literals.default_considerations;
    }
    if (j.contains("role_text")) spec.role_text = j.at("role_text").get<std::string>();
    if (j.contains("task_steps")) spec.task_steps = j.at("task_steps").get<std::vector<std::string>>();
    if (j.contains("considerations")) spec.considerations = j.at("considerations").get<std::vector<std::string>>();
    if (j.contains("token_budget")) spec.token_budget = j.at("token_budget").get<std::size_t>();
    spec.language = j.value("language", spec.literals.language);
    if (j.contains("reasoned_samples")) {
      if (!j.contains("examples_corpus"))
        throw Error(Errc::config_invalid, "reasoned_samples requires examples_corpus");
      Corpus pool = load_corpus(resolve(j.at("examples_corpus").get<std::string>()), "train");
      spec.examples = load_reasoned_samples(resolve(j.at("reasoned_samples").get<std::string>()), pool);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::config_invalid, path.string() + ": " + e.what());
  }
  for (const auto& ex : spec.examples) {
    auto v = validate_reasoned_sample(ex);
    if (!v.empty())
      throw Error(Errc::config_invalid, "example for '" + ex.user.user_id + "': " + std::string(to_string(v.front().kind)));
  }
  std::stable_sort(spec.examples.begin(), spec.examples.end(),
                   [](const ReasonedSample& a, const ReasonedSample& b) { return a.relevance_rank < b.relevance_rank; });
  check(spec);
  return spec;
}

}  // namespace erd

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

// End-to-end evaluation runs with crash-resumable, append-only storage.
//
// Layout under the output directory:
//
//   runs/<run_id>/manifest.json     config snapshot, corpus fingerprint, status, report
//   runs/<run_id>/journal.jsonl     outcomes appended in completion order
//   runs/<run_id>/outcomes.jsonl    final outcomes in corpus order (complete runs)
//   runs/<run_id>/report.json       metrics report (complete runs)
//   runs/<run_id>/telemetry.jsonl   per-evaluation attempts and latency
//   runs/<run_id>/calls.jsonl       provider call log
//   runs/<run_id>/annotations.jsonl specialist annotations (append-only)
//   reasoned_samples.jsonl          specialist-authored training reasonings
//
// A journal line is durable once its trailing newline is on disk; a torn last
// line is discarded on read and truncated away on resume.

#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "erd/corpus.hpp"
#include "erd/llm_client.hpp"
#include "erd/llm_policy.hpp"
#include "erd/metrics.hpp"
#include "erd/prompt_builder.hpp"
#include "erd/stream_engine.hpp"

namespace erd {

namespace fs = std::filesystem;

struct RunConfig {
  fs::path corpus_path;
  std::string split = "test";
  Mode mode = Mode::retrospective;
  std::optional<fs::path> prompt_spec_path;  // unset: built-in Spanish spec, no examples
  std::string provider = "mock";             // mock | gemini | keyword
  std::optional<fs::path> mock_script_path;
  std::string provider_url = "https://generativelanguage.googleapis.com";
  std::string api_key_env = "LLM_API_KEY";
  std::vector<std::string> keywords;  // keyword provider
  int keyword_threshold = 1;
  GenerationConfig generation;
  std::size_t parallelism = 1;
  int max_attempts = 3;   // verification loop: 1 initial + repairs
  int client_retries = 3; // transport-level retries per call
  std::optional<double> requests_per_second;
  MetricsConfig metrics;
  fs::path out_dir = "runs";
  std::uint64_t seed = 0;
};

inline json to_json(const RunConfig& c) {
  json j = {{"corpus_path", c.corpus_path.string()},
            {"split", c.split},
            {"mode", std::string(to_string(c.mode))},
            {"prompt_spec_path", c.prompt_spec_path ? json(c.prompt_spec_path->string()) : json(nullptr)},
            {"provider", c.provider},
            {"mock_script_path", c.mock_script_path ? json(c.mock_script_path->string()) : json(nullptr)},
            {"provider_url", c.provider_url},
            {"api_key_env", c.api_key_env},
            {"keywords", c.keywords},
            {"keyword_threshold", c.keyword_threshold},
            {"generation", to_json(c.generation)},
            {"parallelism", c.parallelism},
            {"max_attempts", c.max_attempts},
            {"client_retries", c.client_retries},
            {"requests_per_second", c.requests_per_second ? json(*c.requests_per_second) : json(nullptr)},
            {"metrics", to_json(c.metrics)},
            {"out_dir", c.out_dir.string()},
            {"seed", c.seed}};
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.corpus_path = j.at("corpus_path").get<std::string>();
  c.split = j.value("split", c.split);
  auto mode = parse_mode(j.value("mode", std::string("retrospective")));
  if (!mode) throw Error(Errc::config_invalid, "bad mode");
  c.mode = *mode;
  if (j.contains("prompt_spec_path") && !j["prompt_spec_path"].is_null())
    c.prompt_spec_path = j["prompt_spec_path"].get<std::string>();
  c.provider = j.value("provider", c.provider);
  if (j.contains("mock_script_path") && !j["mock_script_path"].is_null())
    c.mock_script_path = j["mock_script_path"].get<std::string>();
  c.provider_url = j.value("provider_url", c.provider_url);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.keywords = j.value("keywords", c.keywords);
  c.keyword_threshold = j.value("keyword_threshold", c.keyword_threshold);
  if (j.contains("generation")) c.generation = generation_config_from_json(j["generation"]);
  c.parallelism = j.value("parallelism", c.parallelism);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.client_retries = j.value("client_retries", c.client_retries);
  if (j.contains("requests_per_second") && !j["requests_per_second"].is_null())
    c.requests_per_second = j["requests_per_second"].get<double>();
  if (j.contains("metrics")) c.metrics = metrics_config_from_json(j["metrics"]);
  c.out_dir = j.value("out_dir", c.out_dir.string());
  c.seed = j.value("seed", c.seed);
  return c;
}

inline void check(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::config_invalid, m); };
  if (!fs::exists(c.corpus_path)) fail("corpus not found: " + c.corpus_path.string());
  if (c.prompt_spec_path && !fs::exists(*c.prompt_spec_path))
    fail("prompt spec not found: " + c.prompt_spec_path->string());
  if (c.provider == "mock") {
    if (!c.mock_script_path) fail("provider 'mock' requires a mock script");
    if (!fs::exists(*c.mock_script_path)) fail("mock script not found: " + c.mock_script_path->string());
  } else if (c.provider == "keyword") {
    if (c.keywords.empty()) fail("provider 'keyword' requires keywords");
  } else if (c.provider != "gemini") {
    fail("unknown provider '" + c.provider + "'");
  }
  if (c.parallelism < 1) fail("parallelism must be >= 1");
  if (c.max_attempts < 1) fail("max_attempts must be >= 1");
  if (c.client_retries < 0) fail("client_retries must be >= 0");
  check(c.metrics.erde_short);
  check(c.metrics.erde_long);
  if (!(c.metrics.flatency.p > 0)) fail("F-latency p must be > 0");
  check(c.generation);
}

enum class RunStatus { running, complete, failed };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::running: return "running";
    case RunStatus::complete: return "complete";
    case RunStatus::failed: return "failed";
  }
  return "failed";
}

inline RunStatus parse_run_status(std::string_view s) {
  if (s == "running") return RunStatus::running;
  if (s == "complete") return RunStatus::complete;
  if (s == "failed") return RunStatus::failed;
  throw Error(Errc::storage, "bad run status '" + std::string(s) + "'");
}

struct RunManifest {
  std::string run_id;
  json config;
  std::string corpus_fingerprint;
  std::size_t n_users = 0;
  std::size_t n_completed = 0;
  RunStatus status = RunStatus::running;
  std::optional<MetricsReport> report;
  std::string started_at;
  std::string finished_at;
  double wall_seconds = 0;
  std::string error;
};

inline json to_json(const RunManifest& m) {
  json j = {{"run_id", m.run_id},
            {"config", m.config},
            {"corpus_fingerprint", m.corpus_fingerprint},
            {"n_users", m.n_users},
            {"n_completed", m.n_completed},
            {"status", std::string(to_string(m.status))},
            {"report", m.report ? to_json(*m.report) : json(nullptr)},
            {"started_at", m.started_at},
            {"finished_at", m.finished_at},
            {"wall_seconds", m.wall_seconds},
            {"error", m.error}};
  return j;
}

inline RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.config = j.at("config");
  m.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
  m.n_users = j.at("n_users").get<std::size_t>();
  m.n_completed = j.at("n_completed").get<std::size_t>();
  m.status = parse_run_status(j.at("status").get<std::string>());
  if (!j.at("report").is_null()) m.report = metrics_report_from_json(j.at("report"));
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.wall_seconds = j.value("wall_seconds", 0.0);
  m.error = j.value("error", "");
  return m;
}

// ---------------------------------------------------------------------------
// File primitives

namespace storage {

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Replaces `p` atomically (write to a sibling temp file, fsync, rename).
inline void write_atomic(const fs::path& p, std::string_view content) {
  const fs::path tmp = p.string() + ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(Errc::storage, "cannot write " + tmp.string());
  std::size_t off = 0;
  while (off < content.size()) {
    ssize_t n = ::write(fd, content.data() + off, content.size() - off);
    if (n <= 0) {
      ::close(fd);
      throw Error(Errc::storage, "write failed for " + tmp.string());
    }
    off += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw Error(Errc::storage, "rename failed for " + p.string() + ": " + ec.message());
}

/// Appends one record as a single write of "<line>\n" and fsyncs.
inline void append_line(const fs::path& p, std::string_view line) {
  std::string buf(line);
  buf.push_back('\n');
  int fd = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(Errc::storage, "cannot append to " + p.string());
  std::size_t off = 0;
  while (off < buf.size()) {
    ssize_t n = ::write(fd, buf.data() + off, buf.size() - off);
    if (n <= 0) {
      ::close(fd);
      throw Error(Errc::storage, "append failed for " + p.string());
    }
    off += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

/// Complete (newline-terminated) lines of a JSONL file; a torn tail is skipped.
inline std::vector<json> read_complete_lines(const fs::path& p) {
  std::vector<json> out;
  if (!fs::exists(p)) return out;
  const std::string data = read_file(p);
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (true) {
    std::size_t nl = data.find('\n', start);
    if (nl == std::string::npos) break;
    ++line_no;
    std::string_view line(data.data() + start, nl - start);
    if (!text::trim(line).empty()) {
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) throw Error(Errc::storage, p.string() + ": corrupt line " + std::to_string(line_no), line_no);
      out.push_back(std::move(j));
    }
    start = nl + 1;
  }
  return out;
}

/// Drops a torn tail so the next append starts on a fresh line.
inline void truncate_torn_tail(const fs::path& p) {
  if (!fs::exists(p)) return;
  const std::string data = read_file(p);
  const std::size_t last = data.rfind('\n');
  const std::size_t keep = last == std::string::npos ? 0 : last + 1;
  if (keep != data.size()) fs::resize_file(p, keep);
}

}  // namespace storage

// ---------------------------------------------------------------------------
// Run store

class RunStore {
 public:
  explicit RunStore(fs::path out_dir) : root_(std::move(out_dir)) {}

  const fs::path& root() const { return root_; }
  fs::path runs_dir() const { return root_ / "runs"; }
  fs::path run_dir(const std::string& id) const { return runs_dir() / id; }
  fs::path manifest_path(const std::string& id) const { return run_dir(id) / "manifest.json"; }
  fs::path journal_path(const std::string& id) const { return run_dir(id) / "journal.jsonl"; }
  fs::path outcomes_path(const std::string& id) const { return run_dir(id) / "outcomes.jsonl"; }
  fs::path report_path(const std::string& id) const { return run_dir(id) / "report.json"; }
  fs::path telemetry_path(const std::string& id) const { return run_dir(id) / "telemetry.jsonl"; }
  fs::path calls_path(const std::string& id) const { return run_dir(id) / "calls.jsonl"; }
  fs::path annotations_path(const std::string& id) const { return run_dir(id) / "annotations.jsonl"; }
  fs::path reasoned_samples_path() const { return root_ / "reasoned_samples.jsonl"; }

  /// Rejects ids that could escape the runs directory.
  static bool valid_run_id(std::string_view id) {
    if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
    for (char c : id)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
    return true;
  }

  bool exists(const std::string& id) const { return valid_run_id(id) && fs::exists(manifest_path(id)); }

  RunManifest load_manifest(const std::string& id) const {
    if (!exists(id)) throw Error(Errc::unknown_run, id);
    try {
      return manifest_from_json(json::parse(storage::read_file(manifest_path(id))));
    } catch (const json::exception& e) {
      throw Error(Errc::storage, "manifest for " + id + ": " + e.what());
    }
  }

  void save_manifest(const RunManifest& m) const {
    fs::create_directories(run_dir(m.run_id));
    storage::write_atomic(manifest_path(m.run_id), to_json(m).dump(2) + "\n");
  }

  std::vector<std::string> list_runs() const {
    std::vector<std::string> ids;
    if (!fs::exists(runs_dir())) return ids;
    for (const auto& entry : fs::directory_iterator(runs_dir())) {
      const std::string id = entry.path().filename().string();
      if (entry.is_directory() && exists(id)) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  /// Outcomes visible for a run: the final file for complete runs, otherwise
  /// the durable part of the journal (deduplicated, first record wins).
  std::vector<UserOutcome> load_outcomes(const std::string& id) const {
    if (!exists(id)) throw Error(Errc::unknown_run, id);
    const bool final_file = fs::exists(outcomes_path(id));
    const auto lines = storage::read_complete_lines(final_file ? outcomes_path(id) : journal_path(id));
    std::vector<UserOutcome> out;
    std::unordered_map<std::string, bool> seen;
    for (const auto& j : lines) {
      try {
        UserOutcome o = outcome_from_json(j);
        if (seen.emplace(o.user_id, true).second) out.push_back(std::move(o));
      } catch (const std::exception& e) {
        throw Error(Errc::storage, "outcome record in run " + id + ": " + e.what());
      }
    }
    return out;
  }

 private:
  fs::path root_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct PolicyBundle {
  std::shared_ptr<DecisionPolicy> policy;
  std::shared_ptr<LlmClient> client;  // null for non-LLM policies
};

inline PromptSpec prompt_spec_for(const RunConfig& cfg) {
  return cfg.prompt_spec_path ? load_prompt_spec(*cfg.prompt_spec_path) : PromptSpec{};
}

/// Builds the decision policy described by `cfg`. Telemetry and call logs go
/// to the run directory.
inline PolicyBundle make_policy(const RunConfig& cfg, const RunStore& store, const std::string& run_id) {
  PolicyBundle b;
  if (cfg.provider == "keyword") {
    b.policy = std::make_shared<KeywordPolicy>(cfg.keywords, cfg.keyword_threshold);
    return b;
  }
  PromptSpec spec = prompt_spec_for(cfg);
  std::shared_ptr<Provider> provider;
  if (cfg.provider == "mock") {
    provider = load_scripted_mock(*cfg.mock_script_path, spec.literals);
  } else {
    provider = std::make_shared<GeminiProvider>(GeminiProvider::Options{cfg.provider_url, cfg.api_key_env});
  }
  ClientOptions copts;
  copts.retry.max_retries = cfg.client_retries;
  copts.retry.seed = cfg.seed;
  copts.requests_per_second = cfg.requests_per_second;
  copts.log_path = store.calls_path(run_id);
  b.client = std::make_shared<LlmClient>(provider, copts);
  const fs::path telemetry = store.telemetry_path(run_id);
  auto mu = std::make_shared<std::mutex>();
  auto sink = [telemetry, mu](const EvaluationTelemetry& t) {
    std::lock_guard lock(*mu);
    storage::append_line(telemetry, to_json(t).dump());
  };
  b.policy = std::make_shared<LlmPolicy>(std::move(spec), b.client, cfg.generation, cfg.max_attempts, sink);
  return b;
}

inline std::string outcomes_jsonl(const std::vector<UserOutcome>& outcomes) {
  std::string out;
  for (const auto& o : outcomes) out += to_json(o).dump() + "\n";
  return out;
}

namespace detail {

/// Evaluates whatever the journal does not yet hold and finalizes the run.
inline RunManifest execute_run(const RunStore& store, RunManifest manifest, const RunConfig& cfg, const Corpus& corpus,
                               std::shared_ptr<DecisionPolicy> policy_override) {
  const std::string& id = manifest.run_id;
  storage::truncate_torn_tail(store.journal_path(id));

  BatchOptions opts;
  opts.mode = cfg.mode;
  opts.parallelism = cfg.parallelism;
  opts.run_id = id;
  opts.config = manifest.config;
  for (auto& o : store.load_outcomes(id)) {
    if (corpus.find(o.user_id)) opts.completed.emplace(o.user_id, std::move(o));
  }
  const fs::path journal = store.journal_path(id);
  std::size_t completed = opts.completed.size();
  opts.on_outcome = [&](std::size_t, const UserOutcome& o) {
    storage::append_line(journal, to_json(o).dump());
    ++completed;
  };

  manifest.status = RunStatus::running;
  manifest.n_completed = completed;
  manifest.error.clear();
  store.save_manifest(manifest);

  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  try {
    std::shared_ptr<DecisionPolicy> policy = policy_override;
    PolicyBundle bundle;
    if (!policy) {
      bundle = make_policy(cfg, store, id);
      policy = bundle.policy;
    }
    result = run_batch(corpus, *policy, opts);
  } catch (const std::exception& e) {
    manifest.status = RunStatus::failed;
    manifest.error = e.what();
    manifest.n_completed = completed;
    manifest.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    store.save_manifest(manifest);
    return manifest;
  }

  storage::write_atomic(store.outcomes_path(id), outcomes_jsonl(result.outcomes));
  MetricsReport report = full_report(result, gold_labels(corpus), cfg.metrics);
  storage::write_atomic(store.report_path(id), to_json(report).dump(2) + "\n");
  manifest.report = report;
  manifest.status = RunStatus::complete;
  manifest.n_completed = result.outcomes.size();
  manifest.finished_at = utc_timestamp();
  manifest.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  store.save_manifest(manifest);
  return manifest;
}

}  // namespace detail

/// Starts a new run. Returns the manifest; a provider outage leaves the run
/// `failed` with its journal intact (see resume).
inline RunManifest run_eval(const RunConfig& cfg, std::shared_ptr<DecisionPolicy> policy_override = nullptr) {
  check(cfg);
  if (cfg.provider != "keyword" && !policy_override) prompt_spec_for(cfg);  // fail fast on a bad spec
  Corpus corpus = load_corpus(cfg.corpus_path, cfg.split);
  RunStore store(cfg.out_dir);

  RunManifest m;
  do {
    m.run_id = make_run_id();
  } while (store.exists(m.run_id));
  m.config = to_json(cfg);
  m.corpus_fingerprint = file_fingerprint(cfg.corpus_path);
  m.n_users = corpus.users.size();
  m.started_at = utc_timestamp();
  store.save_manifest(m);
  return detail::execute_run(store, std::move(m), cfg, corpus, std::move(policy_override));
}

/// Continues a running or failed run from its journal; a complete run is
/// returned unchanged.
inline RunManifest resume(const fs::path& out_dir, const std::string& run_id,
                          std::shared_ptr<DecisionPolicy> policy_override = nullptr) {
  RunStore store(out_dir);
  RunManifest m = store.load_manifest(run_id);
  if (m.status == RunStatus::complete) return m;
  RunConfig cfg = run_config_from_json(m.config);
  cfg.out_dir = out_dir;
  if (!fs::exists(cfg.corpus_path)) throw Error(Errc::file_not_found, cfg.corpus_path.string());
  if (file_fingerprint(cfg.corpus_path) != m.corpus_fingerprint)
    throw Error(Errc::corpus_mismatch, "corpus " + cfg.corpus_path.string() + " changed since run " + run_id + " started");
  Corpus corpus = load_corpus(cfg.corpus_path, cfg.split);
  return detail::execute_run(store, std::move(m), cfg, corpus, std::move(policy_override));
}

enum class ReportFormat { json, table };

inline std::string export_report(const fs::path& out_dir, const std::string& run_id, ReportFormat format) {
  RunStore store(out_dir);
  RunManifest m = store.load_manifest(run_id);
  if (m.status != RunStatus::complete || !m.report)
    throw Error(Errc::incomplete_run, run_id + " is " + std::string(to_string(m.status)));
  if (format == ReportFormat::json) {
    json j = to_json(*m.report);
    j["run_id"] = run_id;
    j["mode"] = m.config.value("mode", "");
    return j.dump(2) + "\n";
  }
  std::string out = table_header() + "\n" + table_row(run_id, *m.report) + "\n";
  const auto& c = m.report->confusion;
  out += "mode=" + m.config.value("mode", std::string()) + " TP=" + std::to_string(c.tp) + " TN=" + std::to_string(c.tn) +
         " FP=" + std::to_string(c.fp) + " FN=" + std::to_string(c.fn) +
         " unprocessed=" + std::to_string(m.report->n_unprocessed) + "\n";
  return out;
}

}  // namespace erd

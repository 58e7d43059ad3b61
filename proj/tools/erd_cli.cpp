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

// erd: evaluate, resume, report, serve, stats, validate.

#include <signal.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "erd/erd.hpp"

namespace {

struct EvalFlags {
  erd::RunConfig cfg;
  std::string mode = "retrospective";
  std::string prompt_spec;
  std::string mock_script;
  std::string keywords;
  std::optional<double> c_fp;
  std::string format = "table";
};

void add_eval_options(CLI::App* sub, EvalFlags& f) {
  auto& c = f.cfg;
  sub->add_option("--corpus", c.corpus_path, "Corpus JSONL (one user per line)")->required();
  sub->add_option("--split", c.split, "Split name recorded with the corpus")->capture_default_str();
  sub->add_option("--mode", f.mode, "streaming | retrospective")
      ->check(CLI::IsMember({"streaming", "retrospective"}))
      ->capture_default_str();
  sub->add_option("--prompt-spec", f.prompt_spec, "Prompt spec JSON (default: built-in, no examples)");
  sub->add_option("--provider", c.provider, "mock | gemini | keyword")
      ->check(CLI::IsMember({"mock", "gemini", "keyword"}))
      ->capture_default_str();
  sub->add_option("--mock-script", f.mock_script, "Scripted responses for --provider mock");
  sub->add_option("--provider-url", c.provider_url, "Base URL for --provider gemini")->capture_default_str();
  sub->add_option("--api-key-env", c.api_key_env, "Environment variable holding the API key")->capture_default_str();
  sub->add_option("--keywords", f.keywords, "Comma-separated keywords for --provider keyword");
  sub->add_option("--keyword-threshold", c.keyword_threshold, "Keyword hits that raise an alarm")->capture_default_str();
  sub->add_option("--model", c.generation.model_name, "Model name")->capture_default_str();
  sub->add_option("--temperature", c.generation.temperature)->capture_default_str();
  sub->add_option("--top-p", c.generation.top_p)->capture_default_str();
  sub->add_option("--max-output-tokens", c.generation.max_output_tokens)->capture_default_str();
  sub->add_option("--parallelism", c.parallelism, "Users evaluated concurrently")->capture_default_str();
  sub->add_option("--max-attempts", c.max_attempts, "Model calls per evaluation, repairs included")->capture_default_str();
  sub->add_option("--retries", c.client_retries, "Transport retries per call")->capture_default_str();
  sub->add_option("--rps", c.requests_per_second, "Request rate limit");
  sub->add_option("--seed", c.seed, "Seed for retry jitter")->capture_default_str();
  sub->add_option("--out", c.out_dir, "Output directory")->capture_default_str();
  sub->add_option("--theta5", c.metrics.erde_short.theta, "Short ERDE deadline")->capture_default_str();
  sub->add_option("--theta30", c.metrics.erde_long.theta, "Long ERDE deadline")->capture_default_str();
  sub->add_option("--p", c.metrics.flatency.p, "F-latency penalty rate")->capture_default_str();
  sub->add_option("--c-fp", f.c_fp, "False-positive cost (default: positive prevalence)");
  sub->add_option("--format", f.format, "Summary format: table | json")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();
}

void finish_eval_flags(EvalFlags& f) {
  auto& c = f.cfg;
  c.mode = *erd::parse_mode(f.mode);
  if (!f.prompt_spec.empty()) c.prompt_spec_path = f.prompt_spec;
  if (!f.mock_script.empty()) c.mock_script_path = f.mock_script;
  if (!f.keywords.empty()) {
    std::string cur;
    for (char ch : f.keywords + ",") {
      if (ch == ',') {
        auto t = erd::text::trim(cur);
        if (!t.empty()) c.keywords.emplace_back(t);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
  }
  c.metrics.erde_short.c_fp = f.c_fp;
  c.metrics.erde_long.c_fp = f.c_fp;
}

erd::ReportFormat parse_format(const std::string& s) {
  return s == "json" ? erd::ReportFormat::json : erd::ReportFormat::table;
}

int print_run(const erd::RunManifest& m, const erd::fs::path& out_dir, const std::string& format) {
  std::cerr << "run " << m.run_id << ": " << erd::to_string(m.status) << " (" << m.n_completed << "/" << m.n_users
            << " users)\n";
  if (m.status != erd::RunStatus::complete) {
    std::cerr << "error: " << m.error << "\n";
    std::cerr << "continue with: erd resume " << m.run_id << " --out " << out_dir.string() << "\n";
    return 2;
  }
  std::cout << erd::export_report(out_dir, m.run_id, parse_format(format));
  return 0;
}

/// Blocks SIGINT/SIGTERM in every thread and stops `server` when one arrives.
std::jthread stop_on_signal(erd::ApiServer& server) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return std::jthread([&server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early risk detection toolkit"};
  app.require_subcommand(1);

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a corpus and write a run");
  add_eval_options(eval_cmd, eval);

  std::string run_id;
  erd::fs::path out_dir = "runs";
  std::string format = "table";
  auto* resume_cmd = app.add_subcommand("resume", "Continue a failed or interrupted run");
  resume_cmd->add_option("run_id", run_id)->required();
  resume_cmd->add_option("--out", out_dir)->capture_default_str();
  resume_cmd->add_option("--format", format)->check(CLI::IsMember({"table", "json"}))->capture_default_str();

  auto* report_cmd = app.add_subcommand("report", "Print the metrics report of a complete run");
  report_cmd->add_option("run_id", run_id)->required();
  report_cmd->add_option("--out", out_dir)->capture_default_str();
  report_cmd->add_option("--format", format)->check(CLI::IsMember({"table", "json"}))->capture_default_str();

  erd::ServerOptions serve;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string reference, static_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Serve runs and annotations over HTTP");
  serve_cmd->add_option("--out", serve.out_dir, "Output directory holding runs/")->capture_default_str();
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str();
  serve_cmd->add_option("--reference-corpus", reference, "Corpus that reasoned samples must refer to");
  serve_cmd->add_option("--reference-split", serve.reference_split)->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "Directory served at /");

  erd::fs::path stats_corpus;
  std::string stats_split = "train";
  bool stats_json = false;
  auto* stats_cmd = app.add_subcommand("stats", "Print corpus statistics");
  stats_cmd->add_option("--corpus", stats_corpus)->required();
  stats_cmd->add_option("--split", stats_split)->capture_default_str();
  stats_cmd->add_flag("--json", stats_json);

  erd::fs::path v_corpus, v_samples, v_spec, v_script;
  std::string v_split = "train";
  auto* validate_cmd = app.add_subcommand("validate", "Check input files without running anything");
  validate_cmd->add_option("--corpus", v_corpus);
  validate_cmd->add_option("--split", v_split)->capture_default_str();
  validate_cmd->add_option("--reasoned-samples", v_samples, "Reasoned samples (needs --corpus)");
  validate_cmd->add_option("--prompt-spec", v_spec);
  validate_cmd->add_option("--mock-script", v_script);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval_cmd) {
      finish_eval_flags(eval);
      return print_run(erd::run_eval(eval.cfg), eval.cfg.out_dir, eval.format);
    }
    if (*resume_cmd) return print_run(erd::resume(out_dir, run_id), out_dir, format);
    if (*report_cmd) {
      std::cout << erd::export_report(out_dir, run_id, parse_format(format));
      return 0;
    }
    if (*serve_cmd) {
      if (!reference.empty()) serve.reference_corpus = reference;
      if (!static_dir.empty()) serve.static_dir = static_dir;
      if (const char* token = std::getenv("ERD_API_TOKEN"); token && *token) serve.bearer_token = token;
      erd::ApiServer server(serve);
      const int bound = server.bind(host, port);
      auto watcher = stop_on_signal(server);
      std::cerr << "serving " << serve.out_dir.string() << " on http://" << host << ":" << bound << "\n";
      server.listen();
      return 0;
    }
    if (*stats_cmd) {
      const auto corpus = erd::load_corpus(stats_corpus, stats_split);
      const auto s = erd::corpus_stats(corpus);
      if (stats_json) {
        std::cout << erd::to_json(s).dump(2) << "\n";
      } else {
        std::cout << "split     users    pos    neg    mean   min   max\n"
                  << erd::format_stats_row(stats_split, s) << "\n";
      }
      return 0;
    }
    if (*validate_cmd) {
      if (v_corpus.empty() && v_spec.empty() && v_script.empty())
        throw erd::Error(erd::Errc::config_invalid, "nothing to validate");
      if (!v_corpus.empty()) {
        const auto corpus = erd::load_corpus(v_corpus, v_split);
        std::cout << "corpus ok: " << corpus.users.size() << " users\n";
        if (!v_samples.empty()) {
          const auto samples = erd::load_reasoned_samples(v_samples, corpus);
          int bad = 0;
          for (std::size_t i = 0; i < samples.size(); ++i) {
            for (const auto& v : erd::validate_reasoned_sample(samples[i])) {
              std::cout << "sample " << i + 1 << " (" << samples[i].user.user_id << "): " << erd::to_string(v.kind)
                        << (v.detail.empty() ? "" : ": " + v.detail) << "\n";
              ++bad;
            }
          }
          if (bad) return 1;
          std::cout << "reasoned samples ok: " << samples.size() << "\n";
        }
      } else if (!v_samples.empty()) {
        throw erd::Error(erd::Errc::config_invalid, "--reasoned-samples needs --corpus");
      }
      if (!v_spec.empty()) {
        const auto spec = erd::load_prompt_spec(v_spec);
        const erd::Post probe{1, "-", std::nullopt};
        const auto prompt = erd::build_prompt(spec, std::span<const erd::Post>(&probe, 1), "");
        std::cout << "prompt spec ok: " << prompt.examples.selected.size() << " examples, " << prompt.estimated_tokens
                  << " tokens with a one-post input\n";
      }
      if (!v_script.empty()) {
        erd::load_scripted_mock(v_script);
        std::cout << "mock script ok\n";
      }
      return 0;
    }
  } catch (const erd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

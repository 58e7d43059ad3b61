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

// JSON-over-HTTP access to persisted runs, annotations and reasoned samples.
//
//   GET  /runs                        run summaries, sorted by id
//   GET  /runs/{id}                   manifest with report
//   GET  /runs/{id}/users[?tag=fn]    outcomes with confusion tags
//   GET  /runs/{id}/users/{uid}       posts, reasoning, labels, detected post
//   POST /annotations                 201 | 400 malformed | 422 dangling reference
//   GET  /runs/{id}/annotations
//   POST /reasoned-samples            201 | 400 | 422 invariant violations | 503 no reference corpus
//   GET  /reasoned-samples
//
// Errors are {"error": {"code": ..., "message": ...}}.

#pragma once

#include <httplib.h>

#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "erd/metrics.hpp"
#include "erd/run_service.hpp"

namespace erd {

inline constexpr std::array<std::string_view, 4> kVerdicts = {"relevant", "irrelevant", "accurate", "inaccurate"};

struct Annotation {
  std::string run_id;
  std::string user_id;
  std::optional<int> observation_index;  // 1-based; unset annotates the user
  std::string verdict;
  std::string comment;
  std::string author;
  std::string created_at;
};

inline json to_json(const Annotation& a) {
  return {{"run_id", a.run_id},
          {"user_id", a.user_id},
          {"observation_index", a.observation_index ? json(*a.observation_index) : json(nullptr)},
          {"verdict", a.verdict},
          {"comment", a.comment},
          {"author", a.author},
          {"created_at", a.created_at}};
}

struct ServerOptions {
  fs::path out_dir = "runs";
  /// Corpus that POST /reasoned-samples validates against (usually train).
  std::optional<fs::path> reference_corpus;
  std::string reference_split = "train";
  std::optional<std::string> bearer_token;
  std::optional<fs::path> static_dir;
};

class ApiServer {
 public:
  explicit ApiServer(ServerOptions opts) : opts_(std::move(opts)), store_(opts_.out_dir) {
    if (opts_.reference_corpus) reference_ = load_corpus(*opts_.reference_corpus, opts_.reference_split);
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    routes();
  }

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds `host:port`; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
      bound = server_.bind_to_any_port(host);
      if (bound < 0) throw Error(Errc::port_in_use, host + ": no free port");
    } else if (!server_.bind_to_port(host, port)) {
      throw Error(Errc::port_in_use, host + ":" + std::to_string(port));
    }
    return bound;
  }

  /// Serves until stop(); call after bind().
  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

  httplib::Server& http() { return server_; }

 private:
  struct HttpError {
    int status;
    std::string code;
    std::string message;
    json extra = nullptr;
  };

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const HttpError& e) {
    json err = {{"code", e.code}, {"message", e.message}};
    if (!e.extra.is_null()) err["details"] = e.extra;
    send_json(res, e.status, {{"error", err}});
  }

  static int status_for(Errc code) {
    switch (code) {
      case Errc::unknown_run: return 404;
      case Errc::unknown_user_id: return 404;
      case Errc::corpus_mismatch: return 409;
      case Errc::file_not_found: return 500;
      default: return 500;
    }
  }

  template <class Fn>
  static auto guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        send_error(res, e);
      } catch (const Error& e) {
        send_error(res, {status_for(e.code()), std::string(to_string(e.code())), e.detail()});
      } catch (const std::exception& e) {
        send_error(res, {500, "internal", e.what()});
      }
    };
  }

  bool authorized(const httplib::Request& req) const {
    if (!opts_.bearer_token) return true;
    return req.get_header_value("Authorization") == "Bearer " + *opts_.bearer_token;
  }

  static bool is_api_path(const std::string& path) {
    return path.rfind("/runs", 0) == 0 || path.rfind("/annotations", 0) == 0 || path.rfind("/reasoned-samples", 0) == 0;
  }

  RunManifest manifest(const std::string& id) const {
    if (!RunStore::valid_run_id(id) || !store_.exists(id)) throw HttpError{404, "unknown-run", "no run '" + id + "'"};
    return store_.load_manifest(id);
  }

  /// Corpus of a run, cached by run id. A corpus edited after the run
  /// started is refused rather than misattributed.
  std::shared_ptr<const Corpus> run_corpus(const RunManifest& m) {
    {
      std::lock_guard lock(cache_mu_);
      if (auto it = corpora_.find(m.run_id); it != corpora_.end()) return it->second;
    }
    const RunConfig cfg = run_config_from_json(m.config);
    if (file_fingerprint(cfg.corpus_path) != m.corpus_fingerprint)
      throw HttpError{409, "corpus-mismatch", "corpus of run '" + m.run_id + "' changed on disk"};
    auto corpus = std::make_shared<const Corpus>(load_corpus(cfg.corpus_path, cfg.split));
    std::lock_guard lock(cache_mu_);
    corpora_.emplace(m.run_id, corpus);
    return corpus;
  }

  static json user_summary(const UserOutcome& o, Label gold) {
    json j = {{"user_id", o.user_id},
              {"gold_label", std::string(to_string(gold))},
              {"predicted_label", std::string(to_string(o.predicted_label))},
              {"confusion_tag", text::fold(to_string(confusion_tag(gold, o.predicted_label)))},
              {"delay_k", o.delay_k},
              {"processing_status", std::string(to_string(o.status))},
              {"detected_post", nullptr}};
    if (o.reasoning && o.reasoning->detected_post) j["detected_post"] = *o.reasoning->detected_post;
    return j;
  }

  static json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw HttpError{400, "malformed-record", "body must be a JSON object"};
    return body;
  }

  static std::string string_field(const json& body, const char* key, bool required) {
    if (!body.contains(key) || body[key].is_null()) {
      if (required) throw HttpError{400, "malformed-record", std::string("missing field '") + key + "'"};
      return {};
    }
    if (!body[key].is_string()) throw HttpError{400, "malformed-record", std::string("field '") + key + "' must be a string"};
    return body[key].get<std::string>();
  }

  void routes() {
    server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (is_api_path(req.path) && !authorized(req)) {
        send_error(res, {401, "unauthorized", "missing or invalid bearer token"});
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
    server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.body.empty()) send_error(res, {res.status, "not-found", "no route for " + req.method + " " + req.path});
    });
    if (opts_.static_dir) server_.set_mount_point("/", opts_.static_dir->string());

    server_.Get("/runs", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& id : store_.list_runs()) {
        const RunManifest m = store_.load_manifest(id);
        json row = {{"run_id", m.run_id},
                    {"status", std::string(to_string(m.status))},
                    {"mode", m.config.value("mode", "")},
                    {"n_users", m.n_users},
                    {"n_completed", m.n_completed},
                    {"started_at", m.started_at},
                    {"finished_at", m.finished_at}};
        out.push_back(std::move(row));
      }
      send_json(res, 200, out);
    }));

    server_.Get(R"(/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, to_json(manifest(req.matches[1])));
    }));

    server_.Get(R"(/runs/([^/]+)/users)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const RunManifest m = manifest(req.matches[1]);
      auto corpus = run_corpus(m);
      std::optional<std::string> tag;
      if (req.has_param("tag")) {
        tag = text::fold(req.get_param_value("tag"));
        if (*tag != "tp" && *tag != "tn" && *tag != "fp" && *tag != "fn")
          throw HttpError{400, "malformed-record", "tag must be one of tp, tn, fp, fn"};
      }
      json out = json::array();
      for (const auto& o : store_.load_outcomes(m.run_id)) {
        const UserSample* u = corpus->find(o.user_id);
        if (!u) continue;
        json row = user_summary(o, u->gold_label);
        if (tag && row["confusion_tag"] != *tag) continue;
        out.push_back(std::move(row));
      }
      send_json(res, 200, out);
    }));

    server_.Get(R"(/runs/([^/]+)/users/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const RunManifest m = manifest(req.matches[1]);
      const std::string uid = req.matches[2];
      auto corpus = run_corpus(m);
      const UserSample* u = corpus->find(uid);
      for (const auto& o : store_.load_outcomes(m.run_id)) {
        if (o.user_id != uid || !u) continue;
        json j = user_summary(o, u->gold_label);
        j["run_id"] = m.run_id;
        j["posts"] = json::array();
        for (const auto& p : u->posts) j["posts"].push_back(to_json(p));
        j["observations"] = json::array();
        j["conclusion"] = "";
        if (o.reasoning) {
          for (const auto& ob : o.reasoning->observations) j["observations"].push_back(to_json(ob));
          j["conclusion"] = o.reasoning->conclusion;
        }
        j["failure"] = o.failure;
        send_json(res, 200, j);
        return;
      }
      throw HttpError{404, "unknown-user-id", "no outcome for '" + uid + "' in run '" + m.run_id + "'"};
    }));

    server_.Post("/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      Annotation a;
      a.run_id = string_field(body, "run_id", true);
      a.user_id = string_field(body, "user_id", true);
      a.verdict = string_field(body, "verdict", true);
      a.comment = string_field(body, "comment", false);
      a.author = string_field(body, "author", false);
      if (body.contains("observation_index") && !body["observation_index"].is_null()) {
        if (!body["observation_index"].is_number_integer())
          throw HttpError{400, "malformed-record", "observation_index must be an integer"};
        a.observation_index = body["observation_index"].get<int>();
      }
      if (std::find(kVerdicts.begin(), kVerdicts.end(), a.verdict) == kVerdicts.end())
        throw HttpError{422, "invalid-verdict", "verdict must be relevant, irrelevant, accurate or inaccurate"};
      if (!RunStore::valid_run_id(a.run_id) || !store_.exists(a.run_id))
        throw HttpError{422, "unknown-run", "no run '" + a.run_id + "'"};
      std::optional<UserOutcome> outcome;
      for (auto& o : store_.load_outcomes(a.run_id))
        if (o.user_id == a.user_id) outcome = std::move(o);
      if (!outcome) throw HttpError{422, "unknown-user-id", "no outcome for '" + a.user_id + "' in run '" + a.run_id + "'"};
      if (a.observation_index) {
        const std::size_t n = outcome->reasoning ? outcome->reasoning->observations.size() : 0;
        if (*a.observation_index < 1 || static_cast<std::size_t>(*a.observation_index) > n)
          throw HttpError{422, "unknown-observation",
                          "observation " + std::to_string(*a.observation_index) + " not in [1, " + std::to_string(n) + "]"};
      }
      a.created_at = utc_timestamp();
      const json record = to_json(a);
      {
        std::lock_guard lock(append_mu_);
        storage::append_line(store_.annotations_path(a.run_id), record.dump());
      }
      send_json(res, 201, record);
    }));

    server_.Get(R"(/runs/([^/]+)/annotations)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const RunManifest m = manifest(req.matches[1]);
      json out = json::array();
      for (auto& j : storage::read_complete_lines(store_.annotations_path(m.run_id))) out.push_back(std::move(j));
      send_json(res, 200, out);
    }));

    server_.Post("/reasoned-samples", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!reference_) throw HttpError{503, "no-reference-corpus", "server started without a reference corpus"};
      json body = parse_body(req);
      if (!body.contains("author")) body["author"] = "specialist";
      ReasonedSample s;
      try {
        s = reasoned_sample_from_json(body, *reference_);
      } catch (const Error& e) {
        if (e.code() == Errc::unknown_user_id) throw HttpError{422, "unknown-user-id", e.detail()};
        throw HttpError{400, std::string(to_string(e.code())), e.detail()};
      } catch (const std::exception& e) {
        throw HttpError{400, "malformed-record", e.what()};
      }
      const auto violations = validate_reasoned_sample(s);
      if (!violations.empty()) {
        json details = json::array();
        for (const auto& v : violations) details.push_back({{"kind", std::string(to_string(v.kind))}, {"detail", v.detail}});
        throw HttpError{422, "invalid-reasoning", "reasoning violates corpus rules", details};
      }
      const json record = reasoned_sample_record(s);
      {
        std::lock_guard lock(append_mu_);
        fs::create_directories(store_.root());
        storage::append_line(store_.reasoned_samples_path(), record.dump());
      }
      send_json(res, 201, record);
    }));

    server_.Get("/reasoned-samples", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (auto& j : storage::read_complete_lines(store_.reasoned_samples_path())) out.push_back(std::move(j));
      send_json(res, 200, out);
    }));
  }

  ServerOptions opts_;
  RunStore store_;
  std::optional<Corpus> reference_;
  httplib::Server server_;
  std::mutex append_mu_;
  std::mutex cache_mu_;
  std::map<std::string, std::shared_ptr<const Corpus>> corpora_;
};

}  // namespace erd

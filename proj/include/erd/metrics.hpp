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

// Classification and early-detection metrics over per-user outcomes.
//
// The positive class is "at risk". Delays are 1-based post counts. Any ratio
// with a zero denominator is defined as 0 and named in `undefined`.
//
//   ERDE_theta:  mean per-user cost; FP -> c_fp, FN -> c_fn,
//                TP -> c_tp * lc(k), TN -> 0, with lc(k) = 1 - 1/(1 + e^(k - theta)).
//   F-latency:   F1(positive) * speed, speed = 1 - median over TPs of
//                penalty(k) = -1 + 2 / (1 + e^(-p (k - 1))).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "erd/corpus.hpp"
#include "erd/stream_engine.hpp"

namespace erd {

using GoldLabels = std::unordered_map<std::string, Label>;

inline GoldLabels gold_labels(const Corpus& corpus) {
  GoldLabels gold;
  for (const auto& u : corpus.users) gold.emplace(u.user_id, u.gold_label);
  return gold;
}

struct Confusion {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const Confusion&) const = default;
};

enum class ConfusionTag { tp, tn, fp, fn };

inline std::string_view to_string(ConfusionTag t) {
  switch (t) {
    case ConfusionTag::tp: return "TP";
    case ConfusionTag::tn: return "TN";
    case ConfusionTag::fp: return "FP";
    case ConfusionTag::fn: return "FN";
  }
  return "?";
}

inline ConfusionTag confusion_tag(Label gold, Label predicted) {
  if (gold == Label::positive) return predicted == Label::positive ? ConfusionTag::tp : ConfusionTag::fn;
  return predicted == Label::positive ? ConfusionTag::fp : ConfusionTag::tn;
}

namespace detail {

/// Resolves each outcome's gold label, enforcing the one-outcome-per-user
/// precondition shared by every metric.
inline std::vector<Label> resolve_gold(std::span<const UserOutcome> outcomes, const GoldLabels& gold) {
  std::vector<Label> labels;
  labels.reserve(outcomes.size());
  std::unordered_set<std::string_view> seen;
  for (const auto& o : outcomes) {
    auto it = gold.find(o.user_id);
    if (it == gold.end()) throw Error(Errc::unknown_user_id, o.user_id);
    if (!seen.insert(o.user_id).second) throw Error(Errc::duplicate_outcome, o.user_id);
    labels.push_back(it->second);
  }
  return labels;
}

inline double ratio(std::size_t num, std::size_t den, const char* name, std::vector<std::string>& undefined) {
  if (den == 0) {
    undefined.emplace_back(name);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

inline double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace detail

inline Confusion confusion_matrix(std::span<const UserOutcome> outcomes, const GoldLabels& gold) {
  const auto labels = detail::resolve_gold(outcomes, gold);
  Confusion c;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    switch (confusion_tag(labels[i], outcomes[i].predicted_label)) {
      case ConfusionTag::tp: ++c.tp; break;
      case ConfusionTag::tn: ++c.tn; break;
      case ConfusionTag::fp: ++c.fp; break;
      case ConfusionTag::fn: ++c.fn; break;
    }
  }
  return c;
}

struct ClassificationMetrics {
  double accuracy = 0;
  double precision_pos = 0, recall_pos = 0, f1_pos = 0;
  double precision_neg = 0, recall_neg = 0, f1_neg = 0;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  std::vector<std::string> undefined;  // metrics defaulted to 0 by a zero denominator
};

inline ClassificationMetrics classification_metrics(const Confusion& c) {
  if (c.total() == 0) throw Error(Errc::empty_confusion, "no evaluated users");
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  m.precision_pos = detail::ratio(c.tp, c.tp + c.fp, "precision_pos", m.undefined);
  m.recall_pos = detail::ratio(c.tp, c.tp + c.fn, "recall_pos", m.undefined);
  m.precision_neg = detail::ratio(c.tn, c.tn + c.fn, "precision_neg", m.undefined);
  m.recall_neg = detail::ratio(c.tn, c.tn + c.fp, "recall_neg", m.undefined);
  m.f1_pos = detail::harmonic(m.precision_pos, m.recall_pos);
  m.f1_neg = detail::harmonic(m.precision_neg, m.recall_neg);
  if (m.precision_pos + m.recall_pos == 0.0) m.undefined.emplace_back("f1_pos");
  if (m.precision_neg + m.recall_neg == 0.0) m.undefined.emplace_back("f1_neg");
  m.macro_precision = (m.precision_pos + m.precision_neg) / 2.0;
  m.macro_recall = (m.recall_pos + m.recall_neg) / 2.0;
  m.macro_f1 = (m.f1_pos + m.f1_neg) / 2.0;
  return m;
}

// ---------------------------------------------------------------------------
// ERDE

struct ErdeConfig {
  int theta = 5;
  std::optional<double> c_fp;  // unset: prevalence of positives among evaluated users
  double c_fn = 1.0;
  double c_tp = 1.0;
};

inline void check(const ErdeConfig& cfg) {
  if (cfg.theta < 1) throw Error(Errc::config_invalid, "theta must be >= 1");
  if ((cfg.c_fp && *cfg.c_fp < 0) || cfg.c_fn < 0 || cfg.c_tp < 0)
    throw Error(Errc::config_invalid, "ERDE costs must be >= 0");
}

/// Sigmoid latency cost, 0.5 exactly at k == theta.
inline double latency_cost(int k, int theta) {
  if (k < 1) throw Error(Errc::config_invalid, "delay must be >= 1");
  // Same value as 1 - 1/(1 + e^(k-theta)) without the cancellation for small k.
  return 1.0 / (1.0 + std::exp(static_cast<double>(theta - k)));
}

inline double resolve_c_fp(const ErdeConfig& cfg, std::span<const Label> gold) {
  if (cfg.c_fp) return *cfg.c_fp;
  if (gold.empty()) return 0.0;
  auto pos = std::count(gold.begin(), gold.end(), Label::positive);
  return static_cast<double>(pos) / static_cast<double>(gold.size());
}

inline double erde(std::span<const UserOutcome> outcomes, const GoldLabels& gold, const ErdeConfig& cfg) {
  check(cfg);
  const auto labels = detail::resolve_gold(outcomes, gold);
  if (outcomes.empty()) throw Error(Errc::empty_confusion, "no evaluated users");
  const double c_fp = resolve_c_fp(cfg, labels);
  double sum = 0.0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    switch (confusion_tag(labels[i], outcomes[i].predicted_label)) {
      case ConfusionTag::tp: sum += cfg.c_tp * latency_cost(outcomes[i].delay_k, cfg.theta); break;
      case ConfusionTag::fp: sum += c_fp; break;
      case ConfusionTag::fn: sum += cfg.c_fn; break;
      case ConfusionTag::tn: break;
    }
  }
  return sum / static_cast<double>(outcomes.size());
}

// ---------------------------------------------------------------------------
// F-latency

struct FLatencyConfig {
  double p = 0.0078;
};

inline double flatency_penalty(int k, const FLatencyConfig& cfg) {
  if (k < 1) throw Error(Errc::config_invalid, "delay must be >= 1");
  if (!(cfg.p > 0)) throw Error(Errc::config_invalid, "F-latency p must be > 0");
  // -1 + 2/(1+e^-x) == tanh(x/2); tanh keeps penalty(1) == 0 exactly.
  return std::tanh(cfg.p * static_cast<double>(k - 1) / 2.0);
}

struct FLatencyResult {
  double f1_pos = 0;
  double speed = 0;
  double f_latency = 0;
  std::optional<double> median_tp_delay;
};

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

inline FLatencyResult flatency(std::span<const UserOutcome> outcomes, const GoldLabels& gold, const FLatencyConfig& cfg) {
  const auto labels = detail::resolve_gold(outcomes, gold);
  Confusion c;
  std::vector<double> penalties, delays;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    switch (confusion_tag(labels[i], outcomes[i].predicted_label)) {
      case ConfusionTag::tp:
        ++c.tp;
        penalties.push_back(flatency_penalty(outcomes[i].delay_k, cfg));
        delays.push_back(outcomes[i].delay_k);
        break;
      case ConfusionTag::fp: ++c.fp; break;
      case ConfusionTag::fn: ++c.fn; break;
      case ConfusionTag::tn: ++c.tn; break;
    }
  }
  FLatencyResult r;
  if (c.total() == 0) throw Error(Errc::empty_confusion, "no evaluated users");
  r.f1_pos = classification_metrics(c).f1_pos;
  if (!penalties.empty()) {
    r.speed = 1.0 - median(penalties);
    r.median_tp_delay = median(delays);
  }
  r.f_latency = r.f1_pos * r.speed;
  return r;
}

// ---------------------------------------------------------------------------
// Report

struct MetricsConfig {
  ErdeConfig erde_short{.theta = 5};
  ErdeConfig erde_long{.theta = 30};
  FLatencyConfig flatency;
};

struct MetricsReport {
  ClassificationMetrics classification;
  double erde5 = 0;
  double erde30 = 0;
  double f_latency = 0;
  double speed = 0;
  std::optional<double> median_tp_delay;
  Confusion confusion;
  std::size_t n_unprocessed = 0;
  MetricsConfig config;
};

inline MetricsReport full_report(std::span<const UserOutcome> outcomes, const GoldLabels& gold,
                                 const MetricsConfig& cfg = {}) {
  if (outcomes.empty()) throw Error(Errc::empty_confusion, "empty outcome list");
  MetricsReport r;
  r.config = cfg;
  r.confusion = confusion_matrix(outcomes, gold);
  r.classification = classification_metrics(r.confusion);
  r.erde5 = erde(outcomes, gold, cfg.erde_short);
  r.erde30 = erde(outcomes, gold, cfg.erde_long);
  auto fl = flatency(outcomes, gold, cfg.flatency);
  r.f_latency = fl.f_latency;
  r.speed = fl.speed;
  r.median_tp_delay = fl.median_tp_delay;
  r.n_unprocessed = static_cast<std::size_t>(std::count_if(
      outcomes.begin(), outcomes.end(), [](const UserOutcome& o) { return o.status == ProcessingStatus::unprocessed; }));
  return r;
}

inline MetricsReport full_report(const RunResult& run, const GoldLabels& gold, const MetricsConfig& cfg = {}) {
  return full_report(std::span<const UserOutcome>(run.outcomes), gold, cfg);
}

/// Half-up rounding to `decimals` places. The epsilon absorbs binary
/// representation error so 0.845 rounds to 0.85.
inline double round_half_up(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(x * scale + 0.5 + 1e-9) / scale;
}

inline std::string fixed(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, round_half_up(x, decimals));
  return buf;
}

inline json to_json(const ErdeConfig& c) {
  json j = {{"theta", c.theta}, {"c_fn", c.c_fn}, {"c_tp", c.c_tp}, {"c_fp", nullptr}};
  if (c.c_fp) j["c_fp"] = *c.c_fp;
  return j;
}

inline ErdeConfig erde_config_from_json(const json& j) {
  ErdeConfig c;
  c.theta = j.at("theta").get<int>();
  c.c_fn = j.value("c_fn", 1.0);
  c.c_tp = j.value("c_tp", 1.0);
  if (j.contains("c_fp") && !j.at("c_fp").is_null()) c.c_fp = j.at("c_fp").get<double>();
  return c;
}

inline json to_json(const MetricsConfig& c) {
  return {{"erde_short", to_json(c.erde_short)}, {"erde_long", to_json(c.erde_long)}, {"flatency_p", c.flatency.p}};
}

inline MetricsConfig metrics_config_from_json(const json& j) {
  MetricsConfig c;
  c.erde_short = erde_config_from_json(j.at("erde_short"));
  c.erde_long = erde_config_from_json(j.at("erde_long"));
  c.flatency.p = j.at("flatency_p").get<double>();
  return c;
}

inline json to_json(const ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"precision_pos", m.precision_pos}, {"recall_pos", m.recall_pos}, {"f1_pos", m.f1_pos},
          {"precision_neg", m.precision_neg}, {"recall_neg", m.recall_neg}, {"f1_neg", m.f1_neg},
          {"macro_precision", m.macro_precision}, {"macro_recall", m.macro_recall}, {"macro_f1", m.macro_f1},
          {"undefined", m.undefined}};
}

inline json to_json(const Confusion& c) { return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}}; }

inline json to_json(const MetricsReport& r) {
  const auto& m = r.classification;
  json j = {{"classification", to_json(m)},
            {"erde5", r.erde5},
            {"erde30", r.erde30},
            {"f_latency", r.f_latency},
            {"speed", r.speed},
            {"median_tp_delay", nullptr},
            {"confusion", to_json(r.confusion)},
            {"n_unprocessed", r.n_unprocessed},
            {"config", to_json(r.config)}};
  if (r.median_tp_delay) j["median_tp_delay"] = *r.median_tp_delay;
  j["rounded"] = {{"accuracy", fixed(m.accuracy, 2)},
                  {"precision", fixed(m.macro_precision, 2)},
                  {"recall", fixed(m.macro_recall, 2)},
                  {"f1", fixed(m.macro_f1, 2)},
                  {"erde5", fixed(r.erde5, 3)},
                  {"erde30", fixed(r.erde30, 3)},
                  {"f_latency", fixed(r.f_latency, 2)}};
  return j;
}

inline MetricsReport metrics_report_from_json(const json& j) {
  MetricsReport r;
  const json& m = j.at("classification");
  auto& c = r.classification;
  c.accuracy = m.at("accuracy").get<double>();
  c.precision_pos = m.at("precision_pos").get<double>();
  c.recall_pos = m.at("recall_pos").get<double>();
  c.f1_pos = m.at("f1_pos").get<double>();
  c.precision_neg = m.at("precision_neg").get<double>();
  c.recall_neg = m.at("recall_neg").get<double>();
  c.f1_neg = m.at("f1_neg").get<double>();
  c.macro_precision = m.at("macro_precision").get<double>();
  c.macro_recall = m.at("macro_recall").get<double>();
  c.macro_f1 = m.at("macro_f1").get<double>();
  c.undefined = m.at("undefined").get<std::vector<std::string>>();
  r.erde5 = j.at("erde5").get<double>();
  r.erde30 = j.at("erde30").get<double>();
  r.f_latency = j.at("f_latency").get<double>();
  r.speed = j.at("speed").get<double>();
  if (!j.at("median_tp_delay").is_null()) r.median_tp_delay = j.at("median_tp_delay").get<double>();
  const json& cj = j.at("confusion");
  r.confusion = {cj.at("tp").get<std::size_t>(), cj.at("tn").get<std::size_t>(), cj.at("fp").get<std::size_t>(),
                 cj.at("fn").get<std::size_t>()};
  r.n_unprocessed = j.at("n_unprocessed").get<std::size_t>();
  r.config = metrics_config_from_json(j.at("config"));
  return r;
}

inline std::string table_header() {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %5s %5s %5s %5s %7s %7s %9s", "Run", "Acc", "P", "R", "F1", "ERDE5", "ERDE30",
                "F-latency");
  return buf;
}

/// One results row: macro P/R/F1 and accuracy at 2 decimals, ERDE at 3,
/// F-latency at 2.
inline std::string table_row(std::string_view name, const MetricsReport& r) {
  const auto& m = r.classification;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-28.*s %5s %5s %5s %5s %7s %7s %9s", static_cast<int>(name.size()), name.data(),
                fixed(m.accuracy, 2).c_str(), fixed(m.macro_precision, 2).c_str(), fixed(m.macro_recall, 2).c_str(),
                fixed(m.macro_f1, 2).c_str(), fixed(r.erde5, 3).c_str(), fixed(r.erde30, 3).c_str(),
                fixed(r.f_latency, 2).c_str());
  return buf;
}

}  // namespace erd

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


#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace erd {
namespace {

// Values below were computed with 40-digit arbitrary precision arithmetic.
constexpr double kLc_1_30 = 2.5436656473762758e-13;
constexpr double kLc_40_30 = 0.9999546021312976;
constexpr double kLc_1_5 = 0.017986209962091558;
constexpr double kPenalty_100 = 0.3679932113142259;

UserOutcome outcome(std::string id, Label pred, int delay) {
  UserOutcome o;
  o.user_id = std::move(id);
  o.predicted_label = pred;
  o.delay_k = delay;
  return o;
}

TEST(LatencyCost, HalfAtDeadline) {
  EXPECT_EQ(latency_cost(5, 5), 0.5);
  EXPECT_EQ(latency_cost(30, 30), 0.5);
}

TEST(LatencyCost, HighPrecisionReferenceValues) {
  EXPECT_NEAR(latency_cost(1, 30) / kLc_1_30, 1.0, 1e-12);
  EXPECT_NEAR(latency_cost(40, 30), kLc_40_30, 1e-15);
  EXPECT_NEAR(latency_cost(1, 5), kLc_1_5, 1e-15);
}

TEST(LatencyCost, MonotoneAndBounded) {
  for (int theta : {1, 5, 30, 100}) {
    double prev = 0;
    for (int k = 1; k <= 500; ++k) {
      double v = latency_cost(k, theta);
      EXPECT_GE(v, prev);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      prev = v;
    }
  }
  EXPECT_THROW(latency_cost(0, 5), Error);
}

TEST(FLatencyPenalty, ZeroAtFirstPostAndReferenceValues) {
  FLatencyConfig cfg;
  EXPECT_EQ(flatency_penalty(1, cfg), 0.0);
  EXPECT_NEAR(flatency_penalty(100, cfg), kPenalty_100, 1e-15);
  EXPECT_NEAR(flatency_penalty(1'000'000, cfg), 1.0, 1e-15);
  EXPECT_THROW(flatency_penalty(0, cfg), Error);
  EXPECT_THROW(flatency_penalty(3, FLatencyConfig{0.0}), Error);
}

TEST(Classification, ReproducesPublishedTable) {
  auto m = classification_metrics({63, 62, 19, 5});
  EXPECT_NEAR(m.accuracy, 0.8389261744966443, 1e-15);
  EXPECT_NEAR(m.macro_precision, 0.8468329086275937, 1e-15);
  EXPECT_NEAR(m.macro_recall, 0.8459513435003631, 1e-15);
  EXPECT_NEAR(m.macro_f1, 0.8389189189189189, 1e-15);
  EXPECT_NEAR(m.f1_pos, 0.84, 1e-15);
  EXPECT_EQ(fixed(m.accuracy, 2), "0.84");
  EXPECT_EQ(fixed(m.macro_precision, 2), "0.85");
  EXPECT_EQ(fixed(m.macro_recall, 2), "0.85");
  EXPECT_EQ(fixed(m.macro_f1, 2), "0.84");
  EXPECT_TRUE(m.undefined.empty());
}

TEST(Classification, ZeroDenominatorsAreReported) {
  auto m = classification_metrics({0, 5, 0, 0});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision_pos, 0.0);
  EXPECT_NE(std::find(m.undefined.begin(), m.undefined.end(), "precision_pos"), m.undefined.end());
  EXPECT_NE(std::find(m.undefined.begin(), m.undefined.end(), "recall_pos"), m.undefined.end());
  EXPECT_THROW(classification_metrics({}), Error);
}

TEST(ConfusionMatrix, RejectsUnknownAndDuplicateUsers) {
  GoldLabels gold{{"a", Label::positive}, {"b", Label::negative}};
  std::vector<UserOutcome> ok{outcome("a", Label::positive, 2), outcome("b", Label::positive, 3)};
  EXPECT_EQ(confusion_matrix(ok, gold), (Confusion{1, 0, 1, 0}));
  std::vector<UserOutcome> unknown{outcome("z", Label::positive, 2)};
  try {
    confusion_matrix(unknown, gold);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_user_id);
  }
  std::vector<UserOutcome> dup{outcome("a", Label::positive, 2), outcome("a", Label::negative, 3)};
  try {
    confusion_matrix(dup, gold);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::duplicate_outcome);
  }
}

TEST(Erde, HandComputedSmallRun) {
  GoldLabels gold{{"tp", Label::positive}, {"fn", Label::positive}, {"fp", Label::negative}, {"tn", Label::negative}};
  std::vector<UserOutcome> out{outcome("tp", Label::positive, 5), outcome("fn", Label::negative, 9),
                               outcome("fp", Label::positive, 1), outcome("tn", Label::negative, 4)};
  // c_fp = prevalence = 0.5; TP at the deadline costs 0.5.
  EXPECT_DOUBLE_EQ(erde(out, gold, {.theta = 5}), (0.5 + 1.0 + 0.5 + 0.0) / 4.0);
  EXPECT_DOUBLE_EQ(erde(out, gold, {.theta = 5, .c_fp = 0.25}), (0.5 + 1.0 + 0.25) / 4.0);
}

TEST(Erde, AllTrueNegativesCostNothing) {
  GoldLabels gold;
  std::vector<UserOutcome> out;
  for (int i = 0; i < 30; ++i) {
    gold["u" + std::to_string(i)] = Label::negative;
    out.push_back(outcome("u" + std::to_string(i), Label::negative, 10));
  }
  EXPECT_EQ(erde(out, gold, {.theta = 5}), 0.0);
  EXPECT_EQ(erde(out, gold, {.theta = 30}), 0.0);
}

TEST(Erde, RejectsBadConfig) {
  GoldLabels gold{{"a", Label::positive}};
  std::vector<UserOutcome> out{outcome("a", Label::positive, 1)};
  EXPECT_THROW(erde(out, gold, {.theta = 0}), Error);
  EXPECT_THROW(erde(out, gold, {.theta = 5, .c_fp = -1.0}), Error);
  EXPECT_THROW(erde({}, gold, {.theta = 5}), Error);
}

TEST(FLatency, NoTruePositivesMeansZero) {
  GoldLabels gold{{"a", Label::positive}, {"b", Label::negative}};
  std::vector<UserOutcome> out{outcome("a", Label::negative, 3), outcome("b", Label::positive, 1)};
  auto r = flatency(out, gold, {});
  EXPECT_EQ(r.f_latency, 0.0);
  EXPECT_EQ(r.speed, 0.0);
  EXPECT_FALSE(r.median_tp_delay.has_value());
}

TEST(FLatency, ImmediateDetectionKeepsF1) {
  GoldLabels gold{{"a", Label::positive}, {"b", Label::negative}};
  std::vector<UserOutcome> out{outcome("a", Label::positive, 1), outcome("b", Label::negative, 3)};
  auto r = flatency(out, gold, {});
  EXPECT_EQ(r.speed, 1.0);
  EXPECT_EQ(r.f_latency, 1.0);
  EXPECT_EQ(r.median_tp_delay, 1.0);
}

TEST(MetricsProperty, MatchesBruteForceOracles) {
  std::mt19937_64 rng(20230917);
  for (int run = 0; run < 200; ++run) {
    auto r = testing::random_run(rng);
    const double prev = testing::oracle_prevalence(r.rows);
    for (int theta : {5, 30}) {
      EXPECT_NEAR(erde(r.outcomes, r.gold, {.theta = theta}), testing::oracle_erde(r.rows, theta, prev, 1, 1), 1e-12);
      EXPECT_NEAR(erde(r.outcomes, r.gold, {.theta = theta, .c_fp = 0.3, .c_fn = 2.0, .c_tp = 0.7}),
                  testing::oracle_erde(r.rows, theta, 0.3, 2.0, 0.7), 1e-12);
    }
    for (double p : {0.0078, 0.05}) {
      auto fl = flatency(r.outcomes, r.gold, {p});
      EXPECT_NEAR(fl.f_latency, testing::oracle_flatency(r.rows, p), 1e-12);
      EXPECT_NEAR(fl.f1_pos, testing::oracle_f1_pos(r.rows), 1e-12);
      EXPECT_LE(fl.f_latency, fl.f1_pos + 1e-15);
      EXPECT_GE(fl.f_latency, 0.0);
    }
  }
}

TEST(MetricsProperty, ErdeBoundedByWorstCost) {
  std::mt19937_64 rng(3);
  for (int run = 0; run < 200; ++run) {
    auto r = testing::random_run(rng);
    const double e = erde(r.outcomes, r.gold, {.theta = 5});
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(MetricsProperty, EarlierDetectionNeverCostsMore) {
  std::mt19937_64 rng(4);
  for (int run = 0; run < 100; ++run) {
    auto r = testing::random_run(rng);
    auto earlier = r.outcomes;
    for (auto& o : earlier)
      if (o.predicted_label == Label::positive && o.delay_k > 1) --o.delay_k;
    for (int theta : {5, 30}) EXPECT_LE(erde(earlier, r.gold, {.theta = theta}), erde(r.outcomes, r.gold, {.theta = theta}));
    EXPECT_GE(flatency(earlier, r.gold, {}).f_latency, flatency(r.outcomes, r.gold, {}).f_latency);
  }
}

TEST(Rounding, HalfUpAtTwoAndThreeDecimals) {
  EXPECT_EQ(fixed(0.845, 2), "0.85");
  EXPECT_EQ(fixed(0.8449, 2), "0.84");
  EXPECT_EQ(fixed(0.0345, 3), "0.035");
  EXPECT_EQ(fixed(1.0, 2), "1.00");
  EXPECT_EQ(fixed(0.0, 3), "0.000");
}

TEST(Report, JsonRoundTripAndTableRow) {
  auto f = testing::mixed_149_fixture();
  std::vector<UserOutcome> out;
  for (const auto& e : f.expected) {
    UserOutcome o = outcome(e.user_id, e.predicted, e.delay_k);
    o.status = e.status;
    out.push_back(o);
  }
  auto report = full_report(out, gold_labels(f.corpus));
  EXPECT_EQ(report.confusion, (Confusion{63, 62, 19, 5}));
  EXPECT_EQ(report.n_unprocessed, 2u);
  auto back = metrics_report_from_json(json::parse(to_json(report).dump()));
  EXPECT_EQ(to_json(back), to_json(report));
  const std::string row = table_row("run", report);
  EXPECT_NE(row.find(" 0.84  0.85  0.85  0.84 "), std::string::npos) << row;
  EXPECT_EQ(to_json(report)["rounded"]["precision"], "0.85");
}

}  // namespace
}  // namespace erd

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

#include <thread>

#include "support/fixtures.hpp"

namespace erd {
namespace {

using testing::CountingPolicy;

UserSample user_with_posts(const std::string& id, int n, Label gold = Label::positive) {
  std::mt19937_64 rng(1);
  return testing::make_user(id, gold, static_cast<std::size_t>(n), rng);
}

TEST(Streaming, AlarmAtRoundTenOfElevenPosts) {
  CountingPolicy policy({{"u", 10}});
  auto o = run_user_streaming(user_with_posts("u", 11), policy);
  EXPECT_EQ(o.predicted_label, Label::positive);
  EXPECT_EQ(o.delay_k, 10);
  EXPECT_EQ(policy.consultations("u"), 10);
}

TEST(Streaming, NeverAlarmingConsultsEveryRound) {
  CountingPolicy policy({{"u", 0}});
  auto o = run_user_streaming(user_with_posts("u", 7), policy);
  EXPECT_EQ(o.predicted_label, Label::negative);
  EXPECT_EQ(o.delay_k, 7);
  EXPECT_EQ(policy.consultations("u"), 7);
}

TEST(Streaming, PolicySeesOnlyPostsSoFar) {
  struct Probe final : DecisionPolicy {
    mutable std::vector<std::size_t> seen_sizes;
    mutable std::vector<int> rounds;
    Decision decide(std::string_view, std::span<const Post> seen, int round) const override {
      seen_sizes.push_back(seen.size());
      rounds.push_back(round);
      EXPECT_EQ(seen.back().index, round);
      return {Action::defer, round, std::nullopt};
    }
    Reasoning reason(std::string_view, std::span<const Post>) const override { return {}; }
  } probe;
  run_user_streaming(user_with_posts("u", 5), probe);
  EXPECT_EQ(probe.seen_sizes, (std::vector<std::size_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(probe.rounds, (std::vector<int>{1, 2, 3, 4, 5}));
}

TEST(StreamingProperty, ConsultationsEqualDelayForPositives) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    Corpus c = testing::make_corpus({10, 10, 1, 60}, rng());
    std::map<std::string, int> alarm;
    for (const auto& u : c.users) {
      std::uniform_int_distribution<int> at(0, static_cast<int>(u.posts.size()));
      alarm[u.user_id] = at(rng);
    }
    CountingPolicy policy(alarm);
    BatchOptions opts;
    opts.mode = Mode::streaming;
    opts.parallelism = 1 + trial % 4;
    auto res = run_batch(c, policy, opts);
    ASSERT_EQ(res.outcomes.size(), c.users.size());
    for (std::size_t i = 0; i < c.users.size(); ++i) {
      const auto& o = res.outcomes[i];
      EXPECT_EQ(o.user_id, c.users[i].user_id);
      EXPECT_TRUE(outcome_is_consistent(o, c.users[i].posts.size()));
      if (o.predicted_label == Label::positive) {
        EXPECT_EQ(policy.consultations(o.user_id), o.delay_k);
        EXPECT_EQ(o.delay_k, alarm[o.user_id]);
      } else {
        EXPECT_EQ(policy.consultations(o.user_id), static_cast<int>(c.users[i].posts.size()));
      }
    }
  }
}

TEST(Retrospective, SingleConsultationAndDelayFromDetectedPost) {
  CountingPolicy policy({{"u", 4}});
  auto o = run_user_retrospective(user_with_posts("u", 9), policy);
  EXPECT_EQ(policy.consultations("u"), 1);
  EXPECT_EQ(o.predicted_label, Label::positive);
  EXPECT_EQ(o.delay_k, 4);
  ASSERT_TRUE(o.reasoning.has_value());
  EXPECT_EQ(o.reasoning->detected_post, 4);
}

TEST(Retrospective, InvalidReasoningIsRejected) {
  struct Bad final : DecisionPolicy {
    Decision decide(std::string_view, std::span<const Post>, int round) const override { return {Action::defer, round, std::nullopt}; }
    Reasoning reason(std::string_view, std::span<const Post>) const override {
      auto r = testing::positive_reasoning(50);
      return r;
    }
  } bad;
  try {
    run_user_retrospective(user_with_posts("u", 3), bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_reasoning);
  }
  auto o = evaluate_user(user_with_posts("u", 3), bad, Mode::retrospective);
  EXPECT_EQ(o.status, ProcessingStatus::unprocessed);
  EXPECT_EQ(o.predicted_label, Label::negative);
  EXPECT_EQ(o.delay_k, 3);
}

TEST(ModeEquivalence, KeywordPolicyAgreesAcrossModes) {
  std::mt19937_64 rng(12);
  Corpus c = testing::make_corpus({25, 25, 1, 40}, 99);
  KeywordPolicy policy({"dormir", "lloro"}, 3);
  BatchOptions s, r;
  s.mode = Mode::streaming;
  r.mode = Mode::retrospective;
  auto rs = run_batch(c, policy, s);
  auto rr = run_batch(c, policy, r);
  ASSERT_EQ(rs.outcomes.size(), rr.outcomes.size());
  int positives = 0;
  for (std::size_t i = 0; i < rs.outcomes.size(); ++i) {
    EXPECT_EQ(rs.outcomes[i].predicted_label, rr.outcomes[i].predicted_label) << rs.outcomes[i].user_id;
    EXPECT_EQ(rs.outcomes[i].delay_k, rr.outcomes[i].delay_k) << rs.outcomes[i].user_id;
    positives += rs.outcomes[i].predicted_label == Label::positive;
  }
  EXPECT_GT(positives, 0);
  EXPECT_LT(positives, 50);
}

TEST(KeywordPolicy, CountsFoldedOccurrences) {
  KeywordPolicy policy({"TRISTE"}, 2);
  Post p{1, "Estoy triste, muy TRISTE. Tristeza.", std::nullopt};
  EXPECT_EQ(policy.hits(p), 3);
  EXPECT_THROW(KeywordPolicy({}, 1), Error);
  EXPECT_THROW(KeywordPolicy({"a"}, 0), Error);
}

class ScriptedFailures final : public DecisionPolicy {
 public:
  explicit ScriptedFailures(std::map<std::string, std::string> kinds) : kinds_(std::move(kinds)) {}
  Decision decide(std::string_view id, std::span<const Post> seen, int round) const override {
    raise(id);
    return {Action::defer, round, std::nullopt};
    (void)seen;
  }
  Reasoning reason(std::string_view id, std::span<const Post>) const override {
    raise(id);
    return testing::negative_reasoning();
  }

 private:
  void raise(std::string_view id) const {
    auto it = kinds_.find(std::string(id));
    if (it == kinds_.end()) return;
    if (it->second == "refusal") throw PolicyRefusal("no");
    if (it->second == "fatal") throw FatalPolicyError("down");
    throw std::runtime_error("boom");
  }
  std::map<std::string, std::string> kinds_;
};

TEST(Batch, RefusalsAndFailuresBecomeUnprocessedNegatives) {
  Corpus c = testing::make_corpus({2, 2, 3, 5}, 1);
  ScriptedFailures policy({{c.users[0].user_id, "refusal"}, {c.users[2].user_id, "error"}});
  for (Mode m : {Mode::streaming, Mode::retrospective}) {
    BatchOptions opts;
    opts.mode = m;
    auto res = run_batch(c, policy, opts);
    EXPECT_EQ(res.outcomes[0].status, ProcessingStatus::unprocessed);
    EXPECT_EQ(res.outcomes[0].predicted_label, Label::negative);
    EXPECT_EQ(res.outcomes[0].failure.rfind("refusal", 0), 0u) << res.outcomes[0].failure;
    EXPECT_EQ(res.outcomes[2].status, ProcessingStatus::unprocessed);
    EXPECT_EQ(res.outcomes[1].status, ProcessingStatus::ok);
    EXPECT_EQ(res.outcomes[3].status, ProcessingStatus::ok);
  }
}

TEST(Batch, FatalErrorAbortsAfterDeliveringCompletedOutcomes) {
  Corpus c = testing::make_corpus({3, 3, 3, 5}, 1);
  ScriptedFailures policy({{c.users[3].user_id, "fatal"}});
  std::vector<std::string> delivered;
  BatchOptions opts;
  opts.on_outcome = [&](std::size_t, const UserOutcome& o) { delivered.push_back(o.user_id); };
  EXPECT_THROW(run_batch(c, policy, opts), FatalPolicyError);
  EXPECT_EQ(delivered, (std::vector<std::string>{c.users[0].user_id, c.users[1].user_id, c.users[2].user_id}));
}

TEST(Batch, CompletedUsersAreNotReevaluated) {
  Corpus c = testing::make_corpus({2, 2, 3, 5}, 1);
  CountingPolicy policy({});
  BatchOptions opts;
  UserOutcome known;
  known.user_id = c.users[1].user_id;
  known.predicted_label = Label::positive;
  known.delay_k = 2;
  opts.completed[known.user_id] = known;
  std::size_t callbacks = 0;
  opts.on_outcome = [&](std::size_t, const UserOutcome&) { ++callbacks; };
  auto res = run_batch(c, policy, opts);
  EXPECT_EQ(policy.consultations(known.user_id), 0);
  EXPECT_EQ(callbacks, 3u);
  EXPECT_EQ(res.outcomes[1].predicted_label, Label::positive);
}

TEST(Batch, ParallelResultsKeepCorpusOrder) {
  struct Slow final : DecisionPolicy {
    Decision decide(std::string_view, std::span<const Post>, int round) const override { return {Action::defer, round, std::nullopt}; }
    Reasoning reason(std::string_view id, std::span<const Post> posts) const override {
      std::this_thread::sleep_for(std::chrono::microseconds(50 * (std::hash<std::string_view>{}(id) % 20)));
      return posts.size() % 2 ? testing::positive_reasoning(1) : testing::negative_reasoning();
    }
  } slow;
  Corpus c = testing::make_corpus({20, 20, 1, 30}, 5);
  BatchOptions one, many;
  many.parallelism = 8;
  auto a = run_batch(c, slow, one);
  auto b = run_batch(c, slow, many);
  ASSERT_EQ(a.outcomes.size(), b.outcomes.size());
  for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
    EXPECT_EQ(a.outcomes[i].user_id, c.users[i].user_id);
    EXPECT_EQ(to_json(a.outcomes[i]), to_json(b.outcomes[i]));
  }
}

TEST(Batch, RejectsEmptyCorpusAndZeroParallelism) {
  CountingPolicy policy({});
  EXPECT_THROW(run_batch(Corpus{}, policy, {}), Error);
  BatchOptions opts;
  opts.parallelism = 0;
  EXPECT_THROW(run_batch(testing::make_corpus({1, 0, 1, 1}, 1), policy, opts), Error);
}

TEST(Outcome, JsonRoundTrip) {
  UserOutcome o;
  o.user_id = "x";
  o.predicted_label = Label::positive;
  o.delay_k = 3;
  o.reasoning = testing::positive_reasoning(3);
  EXPECT_EQ(to_json(outcome_from_json(to_json(o))), to_json(o));
  UserOutcome u = unprocessed_outcome(user_with_posts("y", 4), "refusal: no");
  auto back = outcome_from_json(to_json(u));
  EXPECT_EQ(back.status, ProcessingStatus::unprocessed);
  EXPECT_EQ(back.failure, "refusal: no");
  EXPECT_EQ(back.delay_k, 4);
}

TEST(RunId, SortableTimestampWithSuffix) {
  const std::string id = make_run_id();
  ASSERT_EQ(id.size(), 23u) << id;
  EXPECT_EQ(id[8], 'T');
  EXPECT_EQ(id[15], 'Z');
  EXPECT_EQ(id[16], '-');
  EXPECT_NE(make_run_id(), make_run_id());
}

}  // namespace
}  // namespace erd

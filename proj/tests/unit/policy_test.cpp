// Copyright 2026 The Reward Audit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles/frozen_values.hpp"
#include "reward_audit/policy.hpp"

namespace ra = reward_audit;
namespace fz = reward_audit::frozen;

namespace {

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ra::RewardFn oracle_reward(const ra::SyntheticWorld& w) {
  return [&w](const ra::FeatureVector& v) { return w.true_reward(v); };
}

TEST(BanditPolicy, ProbabilitiesSumToOne) {
  ra::Rng rng(1);
  const ra::SyntheticWorld w = ra::make_world(1, ra::WorldOptions{});
  ra::BanditPolicy p{rng.normals(16), 0.7};
  for (int i = 0; i < 20; ++i) {
    const auto probs = p.probs(ra::sample_candidates(w, rng));
    double s = 0.0;
    for (double x : probs) s += x;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(PolicyKl, HandComputedTwoCandidateExample) {
  const std::vector<ra::CandidateSet> prompts{{ra::FeatureVector({1.0}), ra::FeatureVector({0.0})}};
  const ra::BanditPolicy uniform = ra::BanditPolicy::reference(1);
  const ra::BanditPolicy skewed{{std::log(3.0)}, 1.0};
  EXPECT_NEAR(ra::policy_kl(uniform, skewed, prompts), fz::kPolicyKlExample, 1e-14);
  EXPECT_EQ(ra::policy_kl(skewed, skewed, prompts), 0.0);
}

TEST(PolicyKl, NonNegativeForRandomPolicies) {
  ra::Rng rng(2);
  const ra::SyntheticWorld w = ra::make_world(2, ra::WorldOptions{});
  std::vector<ra::CandidateSet> prompts;
  for (int i = 0; i < 30; ++i) prompts.push_back(ra::sample_candidates(w, rng));
  for (int t = 0; t < 50; ++t) {
    const ra::BanditPolicy a{rng.normals(16), 1.0};
    const ra::BanditPolicy b{rng.normals(16), 0.5};
    EXPECT_GE(ra::policy_kl(a, b, prompts), 0.0);
    EXPECT_EQ(ra::policy_kl(a, a, prompts), 0.0);
  }
}

// Normalized advantages make every step about lr long, so the policy jitters
// around the reference with KL of order lr^2; lr = 0.05 keeps that below 1e-3.
TEST(TrainPolicy, HugeKlCoefficientPinsPolicyToReference) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ra::SyntheticWorld w = ra::make_world(seed, ra::WorldOptions{});
    ra::PolicyTrainConfig cfg;
    cfg.kl_coeff = 1e6;
    cfg.lr = 0.05;
    ra::Rng rng(seed);
    const ra::TrainingCurves c = ra::train_policy(oracle_reward(w), cfg, w, rng);
    EXPECT_LE(c.points.back().kl_to_reference, 1e-3) << "seed " << seed;
  }
}

TEST(TrainPolicy, OracleRewardImprovesAndCutsToxicity) {
  const ra::SyntheticWorld w = ra::make_world(4, ra::WorldOptions{});
  ra::PolicyTrainConfig cfg;
  ra::Rng rng(4);
  const ra::TrainingCurves c = ra::train_policy(oracle_reward(w), cfg, w, rng);
  ASSERT_GE(c.points.size(), 10u);
  // Three-checkpoint moving average.
  std::vector<double> smooth;
  for (std::size_t i = 0; i + 2 < c.points.size(); ++i) {
    smooth.push_back((c.points[i].reward_mean + c.points[i + 1].reward_mean +
                      c.points[i + 2].reward_mean) / 3.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) {
    EXPECT_GE(smooth[i], smooth[i - 1] - 1e-3) << "checkpoint " << i;
  }
  EXPECT_LT(c.points.back().toxicity_rate, 0.25 * c.points.front().toxicity_rate);
  for (const auto& p : c.points) EXPECT_GE(p.kl_to_reference, 0.0);
}

TEST(TrainPolicy, ZeroRewardStaysFlat) {
  const ra::SyntheticWorld w = ra::make_world(5, ra::WorldOptions{});
  ra::PolicyTrainConfig cfg;
  ra::Rng rng(5);
  const ra::TrainingCurves c =
      ra::train_policy([](const ra::FeatureVector&) { return 0.0; }, cfg, w, rng);
  for (const auto& p : c.points) {
    EXPECT_EQ(p.reward_mean, 0.0);
    EXPECT_LE(p.kl_to_reference, 0.05);
    EXPECT_NEAR(p.toxicity_rate, c.points.front().toxicity_rate, 0.02);
  }
}

TEST(TrainPolicy, CheckpointGridAndInitialState) {
  const ra::SyntheticWorld w = ra::make_world(6, ra::WorldOptions{});
  ra::PolicyTrainConfig cfg;
  cfg.steps = 25;
  cfg.eval_every = 10;
  ra::Rng rng(6);
  const ra::TrainingCurves c = ra::train_policy(oracle_reward(w), cfg, w, rng);
  std::vector<std::size_t> steps;
  for (const auto& p : c.points) steps.push_back(p.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 10, 20, 25}));
  EXPECT_EQ(c.points.front().kl_to_reference, 0.0);
}

TEST(TrainPolicy, BitReproducible) {
  const ra::SyntheticWorld w = ra::make_world(7, ra::WorldOptions{});
  ra::PolicyTrainConfig cfg;
  cfg.steps = 50;
  ra::Rng r1(7), r2(7);
  const ra::TrainingCurves a = ra::train_policy(oracle_reward(w), cfg, w, r1);
  const ra::TrainingCurves b = ra::train_policy(oracle_reward(w), cfg, w, r2);
  EXPECT_EQ(a.final_policy.weights, b.final_policy.weights);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].reward_mean, b.points[i].reward_mean);
    EXPECT_EQ(a.points[i].kl_to_reference, b.points[i].kl_to_reference);
  }
}

TEST(TrainPolicy, AffineRewardGivesSameGreedyActions) {
  const ra::SyntheticWorld w = ra::make_world(8, ra::WorldOptions{});
  ra::PolicyTrainConfig cfg;
  cfg.kl_coeff = 0.0;
  cfg.steps = 100;
  const std::vector<double> mu = w.true_theta;
  const ra::RewardFn r = [&mu](const ra::FeatureVector& v) { return ra::dot(mu, v.values()); };
  const ra::RewardFn affine = [&mu](const ra::FeatureVector& v) {
    return 3.0 * ra::dot(mu, v.values()) + 2.0;
  };
  ra::Rng r1(8), r2(8);
  const ra::TrainingCurves a = ra::train_policy(r, cfg, w, r1);
  const ra::TrainingCurves b = ra::train_policy(affine, cfg, w, r2);
  for (const auto& prompt : ra::make_eval_prompts(w, cfg)) {
    EXPECT_EQ(argmax(a.final_policy.log_probs(prompt)), argmax(b.final_policy.log_probs(prompt)));
  }
}

TEST(TrainPolicy, RejectsInvalidConfig) {
  ra::PolicyTrainConfig cfg;
  cfg.clip_epsilon = 1.0;
  EXPECT_THROW(cfg.validate(), ra::InvalidArgument);
  cfg.clip_epsilon = 0.2;
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ra::InvalidArgument);
}

TEST(CompareRuns, IdenticalCurvesPass) {
  const ra::SyntheticWorld w = ra::make_world(9, ra::WorldOptions{});
  ra::PolicyTrainConfig cfg;
  cfg.steps = 30;
  ra::Rng rng(9);
  const ra::TrainingCurves c = ra::train_policy(oracle_reward(w), cfg, w, rng);
  const ra::RunComparison cmp = ra::compare_runs(c, c);
  EXPECT_TRUE(cmp.pass);
  EXPECT_EQ(cmp.final_toxicity_gap, 0.0);
  EXPECT_EQ(cmp.max_kl_excess, 0.0);
  for (double g : cmp.oracle_reward_gap) EXPECT_EQ(g, 0.0);
}

TEST(CompareRuns, MismatchedGridsAreRejected) {
  const ra::SyntheticWorld w = ra::make_world(10, ra::WorldOptions{});
  ra::PolicyTrainConfig cfg;
  cfg.steps = 30;
  ra::Rng r1(10), r2(10);
  const ra::TrainingCurves a = ra::train_policy(oracle_reward(w), cfg, w, r1);
  cfg.steps = 40;
  const ra::TrainingCurves b = ra::train_policy(oracle_reward(w), cfg, w, r2);
  EXPECT_THROW(ra::compare_runs(a, b), ra::InvalidArgument);
}

TEST(CompareRuns, FlagsLargeToxicityGap) {
  ra::TrainingCurves a, b;
  a.points = {{0, 0.0, 0.0, 0.0, 0.2, 0.0}, {10, 0.0, 0.0, 0.1, 0.15, 0.0}};
  b.points = {{0, 0.0, 0.0, 0.0, 0.2, 0.0}, {10, 0.0, 0.0, 0.1, 0.05, 0.5}};
  const ra::RunComparison cmp = ra::compare_runs(a, b);
  EXPECT_NEAR(cmp.final_toxicity_gap, 0.10, 1e-15);
  EXPECT_NEAR(cmp.oracle_reward_gap.back(), 0.5, 1e-15);
  EXPECT_FALSE(cmp.pass);
}

}  // namespace

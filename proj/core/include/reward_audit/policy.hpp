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

// Policy-level validation on the synthetic contextual bandit: a linear-softmax
// policy over each prompt's candidates is trained with a KL-shaped,
// clipped-surrogate policy-gradient update against a frozen uniform
// reference, once per reward signal, and the resulting curves are compared.

#ifndef REWARD_AUDIT_POLICY_HPP_
#define REWARD_AUDIT_POLICY_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "reward_audit/core.hpp"
#include "reward_audit/rng.hpp"
#include "reward_audit/synthetic.hpp"

namespace reward_audit {

// p(o) proportional to exp(<weights, phi(o)> / temperature).
struct BanditPolicy {
  std::vector<double> weights;
  double temperature = 1.0;

  static BanditPolicy reference(std::size_t dim, double temperature = 1.0);

  std::vector<double> log_probs(const CandidateSet& candidates) const;
  std::vector<double> probs(const CandidateSet& candidates) const;
};

struct PolicyTrainConfig {
  double kl_coeff = 0.05;       // beta
  double clip_epsilon = 0.2;
  std::size_t steps = 300;
  std::size_t prompts_per_step = 64;
  double lr = 0.1;
  std::size_t eval_every = 10;
  std::size_t eval_prompts = 1000;
  // An update whose batch KL(old || new) exceeds 2 * target_kl is halved
  // until it fits (at most max_backtracks times, then dropped).
  double target_kl = 0.1;
  std::size_t max_backtracks = 10;
  std::size_t update_epochs = 1;  // clipped-surrogate steps per batch
  double policy_temperature = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CurvePoint {
  std::size_t step = 0;
  double reward_mean = 0.0;   // training reward, expected under the policy
  double reward_std = 0.0;
  double kl_to_reference = 0.0;
  double toxicity_rate = 0.0;       // oracle toxicity, expected under the policy
  double oracle_reward_mean = 0.0;  // oracle reward, expected under the policy
};

struct TrainingCurves {
  std::vector<CurvePoint> points;
  BanditPolicy final_policy;
  std::size_t backtracked_updates = 0;
  std::size_t dropped_updates = 0;
};

// Thrown on a non-finite policy update.
class PolicyTrainError : public AuditError {
 public:
  PolicyTrainError(const std::string& what, std::size_t step);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

using RewardFn = std::function<double(const FeatureVector&)>;

// Mean over prompts of the exact discrete KL(policy || reference).
double policy_kl(const BanditPolicy& policy, const BanditPolicy& reference,
                 std::span<const CandidateSet> prompts);

// Held-out prompt set used for every checkpoint of a run; depends only on the
// world and the config seed.
std::vector<CandidateSet> make_eval_prompts(const SyntheticWorld& world,
                                            const PolicyTrainConfig& config);

TrainingCurves train_policy(const RewardFn& reward,
                            const PolicyTrainConfig& config,
                            const SyntheticWorld& world, Rng& rng);

struct ComparisonTolerances {
  double max_final_toxicity_gap = 0.05;
  double max_kl_ratio = 2.0;
};

struct RunComparison {
  std::vector<double> oracle_reward_gap;  // oracle - inferred, per checkpoint
  double final_toxicity_gap = 0.0;        // inferred - oracle
  double max_kl_inferred = 0.0;
  double max_kl_oracle = 0.0;
  double max_kl_excess = 0.0;             // max(0, inferred - oracle)
  bool pass = false;
};

RunComparison compare_runs(const TrainingCurves& inferred,
                           const TrainingCurves& oracle,
                           const ComparisonTolerances& tolerances = {});

}  // namespace reward_audit

#endif  // REWARD_AUDIT_POLICY_HPP_

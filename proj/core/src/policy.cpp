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

#include "reward_audit/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace reward_audit {
namespace {

constexpr std::uint64_t kEvalStream = 0xE7A1;

void require_positive(const char* field, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw InvalidArgument(std::string("PolicyTrainConfig: ") + field +
                          " must be positive");
  }
}

double discrete_kl(std::span<const double> log_p, std::span<const double> log_q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    const double p = std::exp(log_p[i]);
    if (p > 0.0) kl += p * (log_p[i] - log_q[i]);
  }
  return std::max(0.0, kl);
}

// Per-candidate quantities that stay fixed for a run.
struct ScoredPrompt {
  const CandidateSet* candidates = nullptr;
  std::vector<double> reward;
  std::vector<double> oracle;
  std::vector<double> toxic;
};

CurvePoint evaluate(const BanditPolicy& policy, const BanditPolicy& reference,
                    std::span<const ScoredPrompt> prompts, std::size_t step) {
  CurvePoint pt;
  pt.step = step;
  double r1 = 0.0;
  double r2 = 0.0;
  double kl = 0.0;
  double tox = 0.0;
  double oracle = 0.0;
  for (const ScoredPrompt& sp : prompts) {
    const std::vector<double> lp = policy.log_probs(*sp.candidates);
    const std::vector<double> lq = reference.log_probs(*sp.candidates);
    kl += discrete_kl(lp, lq);
    for (std::size_t i = 0; i < lp.size(); ++i) {
      const double p = std::exp(lp[i]);
      r1 += p * sp.reward[i];
      r2 += p * sp.reward[i] * sp.reward[i];
      tox += p * sp.toxic[i];
      oracle += p * sp.oracle[i];
    }
  }
  const double n = static_cast<double>(prompts.size());
  pt.reward_mean = r1 / n;
  pt.reward_std = std::sqrt(std::max(0.0, r2 / n - pt.reward_mean * pt.reward_mean));
  pt.kl_to_reference = kl / n;
  pt.toxicity_rate = tox / n;
  pt.oracle_reward_mean = oracle / n;
  return pt;
}

ScoredPrompt score_prompt(const CandidateSet& cands, const RewardFn& reward,
                          const SyntheticWorld& world) {
  ScoredPrompt sp;
  sp.candidates = &cands;
  for (const FeatureVector& v : cands) {
    sp.reward.push_back(reward(v));
    sp.oracle.push_back(world.true_reward(v));
    sp.toxic.push_back(world.is_toxic(v) ? 1.0 : 0.0);
  }
  return sp;
}

}  // namespace

PolicyTrainError::PolicyTrainError(const std::string& what, std::size_t step)
    : AuditError(what + " at step " + std::to_string(step)), step_(step) {}

BanditPolicy BanditPolicy::reference(std::size_t dim, double temperature) {
  if (!(temperature > 0.0)) {
    throw InvalidArgument("BanditPolicy: temperature must be positive");
  }
  return BanditPolicy{std::vector<double>(dim, 0.0), temperature};
}

std::vector<double> BanditPolicy::log_probs(const CandidateSet& candidates) const {
  if (candidates.empty()) throw InvalidArgument("BanditPolicy: no candidates");
  std::vector<double> logits(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].dim() != weights.size()) {
      throw DimensionMismatch("BanditPolicy", weights.size(), candidates[i].dim());
    }
    logits[i] = dot(weights, candidates[i].values()) / temperature;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - top);
  const double log_norm = top + std::log(total);
  for (double& z : logits) z -= log_norm;
  return logits;
}

std::vector<double> BanditPolicy::probs(const CandidateSet& candidates) const {
  std::vector<double> p = log_probs(candidates);
  for (double& x : p) x = std::exp(x);
  return p;
}

void PolicyTrainConfig::validate() const {
  if (!(kl_coeff >= 0.0) || !std::isfinite(kl_coeff)) {
    throw InvalidArgument("PolicyTrainConfig: kl_coeff must be non-negative");
  }
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw InvalidArgument("PolicyTrainConfig: clip_epsilon must lie in (0, 1)");
  }
  if (steps < 1) throw InvalidArgument("PolicyTrainConfig: steps must be >= 1");
  if (prompts_per_step < 1) {
    throw InvalidArgument("PolicyTrainConfig: prompts_per_step must be >= 1");
  }
  require_positive("lr", lr);
  if (eval_every < 1) throw InvalidArgument("PolicyTrainConfig: eval_every must be >= 1");
  if (eval_prompts < 1) {
    throw InvalidArgument("PolicyTrainConfig: eval_prompts must be >= 1");
  }
  require_positive("target_kl", target_kl);
  if (update_epochs < 1) {
    throw InvalidArgument("PolicyTrainConfig: update_epochs must be >= 1");
  }
  require_positive("policy_temperature", policy_temperature);
}

double policy_kl(const BanditPolicy& policy, const BanditPolicy& reference,
                 std::span<const CandidateSet> prompts) {
  if (prompts.empty()) throw InvalidArgument("policy_kl: no prompts");
  double kl = 0.0;
  for (const CandidateSet& cands : prompts) {
    kl += discrete_kl(policy.log_probs(cands), reference.log_probs(cands));
  }
  return kl / static_cast<double>(prompts.size());
}

std::vector<CandidateSet> make_eval_prompts(const SyntheticWorld& world,
                                            const PolicyTrainConfig& config) {
  Rng rng = Rng::substream(mix64(world.seed) ^ config.seed, kEvalStream);
  std::vector<CandidateSet> prompts;
  prompts.reserve(config.eval_prompts);
  for (std::size_t i = 0; i < config.eval_prompts; ++i) {
    prompts.push_back(sample_candidates(world, rng));
  }
  return prompts;
}

TrainingCurves train_policy(const RewardFn& reward,
                            const PolicyTrainConfig& config,
                            const SyntheticWorld& world, Rng& rng) {
  config.validate();
  if (!reward) throw InvalidArgument("train_policy: empty reward function");
  const std::size_t d = world.dim;
  const BanditPolicy reference = BanditPolicy::reference(d, config.policy_temperature);
  BanditPolicy policy = reference;

  const std::vector<CandidateSet> eval_sets = make_eval_prompts(world, config);
  std::vector<ScoredPrompt> eval_prompts;
  eval_prompts.reserve(eval_sets.size());
  for (const CandidateSet& c : eval_sets) {
    eval_prompts.push_back(score_prompt(c, reward, world));
  }

  TrainingCurves curves;
  curves.points.push_back(evaluate(policy, reference, eval_prompts, 0));

  const std::size_t b = config.prompts_per_step;
  std::vector<CandidateSet> batch(b);
  std::vector<std::size_t> actions(b);
  std::vector<std::vector<double>> old_logp(b);
  std::vector<double> advantage(b);
  std::vector<double> grad(d);

  for (std::size_t step = 1; step <= config.steps; ++step) {
    double mean = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      batch[i] = sample_candidates(world, rng);
      old_logp[i] = policy.log_probs(batch[i]);
      const std::vector<double> ref_logp = reference.log_probs(batch[i]);
      const std::size_t a = softmax_choice(old_logp[i], 1.0, rng);
      actions[i] = a;
      const double r = reward(batch[i][a]);
      advantage[i] = r - config.kl_coeff * (old_logp[i][a] - ref_logp[a]);
      mean += advantage[i];
    }
    mean /= static_cast<double>(b);
    double var = 0.0;
    for (double& adv : advantage) {
      adv -= mean;
      var += adv * adv;
    }
    const double sd = std::sqrt(var / static_cast<double>(b));
    for (double& adv : advantage) adv = sd > 1e-12 ? adv / sd : 0.0;

    bool backtracked = false;
    for (std::size_t epoch = 0; epoch < config.update_epochs; ++epoch) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        const std::vector<double> logp = policy.log_probs(batch[i]);
        const std::size_t a = actions[i];
        const double ratio = std::exp(logp[a] - old_logp[i][a]);
        const double adv = advantage[i];
        // The clipped branch of min(ratio * A, clip(ratio) * A) has no gradient.
        if ((adv > 0.0 && ratio > 1.0 + config.clip_epsilon) ||
            (adv < 0.0 && ratio < 1.0 - config.clip_epsilon)) {
          continue;
        }
        // grad log pi(a) = (phi_a - E_pi[phi]) / T
        const double coeff = ratio * adv / policy.temperature;
        for (std::size_t j = 0; j < batch[i].size(); ++j) {
          const double w = (j == a ? 1.0 : 0.0) - std::exp(logp[j]);
          if (w == 0.0) continue;
          for (std::size_t k = 0; k < d; ++k) grad[k] += coeff * w * batch[i][j][k];
        }
      }
      for (double& g : grad) g /= static_cast<double>(b);
      for (double g : grad) {
        if (!std::isfinite(g)) throw PolicyTrainError("train_policy: non-finite gradient", step);
      }

      double scale = config.lr;
      bool accepted = false;
      BanditPolicy proposal = policy;
      for (std::size_t attempt = 0; attempt <= config.max_backtracks; ++attempt) {
        for (std::size_t k = 0; k < d; ++k) {
          proposal.weights[k] = policy.weights[k] + scale * grad[k];
        }
        double batch_kl = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
          batch_kl += discrete_kl(old_logp[i], proposal.log_probs(batch[i]));
        }
        batch_kl /= static_cast<double>(b);
        if (!std::isfinite(batch_kl)) {
          throw PolicyTrainError("train_policy: non-finite batch KL", step);
        }
        if (batch_kl <= 2.0 * config.target_kl) {
          accepted = true;
          break;
        }
        backtracked = true;
        scale *= 0.5;
      }
      if (!accepted) {
        ++curves.dropped_updates;
        break;
      }
      policy = std::move(proposal);
    }
    if (backtracked) ++curves.backtracked_updates;

    if (step % config.eval_every == 0 || step == config.steps) {
      curves.points.push_back(evaluate(policy, reference, eval_prompts, step));
    }
  }
  curves.final_policy = policy;
  return curves;
}

RunComparison compare_runs(const TrainingCurves& inferred,
                           const TrainingCurves& oracle,
                           const ComparisonTolerances& tolerances) {
  if (inferred.points.size() != oracle.points.size() || inferred.points.empty()) {
    throw InvalidArgument("compare_runs: checkpoint grids differ");
  }
  RunComparison cmp;
  for (std::size_t i = 0; i < inferred.points.size(); ++i) {
    if (inferred.points[i].step != oracle.points[i].step) {
      throw InvalidArgument("compare_runs: checkpoint grids differ at index " +
                            std::to_string(i));
    }
    cmp.oracle_reward_gap.push_back(oracle.points[i].oracle_reward_mean -
                                    inferred.points[i].oracle_reward_mean);
    cmp.max_kl_inferred = std::max(cmp.max_kl_inferred, inferred.points[i].kl_to_reference);
    cmp.max_kl_oracle = std::max(cmp.max_kl_oracle, oracle.points[i].kl_to_reference);
  }
  cmp.final_toxicity_gap =
      inferred.points.back().toxicity_rate - oracle.points.back().toxicity_rate;
  cmp.max_kl_excess = std::max(0.0, cmp.max_kl_inferred - cmp.max_kl_oracle);
  cmp.pass = std::abs(cmp.final_toxicity_gap) <= tolerances.max_final_toxicity_gap &&
             cmp.max_kl_inferred <= tolerances.max_kl_ratio * cmp.max_kl_oracle;
  return cmp;
}

}  // namespace reward_audit

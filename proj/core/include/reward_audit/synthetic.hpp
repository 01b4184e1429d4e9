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

// A generative stand-in for the policy pair being audited: a known linear
// ground-truth reward, candidate completions drawn per prompt, an expert that
// picks candidates by a softmax over the true reward, and a baseline that
// picks uniformly (or by its own temperature).

#ifndef REWARD_AUDIT_SYNTHETIC_HPP_
#define REWARD_AUDIT_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "reward_audit/core.hpp"
#include "reward_audit/rng.hpp"

namespace reward_audit {

struct WorldOptions {
  std::size_t dim = 16;
  // Only the first `manifold_dim` features vary; the remaining ones are
  // identically zero (features no candidate ever activates). 0 means all
  // features vary (plain standard-normal candidates).
  std::size_t manifold_dim = 0;
  std::size_t candidates_per_prompt = 8;
  double expert_temperature = 0.25;
  // nullopt: the baseline picks uniformly.
  std::optional<double> baseline_temperature;
  // nullopt: 20th percentile of the true reward over a calibration draw.
  std::optional<double> toxicity_threshold;
};

inline constexpr std::size_t kToxicityCalibrationDraws = 10000;
inline constexpr double kToxicityCalibrationQuantile = 0.2;

struct SyntheticWorld {
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  std::size_t manifold_dim = 0;
  // Axis vectors spanning the active features, stored as
  // manifold_dim vectors of length dim.
  std::vector<std::vector<double>> basis;
  std::vector<double> true_theta;  // unit norm, inside the manifold
  std::size_t candidates_per_prompt = 8;
  double expert_temperature = 0.25;
  std::optional<double> baseline_temperature;
  double toxicity_threshold = 0.0;

  double true_reward(const FeatureVector& v) const;
  bool is_toxic(const FeatureVector& v) const;
};

struct Demonstration {
  PreferencePair pair;
  double oracle_margin = 0.0;
  std::uint64_t prompt_id = 0;
  std::size_t resamples = 0;  // draws discarded because both picks coincided
};

using CandidateSet = std::vector<FeatureVector>;

SyntheticWorld make_world(std::uint64_t seed, const WorldOptions& options);

FeatureVector sample_completion(const SyntheticWorld& world, Rng& rng);
CandidateSet sample_candidates(const SyntheticWorld& world, Rng& rng);

// Index drawn with probability proportional to exp(reward / temperature);
// temperature <= 0 selects the argmax.
std::size_t softmax_choice(std::span<const double> rewards, double temperature,
                           Rng& rng);

Demonstration sample_pair(const SyntheticWorld& world, std::uint64_t prompt_id,
                          Rng& rng);

// Prompt i uses the substream (stream_seed, i), so the output does not depend
// on generation order.
std::vector<Demonstration> sample_demonstrations(const SyntheticWorld& world,
                                                 std::size_t count,
                                                 std::uint64_t stream_seed,
                                                 std::uint64_t first_prompt_id = 0);

// Fraction of fresh pairs with <theta*, margin> > 0.
double bayes_optimal_pairwise_accuracy(const SyntheticWorld& world,
                                       std::size_t n_eval, Rng& rng);

// Fraction of completions with <theta*, v> < tau*.
double toxicity_rate(const SyntheticWorld& world,
                     std::span<const FeatureVector> completions);

// Contiguous split into rounds of the given sizes; sizes must sum to at most
// the number of items.
template <typename T>
std::vector<std::vector<T>> split_rounds(std::span<const T> items,
                                         std::span<const std::size_t> sizes) {
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total > items.size()) {
    throw InvalidArgument("split_rounds: round sizes exceed the number of items");
  }
  std::vector<std::vector<T>> rounds;
  std::size_t offset = 0;
  for (std::size_t s : sizes) {
    if (s == 0) throw InvalidArgument("split_rounds: empty round");
    rounds.emplace_back(items.begin() + offset, items.begin() + offset + s);
    offset += s;
  }
  return rounds;
}

// Sizes of K near-equal rounds covering all n items; the first n % K rounds
// take one extra item.
std::vector<std::size_t> equal_round_sizes(std::size_t n, std::size_t rounds);

}  // namespace reward_audit

#endif  // REWARD_AUDIT_SYNTHETIC_HPP_

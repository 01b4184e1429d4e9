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

#include "reward_audit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace reward_audit {
namespace {

// Stream ids reserved for world construction.
constexpr std::uint64_t kThetaStream = 0xB1;
constexpr std::uint64_t kCalibrationStream = 0xB2;

// Choices redrawn on one candidate set before the set itself is redrawn.
constexpr std::size_t kChoiceRetries = 16;
constexpr std::size_t kMaxResamples = 10000;

std::vector<double> embed(const SyntheticWorld& world,
                          std::span<const double> coords) {
  if (world.manifold_dim == world.dim) {
    return std::vector<double>(coords.begin(), coords.end());
  }
  std::vector<double> out(world.dim, 0.0);
  for (std::size_t k = 0; k < world.manifold_dim; ++k) {
    for (std::size_t i = 0; i < world.dim; ++i) {
      out[i] += coords[k] * world.basis[k][i];
    }
  }
  return out;
}

double quantile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

}  // namespace

double SyntheticWorld::true_reward(const FeatureVector& v) const {
  if (v.dim() != dim) throw DimensionMismatch("true_reward", dim, v.dim());
  return dot(true_theta, v.values());
}

bool SyntheticWorld::is_toxic(const FeatureVector& v) const {
  return true_reward(v) < toxicity_threshold;
}

SyntheticWorld make_world(std::uint64_t seed, const WorldOptions& options) {
  if (options.dim < 2) throw InvalidArgument("make_world: dim must be >= 2");
  if (options.candidates_per_prompt < 2) {
    throw InvalidArgument("make_world: candidates_per_prompt must be >= 2");
  }
  if (options.manifold_dim == 1 || options.manifold_dim > options.dim) {
    throw InvalidArgument("make_world: manifold_dim must be 0 or in [2, dim]");
  }
  if (!(options.expert_temperature > 0.0)) {
    throw InvalidArgument("make_world: expert_temperature must be positive");
  }
  if (options.baseline_temperature && !(*options.baseline_temperature > 0.0)) {
    throw InvalidArgument("make_world: baseline_temperature must be positive");
  }

  SyntheticWorld w;
  w.seed = seed;
  w.dim = options.dim;
  w.manifold_dim = options.manifold_dim == 0 ? options.dim : options.manifold_dim;
  w.candidates_per_prompt = options.candidates_per_prompt;
  w.expert_temperature = options.expert_temperature;
  w.baseline_temperature = options.baseline_temperature;

  // The first manifold_dim features vary; the rest are never active.
  w.basis.assign(w.manifold_dim, std::vector<double>(w.dim, 0.0));
  for (std::size_t k = 0; k < w.manifold_dim; ++k) w.basis[k][k] = 1.0;

  Rng theta_rng = Rng::substream(seed, kThetaStream);
  std::vector<double> u;
  double n = 0.0;
  while (!(n > 1e-8)) {
    u = theta_rng.normals(w.manifold_dim);
    n = norm2(u);
  }
  for (double& x : u) x /= n;
  w.true_theta = embed(w, u);
  const double tn = norm2(w.true_theta);
  for (double& x : w.true_theta) x /= tn;

  if (options.toxicity_threshold) {
    w.toxicity_threshold = *options.toxicity_threshold;
  } else {
    Rng cal_rng = Rng::substream(seed, kCalibrationStream);
    std::vector<double> rewards(kToxicityCalibrationDraws);
    for (double& r : rewards) r = w.true_reward(sample_completion(w, cal_rng));
    w.toxicity_threshold = quantile(std::move(rewards), kToxicityCalibrationQuantile);
  }
  return w;
}

FeatureVector sample_completion(const SyntheticWorld& world, Rng& rng) {
  const std::vector<double> z = rng.normals(world.manifold_dim);
  return FeatureVector(embed(world, z));
}

CandidateSet sample_candidates(const SyntheticWorld& world, Rng& rng) {
  CandidateSet set;
  set.reserve(world.candidates_per_prompt);
  for (std::size_t c = 0; c < world.candidates_per_prompt; ++c) {
    set.push_back(sample_completion(world, rng));
  }
  return set;
}

std::size_t softmax_choice(std::span<const double> rewards, double temperature,
                           Rng& rng) {
  if (rewards.empty()) throw InvalidArgument("softmax_choice: no candidates");
  const auto best = static_cast<std::size_t>(
      std::max_element(rewards.begin(), rewards.end()) - rewards.begin());
  if (temperature <= 0.0) return best;
  std::vector<double> w(rewards.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    w[i] = std::exp((rewards[i] - rewards[best]) / temperature);
    total += w[i];
  }
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u < 0.0) return i;
  }
  return w.size() - 1;
}

Demonstration sample_pair(const SyntheticWorld& world, std::uint64_t prompt_id,
                          Rng& rng) {
  std::size_t resamples = 0;
  while (resamples <= kMaxResamples) {
    const CandidateSet cands = sample_candidates(world, rng);
    std::vector<double> rewards(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      rewards[i] = world.true_reward(cands[i]);
    }
    for (std::size_t attempt = 0; attempt < kChoiceRetries; ++attempt) {
      const std::size_t expert =
          softmax_choice(rewards, world.expert_temperature, rng);
      const std::size_t baseline =
          world.baseline_temperature
              ? softmax_choice(rewards, *world.baseline_temperature, rng)
              : rng.index(cands.size());
      if (expert != baseline) {
        return Demonstration{
            PreferencePair("pair-" + std::to_string(prompt_id), cands[expert],
                           cands[baseline]),
            rewards[expert] - rewards[baseline], prompt_id, resamples};
      }
      ++resamples;
    }
  }
  throw AuditError("sample_pair: expert and baseline keep choosing the same "
                   "candidate for prompt " + std::to_string(prompt_id));
}

std::vector<Demonstration> sample_demonstrations(const SyntheticWorld& world,
                                                 std::size_t count,
                                                 std::uint64_t stream_seed,
                                                 std::uint64_t first_prompt_id) {
  std::vector<Demonstration> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t id = first_prompt_id + i;
    Rng rng = Rng::substream(stream_seed, id);
    out.push_back(sample_pair(world, id, rng));
  }
  return out;
}

double bayes_optimal_pairwise_accuracy(const SyntheticWorld& world,
                                       std::size_t n_eval, Rng& rng) {
  if (n_eval < 1000) {
    throw InvalidArgument("bayes_optimal_pairwise_accuracy: n_eval must be >= 1000");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n_eval; ++i) {
    const Demonstration demo = sample_pair(world, i, rng);
    if (dot(world.true_theta, demo.pair.margin().values()) > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n_eval);
}

double toxicity_rate(const SyntheticWorld& world,
                     std::span<const FeatureVector> completions) {
  if (completions.empty()) throw InvalidArgument("toxicity_rate: no completions");
  std::size_t toxic = 0;
  for (const FeatureVector& v : completions) {
    if (world.is_toxic(v)) ++toxic;
  }
  return static_cast<double>(toxic) / static_cast<double>(completions.size());
}

std::vector<std::size_t> equal_round_sizes(std::size_t n, std::size_t rounds) {
  if (rounds == 0) throw InvalidArgument("equal_round_sizes: rounds must be >= 1");
  if (n < rounds) {
    throw InvalidArgument("equal_round_sizes: fewer items than rounds");
  }
  std::vector<std::size_t> sizes(rounds, n / rounds);
  for (std::size_t k = 0; k < n % rounds; ++k) ++sizes[k];
  return sizes;
}

}  // namespace reward_audit

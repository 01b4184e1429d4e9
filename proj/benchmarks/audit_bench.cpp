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

#include <benchmark/benchmark.h>

#include <vector>

#include "reward_audit/diagnostics.hpp"
#include "reward_audit/inference.hpp"
#include "reward_audit/policy.hpp"
#include "reward_audit/synthetic.hpp"

namespace ra = reward_audit;

namespace {

std::vector<ra::PreferencePair> synthetic_pairs(std::size_t n) {
  static const ra::SyntheticWorld world = ra::make_world(1, ra::WorldOptions{});
  std::vector<ra::PreferencePair> out;
  for (const auto& d : ra::sample_demonstrations(world, n, 2)) out.push_back(d.pair);
  return out;
}

void BM_ElboGradient(benchmark::State& state) {
  const auto pairs = synthetic_pairs(256);
  std::vector<std::size_t> batch(pairs.size());
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
  const ra::DiagGaussian prior = ra::DiagGaussian::isotropic(16, 0.0, 1.0);
  const ra::VIState s = ra::VIState::from_gaussian(prior);
  ra::Rng rng(3);
  std::vector<std::vector<double>> noise(static_cast<std::size_t>(state.range(0)));
  for (auto& n : noise) n = rng.normals(16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ra::elbo_gradient(s, prior, pairs, batch, 1000, 1.0, noise));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_ElboGradient)->Arg(1)->Arg(16);

void BM_FitSingleRound(benchmark::State& state) {
  const auto pairs = synthetic_pairs(1000);
  ra::AuditConfig cfg;
  const ra::DiagGaussian prior = ra::DiagGaussian::isotropic(16, 0.0, 1.0);
  for (auto _ : state) {
    ra::Rng rng(4);
    benchmark::DoNotOptimize(ra::fit_single_round(pairs, prior, cfg, rng));
  }
}
BENCHMARK(BM_FitSingleRound)->Unit(benchmark::kMillisecond);

void BM_DecomposeUncertainty(benchmark::State& state) {
  const auto pairs = synthetic_pairs(1);
  const ra::DiagGaussian post = ra::DiagGaussian::isotropic(16, 0.1, 0.3);
  const ra::LogitSource src = ra::PairwiseSource{pairs[0].margin(), 1.0};
  ra::Rng rng(5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ra::decompose_uncertainty(post, src, static_cast<std::size_t>(state.range(0)), rng));
  }
}
BENCHMARK(BM_DecomposeUncertainty)->Arg(256)->Arg(4096);

void BM_CalibrationSuite(benchmark::State& state) {
  ra::Rng rng(6);
  std::vector<double> p(static_cast<std::size_t>(state.range(0)));
  std::vector<int> y(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = rng.uniform();
    y[i] = rng.uniform() < p[i] ? 1 : 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(ra::calibration_suite(p, y));
}
BENCHMARK(BM_CalibrationSuite)->Arg(4000)->Arg(100000);

void BM_TrainPolicy(benchmark::State& state) {
  const ra::SyntheticWorld world = ra::make_world(7, ra::WorldOptions{});
  ra::PolicyTrainConfig cfg;
  const ra::RewardFn reward = [&world](const ra::FeatureVector& v) {
    return world.true_reward(v);
  };
  for (auto _ : state) {
    ra::Rng rng(8);
    benchmark::DoNotOptimize(ra::train_policy(reward, cfg, world, rng));
  }
}
BENCHMARK(BM_TrainPolicy)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

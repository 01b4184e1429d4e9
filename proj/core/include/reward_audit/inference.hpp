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

// Variational Bayesian IRL over linear reward weights with a Bradley-Terry
// preference likelihood, fitted by reparameterized minibatch ELBO ascent,
// and the sequential posterior-as-prior audit built on top of it.

#ifndef REWARD_AUDIT_INFERENCE_HPP_
#define REWARD_AUDIT_INFERENCE_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reward_audit/core.hpp"
#include "reward_audit/rng.hpp"

namespace reward_audit {

// Variational parameters (mu, log_std) together with Adam's moment
// accumulators. Moments are laid out as [mu..., log_std...].
struct VIState {
  std::vector<double> mu;
  std::vector<double> log_std;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step_count = 0;

  // Fresh state centred on `init` with zeroed moments.
  static VIState from_gaussian(const DiagGaussian& init);

  std::size_t dim() const { return mu.size(); }
  DiagGaussian posterior() const;
};

struct RoundResult {
  std::size_t round_index = 1;  // 1-based
  DiagGaussian posterior;
  std::vector<double> log_std;  // exact optimizer parameters behind posterior
  double contraction = 0.0;     // log_det_diag(posterior)
  std::vector<std::pair<std::size_t, double>> elbo_trace;
};

// Thrown when the ELBO or its gradient stops being finite.
class FitError : public AuditError {
 public:
  FitError(const std::string& what, std::size_t step, double mu_norm,
           double log_std_norm);

  std::size_t step() const { return step_; }
  double mu_norm() const { return mu_norm_; }
  double log_std_norm() const { return log_std_norm_; }

 private:
  std::size_t step_;
  double mu_norm_;
  double log_std_norm_;
};

// Adam constants.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// Spacing, in steps, of the smoothed ELBO trace.
inline constexpr std::size_t kElboTraceEvery = 50;

// alpha * <theta, margin>.
double pairwise_logit(std::span<const double> theta, const PreferencePair& pair,
                      double alpha);

struct ElboGradient {
  double elbo = 0.0;
  std::vector<double> d_mu;
  std::vector<double> d_log_std;
};

// Minibatch ELBO estimate
//   (M/|B|) sum_{i in B} mean_s log sigmoid(alpha theta_s^T margin_i)
//     - KL(q || prior),  theta_s = mu + exp(log_std) * noise_s.
// `batch` indexes into `pool` (with repetition allowed). With
// total_pairs == 0 the likelihood term is dropped and the result is -KL.
double elbo_estimate(const VIState& state, const DiagGaussian& prior,
                     std::span<const PreferencePair> pool,
                     std::span<const std::size_t> batch,
                     std::size_t total_pairs, double alpha,
                     std::span<const std::vector<double>> noise);

// Convenience overload: every pair of `batch` is used once.
double elbo_estimate(const VIState& state, const DiagGaussian& prior,
                     std::span<const PreferencePair> batch,
                     std::size_t total_pairs, double alpha,
                     std::span<const std::vector<double>> noise);

// Same estimate plus its analytic gradient with respect to (mu, log_std).
ElboGradient elbo_gradient(const VIState& state, const DiagGaussian& prior,
                           std::span<const PreferencePair> pool,
                           std::span<const std::size_t> batch,
                           std::size_t total_pairs, double alpha,
                           std::span<const std::vector<double>> noise);

// One Adam step on (mu, log_std) for a loss gradient laid out as
// [d_mu..., d_log_std...]. Throws FitError on a non-finite gradient.
VIState adam_update(const VIState& state, std::span<const double> gradient,
                    double lr);

// Stochastic ELBO ascent for vi_steps steps, initialized at the prior.
RoundResult fit_single_round(std::span<const PreferencePair> pairs,
                             const DiagGaussian& prior,
                             const AuditConfig& config, Rng& rng,
                             std::size_t round_index = 1);

// Rounds are fitted in order; round k > 1 uses round k-1's posterior as its
// prior. Round 1 uses N(0, prior_std^2 I).
std::vector<RoundResult> run_sequential_audit(
    std::span<const std::vector<PreferencePair>> rounds,
    const AuditConfig& config, Rng& rng);

}  // namespace reward_audit

#endif  // REWARD_AUDIT_INFERENCE_HPP_

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

#include "reward_audit/inference.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>
#include <utility>

namespace reward_audit {
namespace {

bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_elbo_inputs(const VIState& state, const DiagGaussian& prior,
                       std::span<const PreferencePair> pool,
                       std::span<const std::size_t> batch,
                       std::size_t total_pairs,
                       std::span<const std::vector<double>> noise) {
  const std::size_t d = state.dim();
  if (prior.dim() != d) throw DimensionMismatch("elbo: prior", d, prior.dim());
  if (state.log_std.size() != d) {
    throw DimensionMismatch("elbo: log_std", d, state.log_std.size());
  }
  if (noise.empty()) throw InvalidArgument("elbo: at least one noise draw required");
  for (const auto& eps : noise) {
    if (eps.size() != d) throw DimensionMismatch("elbo: noise", d, eps.size());
  }
  if (total_pairs == 0) return;
  if (batch.empty()) throw InvalidArgument("elbo: empty batch");
  if (total_pairs < batch.size()) {
    throw InvalidArgument("elbo: total_pairs smaller than the batch");
  }
  for (std::size_t idx : batch) {
    if (idx >= pool.size()) throw InvalidArgument("elbo: batch index out of range");
    if (pool[idx].dim() != d) {
      throw DimensionMismatch("elbo: pair", d, pool[idx].dim());
    }
  }
}

// KL(q || prior) and its gradient, accumulated with the likelihood part.
ElboGradient evaluate(const VIState& state, const DiagGaussian& prior,
                      std::span<const PreferencePair> pool,
                      std::span<const std::size_t> batch,
                      std::size_t total_pairs, double alpha,
                      std::span<const std::vector<double>> noise,
                      bool want_gradient) {
  check_elbo_inputs(state, prior, pool, batch, total_pairs, noise);
  const std::size_t d = state.dim();
  ElboGradient out;
  out.d_mu.assign(want_gradient ? d : 0, 0.0);
  out.d_log_std.assign(want_gradient ? d : 0, 0.0);

  std::vector<double> sigma(d);
  for (std::size_t i = 0; i < d; ++i) sigma[i] = std::exp(state.log_std[i]);

  double loglik = 0.0;
  if (total_pairs > 0) {
    const double scale = static_cast<double>(total_pairs) /
                         static_cast<double>(batch.size()) /
                         static_cast<double>(noise.size());
    std::vector<double> theta(d);
    std::vector<double> grad_theta(d);
    for (const auto& eps : noise) {
      for (std::size_t i = 0; i < d; ++i) {
        theta[i] = state.mu[i] + sigma[i] * eps[i];
      }
      std::fill(grad_theta.begin(), grad_theta.end(), 0.0);
      double draw_loglik = 0.0;
      for (std::size_t idx : batch) {
        const std::span<const double> margin = pool[idx].margin().values();
        const double z = alpha * dot(theta, margin);
        draw_loglik += log_sigmoid(z);
        if (want_gradient) {
          // d/dtheta log sigmoid(z) = (1 - sigmoid(z)) * alpha * margin
          const double w = sigmoid(-z) * alpha;
          for (std::size_t i = 0; i < d; ++i) grad_theta[i] += w * margin[i];
        }
      }
      loglik += draw_loglik;
      if (want_gradient) {
        for (std::size_t i = 0; i < d; ++i) {
          out.d_mu[i] += scale * grad_theta[i];
          out.d_log_std[i] += scale * grad_theta[i] * sigma[i] * eps[i];
        }
      }
    }
    loglik *= scale;
  }

  double kl = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double prior_sd = prior.std()[i];
    const double ratio = sigma[i] / prior_sd;
    const double diff = (state.mu[i] - prior.mean()[i]) / prior_sd;
    kl += 0.5 * (ratio * ratio + diff * diff - 1.0) - std::log(ratio);
    if (want_gradient) {
      out.d_mu[i] -= diff / prior_sd;
      out.d_log_std[i] -= ratio * ratio - 1.0;
    }
  }
  out.elbo = loglik - kl;
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

FitError::FitError(const std::string& what, std::size_t step, double mu_norm,
                   double log_std_norm)
    : AuditError(what + " at step " + std::to_string(step) +
                 " (|mu| = " + std::to_string(mu_norm) +
                 ", |log_std| = " + std::to_string(log_std_norm) + ")"),
      step_(step),
      mu_norm_(mu_norm),
      log_std_norm_(log_std_norm) {}

VIState VIState::from_gaussian(const DiagGaussian& init) {
  VIState state;
  state.mu.assign(init.mean().begin(), init.mean().end());
  state.log_std.resize(init.dim());
  for (std::size_t i = 0; i < init.dim(); ++i) {
    state.log_std[i] = std::log(init.std()[i]);
  }
  state.first_moment.assign(2 * init.dim(), 0.0);
  state.second_moment.assign(2 * init.dim(), 0.0);
  return state;
}

DiagGaussian VIState::posterior() const {
  std::vector<double> sd(log_std.size());
  for (std::size_t i = 0; i < sd.size(); ++i) sd[i] = std::exp(log_std[i]);
  return DiagGaussian(mu, std::move(sd));
}

double pairwise_logit(std::span<const double> theta, const PreferencePair& pair,
                      double alpha) {
  if (theta.size() != pair.dim()) {
    throw DimensionMismatch("pairwise_logit", theta.size(), pair.dim());
  }
  return alpha * dot(theta, pair.margin().values());
}

double elbo_estimate(const VIState& state, const DiagGaussian& prior,
                     std::span<const PreferencePair> pool,
                     std::span<const std::size_t> batch,
                     std::size_t total_pairs, double alpha,
                     std::span<const std::vector<double>> noise) {
  return evaluate(state, prior, pool, batch, total_pairs, alpha, noise, false)
      .elbo;
}

double elbo_estimate(const VIState& state, const DiagGaussian& prior,
                     std::span<const PreferencePair> batch,
                     std::size_t total_pairs, double alpha,
                     std::span<const std::vector<double>> noise) {
  const std::vector<std::size_t> idx = all_indices(batch.size());
  return elbo_estimate(state, prior, batch, idx, total_pairs, alpha, noise);
}

ElboGradient elbo_gradient(const VIState& state, const DiagGaussian& prior,
                           std::span<const PreferencePair> pool,
                           std::span<const std::size_t> batch,
                           std::size_t total_pairs, double alpha,
                           std::span<const std::vector<double>> noise) {
  return evaluate(state, prior, pool, batch, total_pairs, alpha, noise, true);
}

VIState adam_update(const VIState& state, std::span<const double> gradient,
                    double lr) {
  const std::size_t d = state.dim();
  if (gradient.size() != 2 * d) {
    throw DimensionMismatch("adam_update: gradient", 2 * d, gradient.size());
  }
  if (state.first_moment.size() != 2 * d || state.second_moment.size() != 2 * d) {
    throw DimensionMismatch("adam_update: moments", 2 * d,
                            state.first_moment.size());
  }
  const std::size_t step = state.step_count + 1;
  if (!all_finite(gradient)) {
    throw FitError("adam_update: non-finite gradient", step, norm2(state.mu),
                   norm2(state.log_std));
  }
  VIState next = state;
  next.step_count = step;
  const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  for (std::size_t j = 0; j < 2 * d; ++j) {
    const double g = gradient[j];
    double& m = next.first_moment[j];
    double& v = next.second_moment[j];
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
    const double update = lr * (m / bias1) / (std::sqrt(v / bias2) + kAdamEpsilon);
    if (j < d) {
      next.mu[j] -= update;
    } else {
      next.log_std[j - d] -= update;
    }
  }
  return next;
}

RoundResult fit_single_round(std::span<const PreferencePair> pairs,
                             const DiagGaussian& prior,
                             const AuditConfig& config, Rng& rng,
                             std::size_t round_index) {
  config.validate();
  if (pairs.empty()) throw InvalidArgument("fit_single_round: no pairs");
  const std::size_t d = prior.dim();
  for (const PreferencePair& p : pairs) {
    if (p.dim() != d) throw DimensionMismatch("fit_single_round: pair", d, p.dim());
  }

  const std::size_t m = pairs.size();
  const bool full_batch = m <= config.batch_size;
  std::vector<std::size_t> batch =
      full_batch ? all_indices(m) : std::vector<std::size_t>(config.batch_size);
  std::vector<std::vector<double>> noise(config.elbo_samples,
                                         std::vector<double>(d));
  std::vector<double> loss_gradient(2 * d);

  VIState state = VIState::from_gaussian(prior);
  RoundResult result;
  result.round_index = round_index;

  double window_sum = 0.0;
  std::size_t window_count = 0;
  for (std::size_t t = 1; t <= config.vi_steps; ++t) {
    if (!full_batch) {
      for (std::size_t& idx : batch) idx = rng.index(m);
    }
    for (auto& eps : noise) {
      for (double& e : eps) e = rng.normal();
    }
    const ElboGradient g = elbo_gradient(state, prior, pairs, batch, m,
                                         config.alpha, noise);
    if (!std::isfinite(g.elbo)) {
      throw FitError("fit_single_round: non-finite ELBO", t, norm2(state.mu),
                     norm2(state.log_std));
    }
    for (std::size_t i = 0; i < d; ++i) {
      loss_gradient[i] = -g.d_mu[i];
      loss_gradient[d + i] = -g.d_log_std[i];
    }
    state = adam_update(state, loss_gradient, config.learning_rate);

    window_sum += g.elbo;
    ++window_count;
    if (t % kElboTraceEvery == 0 || t == config.vi_steps) {
      result.elbo_trace.emplace_back(t, window_sum / static_cast<double>(window_count));
      window_sum = 0.0;
      window_count = 0;
    }
  }

  result.posterior = state.posterior();
  result.log_std = state.log_std;
  result.contraction = log_det_diag(result.posterior);
  return result;
}

std::vector<RoundResult> run_sequential_audit(
    std::span<const std::vector<PreferencePair>> rounds,
    const AuditConfig& config, Rng& rng) {
  config.validate();
  if (rounds.empty()) throw InvalidArgument("run_sequential_audit: no rounds");
  std::unordered_set<std::string> seen;
  for (std::size_t k = 0; k < rounds.size(); ++k) {
    if (rounds[k].empty()) {
      throw InvalidArgument("run_sequential_audit: round " + std::to_string(k + 1) +
                            " is empty");
    }
    for (const PreferencePair& p : rounds[k]) {
      if (!seen.insert(p.pair_id()).second) {
        throw InvalidArgument("run_sequential_audit: pair '" + p.pair_id() +
                              "' appears in more than one round");
      }
    }
  }

  const std::size_t d = rounds.front().front().dim();
  DiagGaussian prior = DiagGaussian::isotropic(d, 0.0, config.prior_std);
  std::vector<RoundResult> results;
  results.reserve(rounds.size());
  for (std::size_t k = 0; k < rounds.size(); ++k) {
    try {
      results.push_back(fit_single_round(rounds[k], prior, config, rng, k + 1));
    } catch (const FitError& e) {
      throw FitError("round " + std::to_string(k + 1) + ": " + e.what(), e.step(),
                     e.mu_norm(), e.log_std_norm());
    }
    prior = results.back().posterior;
  }
  return results;
}

}  // namespace reward_audit

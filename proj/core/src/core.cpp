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

#include "reward_audit/core.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace reward_audit {
namespace {

void require_same_dim(const char* what, std::size_t expected,
                      std::size_t actual) {
  if (expected != actual) throw DimensionMismatch(what, expected, actual);
}

}  // namespace

FeatureVector::FeatureVector(std::vector<double> values)
    : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw InvalidArgument("FeatureVector: non-finite entry at index " +
                            std::to_string(i));
    }
  }
}

FeatureVector FeatureVector::zeros(std::size_t dim) {
  return FeatureVector(std::vector<double>(dim, 0.0));
}

FeatureVector add_scaled(const FeatureVector& a, const FeatureVector& b,
                         double scale) {
  require_same_dim("add_scaled", a.dim(), b.dim());
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + scale * b[i];
  return FeatureVector(std::move(out));
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim("dot", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

PreferencePair::PreferencePair(std::string pair_id, FeatureVector preferred,
                               FeatureVector rejected)
    : pair_id_(std::move(pair_id)),
      preferred_(std::move(preferred)),
      rejected_(std::move(rejected)) {
  require_same_dim("PreferencePair", preferred_.dim(), rejected_.dim());
  std::vector<double> margin(preferred_.dim());
  for (std::size_t i = 0; i < margin.size(); ++i) {
    margin[i] = preferred_[i] - rejected_[i];
  }
  margin_ = FeatureVector(std::move(margin));
}

PreferencePair PreferencePair::swapped() const {
  return PreferencePair(pair_id_, rejected_, preferred_);
}

DiagGaussian::DiagGaussian(std::vector<double> mean, std::vector<double> std)
    : mean_(std::move(mean)), std_(std::move(std)) {
  require_same_dim("DiagGaussian", mean_.size(), std_.size());
  for (std::size_t i = 0; i < std_.size(); ++i) {
    if (!std::isfinite(mean_[i])) {
      throw InvalidArgument("DiagGaussian: non-finite mean at index " +
                            std::to_string(i));
    }
    if (!(std_[i] > 0.0) || !std::isfinite(std_[i])) {
      throw InvalidArgument("DiagGaussian: std must be positive and finite at index " +
                            std::to_string(i));
    }
  }
}

DiagGaussian DiagGaussian::isotropic(std::size_t dim, double mean, double std) {
  return DiagGaussian(std::vector<double>(dim, mean),
                      std::vector<double>(dim, std));
}

void AuditConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(std::string("AuditConfig: ") + name +
                            " must be positive");
    }
  };
  auto at_least_one = [](std::size_t v, const char* name) {
    if (v == 0) {
      throw InvalidArgument(std::string("AuditConfig: ") + name +
                            " must be at least 1");
    }
  };
  positive(alpha, "alpha");
  positive(prior_std, "prior_std");
  positive(learning_rate, "learning_rate");
  at_least_one(batch_size, "batch_size");
  at_least_one(vi_steps, "vi_steps");
  at_least_one(rounds, "rounds");
  at_least_one(mc_samples, "mc_samples");
  at_least_one(elbo_samples, "elbo_samples");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double diag_gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  require_same_dim("diag_gaussian_kl", p.dim(), q.dim());
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double ratio = q.std()[i] / p.std()[i];
    const double diff = (q.mean()[i] - p.mean()[i]) / p.std()[i];
    kl += 0.5 * (ratio * ratio + diff * diff - 1.0) - std::log(ratio);
  }
  return kl;
}

std::vector<double> reparam_sample(const DiagGaussian& g,
                                   std::span<const double> noise) {
  require_same_dim("reparam_sample", g.dim(), noise.size());
  std::vector<double> theta(g.dim());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] = g.mean()[i] + g.std()[i] * noise[i];
  }
  return theta;
}

double log_det_diag(const DiagGaussian& g) {
  double s = 0.0;
  for (double sd : g.std()) s += 2.0 * std::log(sd);
  return s;
}

StandardizationStats standardize_fit(std::span<const FeatureVector> pool) {
  if (pool.empty()) throw InvalidArgument("standardize_fit: empty pool");
  const std::size_t d = pool.front().dim();
  StandardizationStats stats;
  stats.per_dim_mean.assign(d, 0.0);
  stats.per_dim_std.assign(d, 0.0);
  for (const FeatureVector& v : pool) {
    require_same_dim("standardize_fit", d, v.dim());
    for (std::size_t i = 0; i < d; ++i) stats.per_dim_mean[i] += v[i];
  }
  const double n = static_cast<double>(pool.size());
  for (double& m : stats.per_dim_mean) m /= n;
  for (const FeatureVector& v : pool) {
    for (std::size_t i = 0; i < d; ++i) {
      const double c = v[i] - stats.per_dim_mean[i];
      stats.per_dim_std[i] += c * c;
    }
  }
  for (double& s : stats.per_dim_std) s = std::max(std::sqrt(s / n), kStdFloor);
  return stats;
}

FeatureVector standardize_apply(const StandardizationStats& stats,
                                const FeatureVector& v) {
  require_same_dim("standardize_apply", stats.dim(), v.dim());
  std::vector<double> out(v.dim());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (v[i] - stats.per_dim_mean[i]) / stats.per_dim_std[i];
  }
  return FeatureVector(std::move(out));
}

PreferencePair standardize_apply(const StandardizationStats& stats,
                                 const PreferencePair& pair) {
  return PreferencePair(pair.pair_id(), standardize_apply(stats, pair.preferred()),
                        standardize_apply(stats, pair.rejected()));
}

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidArgument("binary_entropy: p outside [0, 1]");
  }
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

}  // namespace reward_audit

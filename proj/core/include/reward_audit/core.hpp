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

// Domain types and exact probability / linear-algebra primitives shared by
// every other module. Everything here is a pure function of its arguments.

#ifndef REWARD_AUDIT_CORE_HPP_
#define REWARD_AUDIT_CORE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reward_audit/errors.hpp"

namespace reward_audit {

// Floor applied to per-dimension standard deviations during standardization.
inline constexpr double kStdFloor = 1e-6;

// A d-dimensional embedding of one completion. Entries are always finite.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<double> values);

  static FeatureVector zeros(std::size_t dim);

  std::size_t dim() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& vec() const { return values_; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<double> values_;
};

// a + scale * b, elementwise.
FeatureVector add_scaled(const FeatureVector& a, const FeatureVector& b,
                         double scale);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Matched (preferred, rejected) features with the cached margin
// preferred - rejected.
class PreferencePair {
 public:
  PreferencePair(std::string pair_id, FeatureVector preferred,
                 FeatureVector rejected);

  const std::string& pair_id() const { return pair_id_; }
  const FeatureVector& preferred() const { return preferred_; }
  const FeatureVector& rejected() const { return rejected_; }
  const FeatureVector& margin() const { return margin_; }
  std::size_t dim() const { return margin_.dim(); }

  // The same comparison presented in the opposite order.
  PreferencePair swapped() const;

 private:
  std::string pair_id_;
  FeatureVector preferred_;
  FeatureVector rejected_;
  FeatureVector margin_;
};

// Mean-field Gaussian N(mean, diag(std^2)).
class DiagGaussian {
 public:
  DiagGaussian() = default;
  DiagGaussian(std::vector<double> mean, std::vector<double> std);

  static DiagGaussian isotropic(std::size_t dim, double mean, double std);

  std::size_t dim() const { return mean_.size(); }
  std::span<const double> mean() const { return mean_; }
  std::span<const double> std() const { return std_; }

  friend bool operator==(const DiagGaussian&, const DiagGaussian&) = default;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

struct StandardizationStats {
  std::vector<double> per_dim_mean;
  std::vector<double> per_dim_std;  // floored at kStdFloor

  std::size_t dim() const { return per_dim_mean.size(); }
};

struct AuditConfig {
  double alpha = 1.0;          // Bradley-Terry temperature
  double prior_std = 1.0;      // isotropic prior scale for round 1
  double learning_rate = 1e-2;
  std::size_t batch_size = 256;
  std::size_t vi_steps = 3000;
  std::size_t rounds = 5;
  std::size_t mc_samples = 256;   // posterior draws for uncertainty estimates
  std::size_t elbo_samples = 1;   // reparameterized draws per ELBO step
  std::uint64_t seed = 0;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

double sigmoid(double x);
double log_sigmoid(double x);

// Closed-form KL(q || p) between diagonal Gaussians.
double diag_gaussian_kl(const DiagGaussian& q, const DiagGaussian& p);

// mean + std * noise, elementwise.
std::vector<double> reparam_sample(const DiagGaussian& g,
                                   std::span<const double> noise);

// log det diag(std^2) = sum_i 2 ln std_i.
double log_det_diag(const DiagGaussian& g);

StandardizationStats standardize_fit(std::span<const FeatureVector> pool);
FeatureVector standardize_apply(const StandardizationStats& stats,
                                const FeatureVector& v);
PreferencePair standardize_apply(const StandardizationStats& stats,
                                 const PreferencePair& pair);

// Entropy of a Bernoulli(p) label in nats.
double binary_entropy(double p);

}  // namespace reward_audit

#endif  // REWARD_AUDIT_CORE_HPP_

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

// Trust diagnostics for a fitted reward posterior: the entropy /
// mutual-information decomposition of predictive uncertainty, Mahalanobis
// out-of-distribution scoring, spurious-feature probes, and the calibration
// metric suite used to score pairwise and single-text predictions.

#ifndef REWARD_AUDIT_DIAGNOSTICS_HPP_
#define REWARD_AUDIT_DIAGNOSTICS_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "reward_audit/core.hpp"
#include "reward_audit/rng.hpp"

namespace reward_audit {

struct UncertaintyReport {
  double total_entropy = 0.0;   // H[mean_s p_s]
  double aleatoric = 0.0;       // mean_s H[p_s]
  double epistemic = 0.0;       // total - aleatoric, clamped at 0
  double epistemic_raw = 0.0;   // total - aleatoric before clamping
  double mean_probability = 0.5;
  std::size_t mc_samples_used = 0;
};

// Shrinkage added to every per-dimension variance of the OOD model.
inline constexpr double kOodVarianceReg = 1e-3;

struct OODModel {
  std::vector<double> center;
  std::vector<double> precision_diag;
};

struct PlattParams {
  double a = 1.0;
  double b = 0.0;
};

struct PlattFit {
  PlattParams params;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

class PlattNonConvergence : public AuditError {
 public:
  explicit PlattNonConvergence(const PlattFit& capped);
  const PlattFit& capped_fit() const { return capped_; }
  double gradient_norm() const { return capped_.gradient_norm; }

 private:
  PlattFit capped_;
};

inline constexpr std::size_t kPlattMaxIterations = 100;
inline constexpr double kPlattGradientTolerance = 1e-8;
inline constexpr std::size_t kReliabilityBins = 10;

struct ReliabilityBin {
  double bin_center = 0.0;
  double mean_confidence = 0.0;
  double empirical_accuracy = 0.0;
  std::size_t count = 0;
};

// Components computed directly from (probability, label) pairs. Metrics that
// need both classes are nullopt when only one class is present.
struct CalibrationMetrics {
  double brier = 0.0;
  double ece = 0.0;
  std::optional<double> auroc;
  double accuracy = 0.0;
  std::optional<double> f1;
  std::vector<ReliabilityBin> reliability_bins;
};

struct CalibrationReport {
  double pairwise_accuracy = 0.0;
  std::optional<double> auroc;
  double brier = 0.0;
  double ece = 0.0;
  std::optional<double> f1;
  double single_accuracy = 0.0;
  double platt_a = 1.0;
  double platt_b = 0.0;
  double threshold = 0.0;
  std::vector<ReliabilityBin> reliability_bins;
};

// Where per-draw preference probabilities come from.
struct PairwiseSource {
  FeatureVector margin;
  double alpha = 1.0;
};
// One completion scored on its own: p_s = sigmoid(a * (-theta_s^T phi) + b),
// the probability that the completion is toxic.
struct SingleTextSource {
  FeatureVector features;
  PlattParams platt;
};
using LogitSource = std::variant<PairwiseSource, SingleTextSource>;

// Per-draw probabilities for explicit standard-normal noise draws.
std::vector<double> draw_probabilities(const DiagGaussian& posterior,
                                       const LogitSource& source,
                                       std::span<const std::vector<double>> noise);

// Posterior-predictive mean (1/S) sum_s sigmoid(alpha theta_s^T margin).
double predictive_preference_prob(const DiagGaussian& posterior,
                                  const PreferencePair& pair, double alpha,
                                  std::size_t mc, Rng& rng);

// Plug-in decomposition on a fixed set of per-draw probabilities.
UncertaintyReport decompose_probabilities(std::span<const double> probs);

UncertaintyReport decompose_uncertainty(const DiagGaussian& posterior,
                                        const LogitSource& source,
                                        std::size_t mc, Rng& rng);

OODModel ood_fit(std::span<const FeatureVector> pool);
double ood_distance(const OODModel& model, const FeatureVector& v);

// <mean, v> and Var_theta[theta^T v] = sum_i std_i^2 v_i^2.
double reward_score(const DiagGaussian& posterior, const FeatureVector& v);
double reward_variance(const DiagGaussian& posterior, const FeatureVector& v);

// Principal subspace of a feature pool and its orthogonal complement.
struct PrincipalSplit {
  std::size_t rank = 0;              // directions kept in the principal part
  double explained_fraction = 0.0;   // variance share of those directions
  std::vector<FeatureVector> complement;  // orthonormal, may be empty only if d == 1
};

// Keeps the fewest leading principal directions explaining at least
// `explained` of the pool variance, capped at d - 1 so that the complement is
// never empty. Throws InvalidArgument on a zero-variance pool.
PrincipalSplit principal_split(std::span<const FeatureVector> pool,
                               double explained = 0.95);

// Uniformly random unit vector in span(split.complement).
FeatureVector sample_off_manifold_direction(const PrincipalSplit& split,
                                            Rng& rng);

struct SpuriousProbeResult {
  std::vector<UncertaintyReport> clean;
  std::vector<UncertaintyReport> marked;
  double mean_clean_epistemic = 0.0;
  double mean_marked_epistemic = 0.0;
  std::size_t wins = 0;    // marked > clean
  std::size_t losses = 0;  // marked < clean
  std::size_t ties = 0;
  double sign_test_p = 1.0;  // one-sided, ties dropped
};

// Injects magnitude * direction into every base input and compares the
// pairwise epistemic uncertainty of clean and marked variants. Clean and
// marked variants of one input share their posterior draws.
SpuriousProbeResult spurious_probe(const DiagGaussian& posterior,
                                   std::span<const FeatureVector> base_inputs,
                                   const FeatureVector& direction,
                                   double magnitude, double alpha,
                                   std::size_t mc, Rng& rng);

// P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p_value(std::size_t wins, std::size_t losses);

// Rank-statistic AUROC with tied scores sharing the average rank.
std::optional<double> auroc(std::span<const double> scores,
                            std::span<const int> labels);

struct ThresholdMetrics {
  double accuracy = 0.0;
  std::optional<double> f1;
};
// Predicts positive when score > threshold.
ThresholdMetrics classify_at_threshold(std::span<const double> scores,
                                       std::span<const int> labels,
                                       double threshold);

// Brier, 10-bin ECE, AUROC, and accuracy/F1 of probs > decision_threshold.
CalibrationMetrics calibration_suite(std::span<const double> probs,
                                     std::span<const int> labels,
                                     double decision_threshold = 0.5);

// ECE recomputed from reliability bins.
double ece_from_bins(std::span<const ReliabilityBin> bins);

// Maximum-likelihood logistic map sigmoid(a * score + b) by damped Newton.
PlattFit platt_fit(std::span<const double> scores, std::span<const int> labels);
double platt_apply(double a, double b, double score);

// F1-maximizing threshold over midpoints of consecutive unique scores;
// ties go to the lower threshold.
double select_threshold(std::span<const double> scores,
                        std::span<const int> labels);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace reward_audit

#endif  // REWARD_AUDIT_DIAGNOSTICS_HPP_

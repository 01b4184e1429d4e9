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

#include "reward_audit/diagnostics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

namespace reward_audit {
namespace {

void require_pairs(const char* what, std::size_t a, std::size_t b) {
  if (a != b) throw DimensionMismatch(what, a, b);
  if (a == 0) throw InvalidArgument(std::string(what) + ": empty input");
}

void require_labels(const char* what, std::span<const int> labels) {
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw InvalidArgument(std::string(what) + ": labels must be 0 or 1");
    }
  }
}

bool has_both_classes(std::span<const int> labels) {
  bool pos = false;
  bool neg = false;
  for (int y : labels) {
    pos = pos || y == 1;
    neg = neg || y == 0;
  }
  return pos && neg;
}

// 1-based ranks, ties get their average rank.
std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double logit_for(const LogitSource& source, std::span<const double> theta) {
  if (const auto* pw = std::get_if<PairwiseSource>(&source)) {
    return pw->alpha * dot(theta, pw->margin.values());
  }
  const auto& st = std::get<SingleTextSource>(source);
  // Positive class is toxic, which corresponds to low reward.
  return st.platt.a * -dot(theta, st.features.values()) + st.platt.b;
}

std::size_t source_dim(const LogitSource& source) {
  if (const auto* pw = std::get_if<PairwiseSource>(&source)) return pw->margin.dim();
  return std::get<SingleTextSource>(source).features.dim();
}

std::vector<std::vector<double>> draw_noise(std::size_t count, std::size_t dim,
                                            Rng& rng) {
  std::vector<std::vector<double>> noise(count);
  for (auto& eps : noise) eps = rng.normals(dim);
  return noise;
}

}  // namespace

PlattNonConvergence::PlattNonConvergence(const PlattFit& capped)
    : AuditError("platt_fit: no convergence after " +
                 std::to_string(capped.iterations) +
                 " iterations (gradient norm " +
                 std::to_string(capped.gradient_norm) + ")"),
      capped_(capped) {}

std::vector<double> draw_probabilities(
    const DiagGaussian& posterior, const LogitSource& source,
    std::span<const std::vector<double>> noise) {
  const std::size_t d = posterior.dim();
  if (source_dim(source) != d) {
    throw DimensionMismatch("draw_probabilities", d, source_dim(source));
  }
  std::vector<double> probs;
  probs.reserve(noise.size());
  for (const auto& eps : noise) {
    const std::vector<double> theta = reparam_sample(posterior, eps);
    probs.push_back(sigmoid(logit_for(source, theta)));
  }
  return probs;
}

double predictive_preference_prob(const DiagGaussian& posterior,
                                  const PreferencePair& pair, double alpha,
                                  std::size_t mc, Rng& rng) {
  if (mc < 1) throw InvalidArgument("predictive_preference_prob: mc must be >= 1");
  if (pair.dim() != posterior.dim()) {
    throw DimensionMismatch("predictive_preference_prob", posterior.dim(),
                            pair.dim());
  }
  const auto noise = draw_noise(mc, posterior.dim(), rng);
  const std::vector<double> probs =
      draw_probabilities(posterior, PairwiseSource{pair.margin(), alpha}, noise);
  double sum = 0.0;
  for (double p : probs) sum += p;
  return sum / static_cast<double>(probs.size());
}

UncertaintyReport decompose_probabilities(std::span<const double> probs) {
  if (probs.empty()) throw InvalidArgument("decompose_probabilities: no draws");
  double mean = 0.0;
  double aleatoric = 0.0;
  for (double p : probs) {
    mean += p;
    aleatoric += binary_entropy(p);
  }
  const double n = static_cast<double>(probs.size());
  mean = std::clamp(mean / n, 0.0, 1.0);
  aleatoric /= n;

  UncertaintyReport r;
  r.total_entropy = binary_entropy(mean);
  r.aleatoric = aleatoric;
  r.epistemic_raw = r.total_entropy - r.aleatoric;
  r.epistemic = std::max(0.0, r.epistemic_raw);
  r.mean_probability = mean;
  r.mc_samples_used = probs.size();
  return r;
}

UncertaintyReport decompose_uncertainty(const DiagGaussian& posterior,
                                        const LogitSource& source,
                                        std::size_t mc, Rng& rng) {
  if (mc < 2) throw InvalidArgument("decompose_uncertainty: mc must be >= 2");
  const auto noise = draw_noise(mc, posterior.dim(), rng);
  return decompose_probabilities(draw_probabilities(posterior, source, noise));
}

OODModel ood_fit(std::span<const FeatureVector> pool) {
  if (pool.size() < 2) throw InvalidArgument("ood_fit: pool needs at least 2 points");
  const std::size_t d = pool.front().dim();
  OODModel model;
  model.center.assign(d, 0.0);
  for (const FeatureVector& v : pool) {
    if (v.dim() != d) throw DimensionMismatch("ood_fit", d, v.dim());
    for (std::size_t i = 0; i < d; ++i) model.center[i] += v[i];
  }
  const double n = static_cast<double>(pool.size());
  for (double& c : model.center) c /= n;
  std::vector<double> var(d, 0.0);
  for (const FeatureVector& v : pool) {
    for (std::size_t i = 0; i < d; ++i) {
      const double dv = v[i] - model.center[i];
      var[i] += dv * dv;
    }
  }
  model.precision_diag.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    model.precision_diag[i] = 1.0 / (var[i] / n + kOodVarianceReg);
  }
  return model;
}

double ood_distance(const OODModel& model, const FeatureVector& v) {
  if (v.dim() != model.center.size()) {
    throw DimensionMismatch("ood_distance", model.center.size(), v.dim());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < v.dim(); ++i) {
    const double dv = v[i] - model.center[i];
    s += dv * dv * model.precision_diag[i];
  }
  return std::sqrt(s);
}

double reward_score(const DiagGaussian& posterior, const FeatureVector& v) {
  if (v.dim() != posterior.dim()) {
    throw DimensionMismatch("reward_score", posterior.dim(), v.dim());
  }
  return dot(posterior.mean(), v.values());
}

double reward_variance(const DiagGaussian& posterior, const FeatureVector& v) {
  if (v.dim() != posterior.dim()) {
    throw DimensionMismatch("reward_variance", posterior.dim(), v.dim());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < v.dim(); ++i) {
    const double t = posterior.std()[i] * v[i];
    s += t * t;
  }
  return s;
}

PrincipalSplit principal_split(std::span<const FeatureVector> pool,
                               double explained) {
  if (pool.size() < 2) {
    throw InvalidArgument("principal_split: pool needs at least 2 points");
  }
  if (!(explained > 0.0 && explained <= 1.0)) {
    throw InvalidArgument("principal_split: explained must lie in (0, 1]");
  }
  const std::size_t d = pool.front().dim();
  const auto n = static_cast<Eigen::Index>(pool.size());
  const auto di = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd x(n, di);
  for (Eigen::Index r = 0; r < n; ++r) {
    const FeatureVector& v = pool[static_cast<std::size_t>(r)];
    if (v.dim() != d) throw DimensionMismatch("principal_split", d, v.dim());
    for (Eigen::Index c = 0; c < di; ++c) x(r, c) = v[static_cast<std::size_t>(c)];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw AuditError("principal_split: eigendecomposition failed");
  }
  // Eigen returns ascending eigenvalues; walk them from the top.
  const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);
  const double total = values.sum();
  if (!(total > 0.0)) throw InvalidArgument("principal_split: pool has rank 0");

  PrincipalSplit split;
  double kept = 0.0;
  std::size_t rank = 0;
  while (rank < d) {
    kept += values(di - 1 - static_cast<Eigen::Index>(rank));
    ++rank;
    if (kept >= explained * total) break;
  }
  if (d > 1 && rank > d - 1) {
    kept -= values(0);
    rank = d - 1;
  }
  split.rank = rank;
  split.explained_fraction = std::min(1.0, kept / total);
  for (std::size_t k = rank; k < d; ++k) {
    const Eigen::VectorXd col = eig.eigenvectors().col(di - 1 - static_cast<Eigen::Index>(k));
    split.complement.emplace_back(std::vector<double>(col.data(), col.data() + col.size()));
  }
  return split;
}

FeatureVector sample_off_manifold_direction(const PrincipalSplit& split,
                                            Rng& rng) {
  if (split.complement.empty()) {
    throw InvalidArgument("sample_off_manifold_direction: empty complement");
  }
  const std::size_t d = split.complement.front().dim();
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<double> dir(d, 0.0);
    for (const FeatureVector& basis : split.complement) {
      const double c = rng.normal();
      for (std::size_t i = 0; i < d; ++i) dir[i] += c * basis[i];
    }
    const double n = norm2(dir);
    if (n > 1e-12) {
      for (double& x : dir) x /= n;
      return FeatureVector(std::move(dir));
    }
  }
  throw AuditError("sample_off_manifold_direction: degenerate draws");
}

SpuriousProbeResult spurious_probe(const DiagGaussian& posterior,
                                   std::span<const FeatureVector> base_inputs,
                                   const FeatureVector& direction,
                                   double magnitude, double alpha,
                                   std::size_t mc, Rng& rng) {
  if (base_inputs.empty()) throw InvalidArgument("spurious_probe: no inputs");
  if (direction.dim() != posterior.dim()) {
    throw DimensionMismatch("spurious_probe: direction", posterior.dim(),
                            direction.dim());
  }
  if (std::abs(norm2(direction.values()) - 1.0) > 1e-9) {
    throw InvalidArgument("spurious_probe: direction must have unit norm");
  }
  if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) {
    throw InvalidArgument("spurious_probe: magnitude must be non-negative");
  }
  if (mc < 2) throw InvalidArgument("spurious_probe: mc must be >= 2");

  SpuriousProbeResult out;
  out.clean.reserve(base_inputs.size());
  out.marked.reserve(base_inputs.size());
  for (const FeatureVector& base : base_inputs) {
    const auto noise = draw_noise(mc, posterior.dim(), rng);
    const FeatureVector marked = add_scaled(base, direction, magnitude);
    out.clean.push_back(decompose_probabilities(
        draw_probabilities(posterior, PairwiseSource{base, alpha}, noise)));
    out.marked.push_back(decompose_probabilities(
        draw_probabilities(posterior, PairwiseSource{marked, alpha}, noise)));
    const double c = out.clean.back().epistemic;
    const double m = out.marked.back().epistemic;
    out.mean_clean_epistemic += c;
    out.mean_marked_epistemic += m;
    if (m > c) {
      ++out.wins;
    } else if (m < c) {
      ++out.losses;
    } else {
      ++out.ties;
    }
  }
  const double n = static_cast<double>(base_inputs.size());
  out.mean_clean_epistemic /= n;
  out.mean_marked_epistemic /= n;
  out.sign_test_p = sign_test_p_value(out.wins, out.losses);
  return out;
}

double sign_test_p_value(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  // P(X >= wins) for X ~ Binomial(n, 1/2), summed in log space.
  const double ln_half_n = static_cast<double>(n) * std::log(0.5);
  const double ln_n_fact = std::lgamma(static_cast<double>(n) + 1.0);
  double acc = 0.0;
  for (std::size_t k = wins; k <= n; ++k) {
    const double ln_term = ln_n_fact - std::lgamma(static_cast<double>(k) + 1.0) -
                           std::lgamma(static_cast<double>(n - k) + 1.0) +
                           ln_half_n;
    acc += std::exp(ln_term);
  }
  return std::min(1.0, acc);
}

std::optional<double> auroc(std::span<const double> scores,
                            std::span<const int> labels) {
  require_pairs("auroc", scores.size(), labels.size());
  require_labels("auroc", labels);
  if (!has_both_classes(labels)) return std::nullopt;
  const std::vector<double> ranks = average_ranks(scores);
  double pos_rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos_rank_sum += ranks[i];
      n_pos += 1.0;
    }
  }
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

ThresholdMetrics classify_at_threshold(std::span<const double> scores,
                                       std::span<const int> labels,
                                       double threshold) {
  require_pairs("classify_at_threshold", scores.size(), labels.size());
  require_labels("classify_at_threshold", labels);
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] > threshold ? 1 : 0;
    if (pred == labels[i]) ++correct;
    if (pred == 1 && labels[i] == 1) ++tp;
    if (pred == 1 && labels[i] == 0) ++fp;
    if (pred == 0 && labels[i] == 1) ++fn;
  }
  ThresholdMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
  if (has_both_classes(labels)) {
    m.f1 = 2.0 * static_cast<double>(tp) /
           static_cast<double>(2 * tp + fp + fn);
  }
  return m;
}

CalibrationMetrics calibration_suite(std::span<const double> probs,
                                     std::span<const int> labels,
                                     double decision_threshold) {
  require_pairs("calibration_suite", probs.size(), labels.size());
  require_labels("calibration_suite", labels);
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidArgument("calibration_suite: probabilities must lie in [0, 1]");
    }
  }

  CalibrationMetrics m;
  const double n = static_cast<double>(probs.size());
  std::vector<double> conf_sum(kReliabilityBins, 0.0);
  std::vector<double> label_sum(kReliabilityBins, 0.0);
  std::vector<std::size_t> counts(kReliabilityBins, 0);
  double brier = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double err = probs[i] - labels[i];
    brier += err * err;
    auto bin = static_cast<std::size_t>(probs[i] * kReliabilityBins);
    bin = std::min(bin, kReliabilityBins - 1);
    conf_sum[bin] += probs[i];
    label_sum[bin] += labels[i];
    ++counts[bin];
  }
  m.brier = brier / n;
  m.reliability_bins.resize(kReliabilityBins);
  for (std::size_t b = 0; b < kReliabilityBins; ++b) {
    ReliabilityBin& rb = m.reliability_bins[b];
    rb.bin_center = (static_cast<double>(b) + 0.5) / kReliabilityBins;
    rb.count = counts[b];
    if (counts[b] > 0) {
      rb.mean_confidence = conf_sum[b] / static_cast<double>(counts[b]);
      rb.empirical_accuracy = label_sum[b] / static_cast<double>(counts[b]);
    }
  }
  m.ece = ece_from_bins(m.reliability_bins);
  m.auroc = auroc(probs, labels);
  const ThresholdMetrics t = classify_at_threshold(probs, labels, decision_threshold);
  m.accuracy = t.accuracy;
  m.f1 = t.f1;
  return m;
}

double ece_from_bins(std::span<const ReliabilityBin> bins) {
  std::size_t total = 0;
  for (const ReliabilityBin& b : bins) total += b.count;
  if (total == 0) throw InvalidArgument("ece_from_bins: no samples");
  double ece = 0.0;
  for (const ReliabilityBin& b : bins) {
    ece += static_cast<double>(b.count) / static_cast<double>(total) *
           std::abs(b.mean_confidence - b.empirical_accuracy);
  }
  return ece;
}

PlattFit platt_fit(std::span<const double> scores, std::span<const int> labels) {
  require_pairs("platt_fit", scores.size(), labels.size());
  require_labels("platt_fit", labels);
  if (!has_both_classes(labels)) {
    throw InvalidArgument("platt_fit: both classes are required");
  }
  const double n = static_cast<double>(scores.size());

  // Mean Bernoulli log-likelihood with its gradient and Hessian in (a, b).
  struct Eval {
    double loglik = 0.0;
    double ga = 0.0, gb = 0.0;
    double haa = 0.0, hab = 0.0, hbb = 0.0;
  };
  auto evaluate = [&](double a, double b) {
    Eval e;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s = scores[i];
      const double z = a * s + b;
      const double p = sigmoid(z);
      const double r = labels[i] - p;
      e.loglik += labels[i] == 1 ? log_sigmoid(z) : log_sigmoid(-z);
      e.ga += r * s;
      e.gb += r;
      const double w = p * (1.0 - p);
      e.haa += w * s * s;
      e.hab += w * s;
      e.hbb += w;
    }
    e.loglik /= n;
    e.ga /= n;
    e.gb /= n;
    e.haa /= n;
    e.hab /= n;
    e.hbb /= n;
    return e;
  };

  PlattFit fit;
  fit.params = PlattParams{0.0, 0.0};
  Eval cur = evaluate(fit.params.a, fit.params.b);
  double last_step = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < kPlattMaxIterations; ++it) {
    fit.gradient_norm = std::hypot(cur.ga, cur.gb);
    fit.iterations = it;
    // A vanishing gradient alone is not enough: under separation the
    // likelihood flattens while the Newton step stays large.
    if (fit.gradient_norm <= kPlattGradientTolerance && last_step <= 1e-6) {
      fit.converged = true;
      return fit;
    }
    const double ridge = 1e-12;
    const double haa = cur.haa + ridge;
    const double hbb = cur.hbb + ridge;
    const double det = haa * hbb - cur.hab * cur.hab;
    double da = (hbb * cur.ga - cur.hab * cur.gb) / det;
    double db = (haa * cur.gb - cur.hab * cur.ga) / det;
    if (!std::isfinite(da) || !std::isfinite(db)) {
      da = cur.ga;
      db = cur.gb;
    }
    double step = 1.0;
    Eval next;
    for (int halving = 0; halving < 60; ++halving) {
      next = evaluate(fit.params.a + step * da, fit.params.b + step * db);
      if (next.loglik >= cur.loglik) break;
      step *= 0.5;
    }
    fit.params.a += step * da;
    fit.params.b += step * db;
    last_step = step * std::hypot(da, db);
    cur = next;
  }
  fit.gradient_norm = std::hypot(cur.ga, cur.gb);
  fit.iterations = kPlattMaxIterations;
  if (fit.gradient_norm <= kPlattGradientTolerance && last_step <= 1e-6) {
    fit.converged = true;
    return fit;
  }
  throw PlattNonConvergence(fit);
}

double platt_apply(double a, double b, double score) {
  return sigmoid(a * score + b);
}

double select_threshold(std::span<const double> scores,
                        std::span<const int> labels) {
  require_pairs("select_threshold", scores.size(), labels.size());
  require_labels("select_threshold", labels);
  if (!has_both_classes(labels)) {
    throw InvalidArgument("select_threshold: both classes are required");
  }
  std::vector<double> unique(scores.begin(), scores.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (unique.size() == 1) return unique.front();

  double best_threshold = 0.0;
  double best_f1 = -1.0;
  for (std::size_t i = 0; i + 1 < unique.size(); ++i) {
    const double thr = 0.5 * (unique[i] + unique[i + 1]);
    const double f1 = *classify_at_threshold(scores, labels, thr).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = thr;
    }
  }
  return best_threshold;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_pairs("pearson", x.size(), y.size());
  if (x.size() < 2) throw InvalidArgument("pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw InvalidArgument("pearson: zero variance input");
  }
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require_pairs("spearman", x.size(), y.size());
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace reward_audit

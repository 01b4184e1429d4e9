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

// Test-only numerical oracles. Nothing here calls into the library, so the
// checks built on them are independent of the code under test.

#ifndef REWARD_AUDIT_TESTS_ORACLES_HPP_
#define REWARD_AUDIT_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace reward_audit::oracle {

// Composite Simpson rule on [lo, hi] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double lo,
                      double hi, std::size_t n = 20000) {
  if (n % 2 == 1) ++n;
  const double h = (hi - lo) / static_cast<double>(n);
  double s = f(lo) + f(hi);
  for (std::size_t i = 1; i < n; ++i) {
    s += f(lo + h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return s * h / 3.0;
}

inline double normal_log_pdf(double x, double m, double s) {
  const double z = (x - m) / s;
  return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// KL(N(mq, sq^2) || N(mp, sp^2)) by quadrature of q log(q/p).
inline double kl_by_quadrature(double mq, double sq, double mp, double sp) {
  auto f = [&](double x) {
    const double lq = normal_log_pdf(x, mq, sq);
    return std::exp(lq) * (lq - normal_log_pdf(x, mp, sp));
  };
  return simpson(f, mq - 14.0 * sq, mq + 14.0 * sq, 40000);
}

inline double stable_log_sigmoid(double z) {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

struct GridMoments {
  double mean = 0.0;
  double std = 0.0;
};

// Exact 1-d posterior moments for a Bradley-Terry likelihood over scalar
// margins under a N(prior_mean, prior_std^2) prior, by dense grid integration.
inline GridMoments grid_posterior_1d(const std::vector<double>& margins,
                                     double alpha, double prior_mean,
                                     double prior_std, double lo = -10.0,
                                     double hi = 10.0, std::size_t n = 200001) {
  std::vector<double> logp(n);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = lo + h * static_cast<double>(i);
    double lp = normal_log_pdf(t, prior_mean, prior_std);
    for (double m : margins) lp += stable_log_sigmoid(alpha * t * m);
    logp[i] = lp;
    top = std::max(top, lp);
  }
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = lo + h * static_cast<double>(i);
    const double w = std::exp(logp[i] - top);
    z += w;
    m1 += w * t;
    m2 += w * t * t;
  }
  GridMoments out;
  out.mean = m1 / z;
  out.std = std::sqrt(std::max(0.0, m2 / z - out.mean * out.mean));
  return out;
}

// Central finite difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t i,
                                 double h = 1e-5) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

// AUROC as the fraction of (positive, negative) pairs ordered correctly,
// ties counting one half.
inline double auroc_by_pairs(const std::vector<double>& scores,
                             const std::vector<int>& labels) {
  double good = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      total += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / total;
}

inline double f1_at(const std::vector<double>& scores, const std::vector<int>& labels,
                    double thr) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > thr;
    if (pred && labels[i] == 1) tp += 1;
    if (pred && labels[i] == 0) fp += 1;
    if (!pred && labels[i] == 1) fn += 1;
  }
  return 2 * tp / (2 * tp + fp + fn);
}

}  // namespace reward_audit::oracle

#endif  // REWARD_AUDIT_TESTS_ORACLES_HPP_

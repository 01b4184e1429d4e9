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

#include "reward_audit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include "json.hpp"
#include "reward_audit/diagnostics.hpp"
#include "reward_audit/inference.hpp"
#include "reward_audit/io.hpp"

namespace reward_audit {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Substream tags; each stage draws from its own streams so stages can be
// rerun independently.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kHeldoutStream = 2;
constexpr std::uint64_t kValidationStream = 3;
constexpr std::uint64_t kTestStream = 4;
constexpr std::uint64_t kAuditStream = 5;
constexpr std::uint64_t kPairMcStream = 6;
constexpr std::uint64_t kTextMcStream = 7;
constexpr std::uint64_t kProbeStream = 8;
constexpr std::uint64_t kPolicyStream = 9;
constexpr std::uint64_t kOracleStream = 10;

// ---------------------------------------------------------------------------
// Config parsing

class Section {
 public:
  Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) {
      throw InvalidArgument("config: '" + name() + "' must be an object");
    }
  }

  void allow(std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items()) {
      if (!allowed.count(k)) {
        throw InvalidArgument("config: unknown key '" + prefix_ + k + "'");
      }
    }
  }

  void get(const char* key, double& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) type_error(key, "a number");
    out = v.get<double>();
  }

  void get(const char* key, std::size_t& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) type_error(key, "a non-negative integer");
    out = v.get<std::size_t>();
  }

  void get_u64(const char* key, std::uint64_t& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) type_error(key, "a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void get(const char* key, std::optional<double>& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (v.is_null()) {
      out.reset();
      return;
    }
    if (!v.is_number()) type_error(key, "a number or null");
    out = v.get<double>();
  }

  void get(const char* key, std::string& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) type_error(key, "a string");
    out = v.get<std::string>();
  }

  void get(const char* key, std::vector<std::size_t>& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) type_error(key, "an array of integers");
    out.clear();
    for (const json& x : v) {
      if (!x.is_number_unsigned()) type_error(key, "an array of integers");
      out.push_back(x.get<std::size_t>());
    }
  }

  const json* child(const char* key) const {
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  std::string name() const {
    return prefix_.empty() ? std::string("<root>") : prefix_.substr(0, prefix_.size() - 1);
  }
  [[noreturn]] void type_error(const char* key, const char* expected) const {
    throw InvalidArgument("config: '" + prefix_ + key + "' must be " + expected);
  }

  const json& j_;
  std::string prefix_;
};

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

// ---------------------------------------------------------------------------
// Stage plumbing

struct Paths {
  fs::path dir;
  fs::path world() const { return dir / "world.json"; }
  fs::path train_pairs() const { return dir / "train_pairs.jsonl"; }
  fs::path heldout_pairs() const { return dir / "heldout_pairs.jsonl"; }
  fs::path validation() const { return dir / "completions_validation.jsonl"; }
  fs::path test() const { return dir / "completions_test.jsonl"; }
  fs::path standardization() const { return dir / "standardization.json"; }
  fs::path checkpoint(std::size_t k) const {
    return dir / ("checkpoint_round_" + std::to_string(k) + ".json");
  }
  fs::path elbo_trace() const { return dir / "elbo_trace.csv"; }
  fs::path metrics() const { return dir / "metrics.json"; }
  fs::path reliability(std::size_t k) const {
    return dir / ("reliability_round_" + std::to_string(k) + ".csv");
  }
  fs::path curves_oracle() const { return dir / "curves_oracle.csv"; }
  fs::path curves_round(std::size_t k) const {
    return dir / ("curves_round_" + std::to_string(k) + ".csv");
  }
  fs::path comparison() const { return dir / "comparison.json"; }
  fs::path report() const { return dir / "report.json"; }
  fs::path timings() const { return dir / "timings.json"; }
};

fs::path input_or(const std::string& external, const fs::path& generated) {
  return external.empty() ? generated : fs::path(external);
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw AuditError("missing artifact '" + path.string() +
                     "'; run the earlier stages first");
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw AuditError("'" + path.string() + "': " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AuditError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void require_fresh(const fs::path& path, const std::string& found,
                   const std::string& expected) {
  if (found != expected) {
    throw AuditError("stale artifact '" + path.filename().string() +
                     "' (config digest " + found + ", current " + expected +
                     "); rerun the stage that produces it");
  }
}

void record_timing(const Paths& paths, Stage stage, double seconds) {
  json t = json::object();
  if (fs::exists(paths.timings())) {
    try {
      t = read_json(paths.timings());
    } catch (const AuditError&) {
      t = json::object();
    }
  }
  t[stage_name(stage)] = seconds;
  write_json(paths.timings(), t);
}

// Runs fn(i) for i in [0, n) on `threads` workers with a static partition.
// Each index writes only its own output slot, so results are thread-count
// independent.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (std::thread& w : workers) w.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t num_rounds(const PipelineConfig& config) {
  return config.data.round_sizes.empty() ? config.audit.rounds
                                         : config.data.round_sizes.size();
}

std::vector<Checkpoint> load_checkpoints(const Paths& paths, std::size_t rounds,
                                         const std::string& digest) {
  std::vector<Checkpoint> out;
  for (std::size_t k = 1; k <= rounds; ++k) {
    if (!fs::exists(paths.checkpoint(k))) {
      throw AuditError("missing artifact '" + paths.checkpoint(k).string() +
                       "'; run the audit stage first");
    }
    out.push_back(read_checkpoint(paths.checkpoint(k)));
    require_fresh(paths.checkpoint(k), out.back().config_digest, digest);
  }
  return out;
}

SyntheticWorld load_world(const Paths& paths, const std::string& digest) {
  if (!fs::exists(paths.world())) {
    throw AuditError("missing artifact '" + paths.world().string() +
                     "'; run the gen stage first");
  }
  std::string found;
  SyntheticWorld w = read_world(paths.world(), &found);
  require_fresh(paths.world(), found, digest);
  return w;
}

StandardizationStats load_standardization(const Paths& paths,
                                          const std::string& digest) {
  if (!fs::exists(paths.standardization())) {
    throw AuditError("missing artifact '" + paths.standardization().string() +
                     "'; run the audit stage first");
  }
  std::string found;
  StandardizationStats s = read_standardization(paths.standardization(), &found);
  require_fresh(paths.standardization(), found, digest);
  return s;
}

std::vector<FeatureVector> pair_pool(std::span<const PreferencePair> pairs) {
  std::vector<FeatureVector> pool;
  pool.reserve(2 * pairs.size());
  for (const PreferencePair& p : pairs) {
    pool.push_back(p.preferred());
    pool.push_back(p.rejected());
  }
  return pool;
}

std::vector<PreferencePair> standardized(const StandardizationStats& stats,
                                         std::span<const PreferencePair> pairs) {
  std::vector<PreferencePair> out;
  out.reserve(pairs.size());
  for (const PreferencePair& p : pairs) out.push_back(standardize_apply(stats, p));
  return out;
}

std::vector<Completion> make_completions(const SyntheticWorld& world,
                                         std::size_t n, std::uint64_t seed,
                                         std::uint64_t stream,
                                         const std::string& prefix) {
  Rng rng = Rng::substream(seed, stream);
  std::vector<Completion> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector v = sample_completion(world, rng);
    const int toxic = world.is_toxic(v) ? 1 : 0;
    out.push_back(Completion{prefix + std::to_string(i), std::move(v), toxic});
  }
  return out;
}

json optional_metric(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json bins_json(std::span<const ReliabilityBin> bins) {
  json a = json::array();
  for (const ReliabilityBin& b : bins) {
    a.push_back({{"bin_center", b.bin_center},
                 {"mean_confidence", b.mean_confidence},
                 {"empirical_accuracy", b.empirical_accuracy},
                 {"count", b.count}});
  }
  return a;
}

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------
// Stages

void stage_gen(const PipelineConfig& config, const Paths& paths,
               const std::string& digest) {
  const SyntheticWorld world = make_world(config.seed, config.world);
  write_world(paths.world(), world, digest);

  const std::vector<Demonstration> train = sample_demonstrations(
      world, config.data.train_pairs, mix64(config.seed ^ kTrainStream), 0);
  write_demonstrations_jsonl(paths.train_pairs(), train);
  const std::vector<Demonstration> heldout =
      sample_demonstrations(world, config.data.heldout_pairs,
                            mix64(config.seed ^ kHeldoutStream), config.data.train_pairs);
  write_demonstrations_jsonl(paths.heldout_pairs(), heldout);

  write_completions(paths.validation(),
                    make_completions(world, config.data.validation_completions,
                                     config.seed, kValidationStream, "val-"));
  write_completions(paths.test(), make_completions(world, config.data.test_completions,
                                                   config.seed, kTestStream, "test-"));
}

void stage_audit(const PipelineConfig& config, const Paths& paths,
                 const std::string& digest) {
  load_world(paths, digest);
  const std::vector<PreferencePair> raw =
      ingest_pairs(input_or(config.data.train_pairs_path, paths.train_pairs()));
  const std::vector<std::size_t> sizes =
      config.data.round_sizes.empty()
          ? equal_round_sizes(raw.size(), config.audit.rounds)
          : config.data.round_sizes;
  if (sizes.front() > raw.size()) {
    throw InvalidArgument("round sizes exceed the number of training pairs");
  }
  // Frozen on the round-1 pool, then applied to every later input.
  const StandardizationStats stats = standardize_fit(
      pair_pool(std::span<const PreferencePair>(raw).first(sizes.front())));
  write_standardization(paths.standardization(), stats, digest);
  const std::vector<PreferencePair> pairs = standardized(stats, raw);
  const auto rounds = split_rounds<PreferencePair>(pairs, sizes);

  Rng rng = Rng::substream(config.seed, kAuditStream);
  const std::vector<RoundResult> results =
      run_sequential_audit(rounds, config.audit, rng);

  std::ofstream trace(paths.elbo_trace(), std::ios::binary | std::ios::trunc);
  if (!trace) throw AuditError("cannot write '" + paths.elbo_trace().string() + "'");
  trace << "round,step,elbo\n";
  for (const RoundResult& r : results) {
    write_checkpoint(paths.checkpoint(r.round_index), make_checkpoint(r, digest));
    for (const auto& [step, elbo] : r.elbo_trace) {
      trace << r.round_index << ',' << step << ',' << json(elbo).dump() << '\n';
    }
  }
  // Checkpoints from an earlier run with more rounds would be mistaken for
  // this run's output.
  for (std::size_t k = results.size() + 1; fs::exists(paths.checkpoint(k)); ++k) {
    fs::remove(paths.checkpoint(k));
  }
}

struct PairwiseEval {
  std::vector<double> prob;       // predictive P(preferred first wins)
  std::vector<double> epistemic;
};

PairwiseEval evaluate_pairs(const DiagGaussian& posterior,
                            std::span<const PreferencePair> pairs,
                            const PipelineConfig& config, std::size_t round,
                            std::size_t threads) {
  PairwiseEval out;
  out.prob.resize(pairs.size());
  out.epistemic.resize(pairs.size());
  const std::uint64_t stream_seed = mix64(config.seed ^ kPairMcStream) + round;
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    Rng rng = Rng::substream(stream_seed, i);
    const UncertaintyReport r = decompose_uncertainty(
        posterior, PairwiseSource{pairs[i].margin(), config.audit.alpha},
        config.audit.mc_samples, rng);
    out.prob[i] = r.mean_probability;
    out.epistemic[i] = r.epistemic;
  });
  return out;
}

json single_text_block(const DiagGaussian& posterior,
                       std::span<const Completion> validation,
                       std::span<const Completion> test,
                       const StandardizationStats& stats,
                       const PipelineConfig& config, std::size_t round,
                       std::size_t threads) {
  std::vector<double> val_scores;
  std::vector<int> val_labels;
  for (const Completion& c : validation) {
    val_scores.push_back(-reward_score(posterior, standardize_apply(stats, c.features)));
    val_labels.push_back(c.toxic);
  }
  PlattFit fit;
  bool capped = false;
  try {
    fit = platt_fit(val_scores, val_labels);
  } catch (const PlattNonConvergence& e) {
    fit = e.capped_fit();
    capped = true;
  }
  std::vector<double> val_probs;
  for (double s : val_scores) val_probs.push_back(platt_apply(fit.params.a, fit.params.b, s));
  const double threshold = select_threshold(val_probs, val_labels);

  std::vector<FeatureVector> test_features;
  std::vector<double> test_probs;
  std::vector<int> test_labels;
  for (const Completion& c : test) {
    test_features.push_back(standardize_apply(stats, c.features));
    test_probs.push_back(platt_apply(fit.params.a, fit.params.b,
                                     -reward_score(posterior, test_features.back())));
    test_labels.push_back(c.toxic);
  }
  const CalibrationMetrics cal = calibration_suite(test_probs, test_labels, threshold);

  std::vector<double> entropy(test.size());
  std::vector<double> epistemic(test.size());
  const std::uint64_t stream_seed = mix64(config.seed ^ kTextMcStream) + round;
  parallel_for(test.size(), threads, [&](std::size_t i) {
    Rng rng = Rng::substream(stream_seed, i);
    const UncertaintyReport r = decompose_uncertainty(
        posterior, SingleTextSource{test_features[i], fit.params},
        config.audit.mc_samples, rng);
    entropy[i] = r.total_entropy;
    epistemic[i] = r.epistemic;
  });

  return {{"platt_a", fit.params.a},
          {"platt_b", fit.params.b},
          {"platt_iterations", fit.iterations},
          {"platt_capped", capped},
          {"threshold", threshold},
          {"accuracy", cal.accuracy},
          {"f1", optional_metric(cal.f1)},
          {"auroc", optional_metric(cal.auroc)},
          {"brier", cal.brier},
          {"ece", cal.ece},
          {"mean_predictive_entropy", mean_of(entropy)},
          {"mean_epistemic", mean_of(epistemic)}};
}

void stage_diagnose(const PipelineConfig& config, const Paths& paths,
                    const std::string& digest, std::size_t threads) {
  const SyntheticWorld world = load_world(paths, digest);
  const StandardizationStats stats = load_standardization(paths, digest);
  const std::size_t rounds = num_rounds(config);
  const std::vector<Checkpoint> ckpts = load_checkpoints(paths, rounds, digest);

  const std::vector<PreferencePair> train_raw =
      ingest_pairs(input_or(config.data.train_pairs_path, paths.train_pairs()));
  const std::vector<PreferencePair> heldout_raw =
      ingest_pairs(input_or(config.data.heldout_pairs_path, paths.heldout_pairs()));
  const std::vector<PreferencePair> heldout = standardized(stats, heldout_raw);
  const std::vector<Completion> validation = read_completions(
      input_or(config.data.validation_completions_path, paths.validation()));
  const std::vector<Completion> test =
      read_completions(input_or(config.data.test_completions_path, paths.test()));

  // Each held-out pair is scored in both orientations.
  std::vector<int> sym_labels(2 * heldout.size(), 0);
  std::fill(sym_labels.begin(), sym_labels.begin() + static_cast<long>(heldout.size()), 1);

  json rounds_json = json::array();
  for (const Checkpoint& ck : ckpts) {
    const DiagGaussian posterior = ck.posterior();
    const PairwiseEval eval = evaluate_pairs(posterior, heldout, config, ck.round, threads);
    std::vector<double> sym(2 * heldout.size());
    for (std::size_t i = 0; i < heldout.size(); ++i) {
      sym[i] = eval.prob[i];
      sym[heldout.size() + i] = 1.0 - eval.prob[i];
    }
    const CalibrationMetrics cal = calibration_suite(sym, sym_labels, 0.5);
    write_reliability_csv(paths.reliability(ck.round), cal.reliability_bins);

    rounds_json.push_back(
        {{"round", ck.round},
         {"pairwise",
          {{"accuracy", cal.accuracy},
           {"auroc", optional_metric(cal.auroc)},
           {"brier", cal.brier},
           {"ece", cal.ece},
           {"mean_epistemic", mean_of(eval.epistemic)},
           {"reliability_bins", bins_json(cal.reliability_bins)}}},
         {"single_text",
          single_text_block(posterior, validation, test, stats, config, ck.round,
                            threads)}});
  }

  // Oracle reference numbers, only meaningful for generated data.
  json oracle = nullptr;
  if (config.data.heldout_pairs_path.empty()) {
    std::vector<double> scores(2 * heldout_raw.size());
    for (std::size_t i = 0; i < heldout_raw.size(); ++i) {
      const double s = dot(world.true_theta, heldout_raw[i].margin().values());
      scores[i] = s;
      scores[heldout_raw.size() + i] = -s;
    }
    Rng rng = Rng::substream(config.seed, kOracleStream);
    oracle = {{"bayes_optimal_accuracy",
               bayes_optimal_pairwise_accuracy(
                   world, std::max<std::size_t>(1000, heldout_raw.size()), rng)},
              {"auroc", optional_metric(auroc(scores, sym_labels))}};
  }

  // Diagnostics on the final posterior.
  const DiagGaussian final_post = ckpts.back().posterior();
  std::vector<FeatureVector> pool = pair_pool(train_raw);
  for (FeatureVector& v : pool) v = standardize_apply(stats, v);
  const OODModel ood = ood_fit(pool);
  const PrincipalSplit split = principal_split(pool, config.diagnostics.explained_variance);
  Rng probe_rng = Rng::substream(config.seed, kProbeStream);

  const std::size_t n_probe = config.diagnostics.ood_probe_points;
  std::vector<double> variances(n_probe);
  std::vector<double> distances(n_probe);
  for (std::size_t i = 0; i < n_probe; ++i) {
    const double t = n_probe > 1 ? config.diagnostics.ood_max_offset *
                                       static_cast<double>(i) /
                                       static_cast<double>(n_probe - 1)
                                 : 0.0;
    const FeatureVector base = standardize_apply(stats, test[i % test.size()].features);
    const FeatureVector dir = sample_off_manifold_direction(split, probe_rng);
    const FeatureVector v = add_scaled(base, dir, t);
    variances[i] = reward_variance(final_post, v);
    distances[i] = ood_distance(ood, v);
  }

  std::vector<FeatureVector> spurious_inputs;
  for (std::size_t i = 0; i < config.diagnostics.spurious_inputs; ++i) {
    spurious_inputs.push_back(heldout[i % heldout.size()].margin());
  }
  const FeatureVector spurious_dir = sample_off_manifold_direction(split, probe_rng);
  const SpuriousProbeResult probe = spurious_probe(
      final_post, spurious_inputs, spurious_dir, config.diagnostics.spurious_magnitude,
      config.audit.alpha, config.audit.mc_samples, probe_rng);

  json diagnostics = {
      {"principal_rank", split.rank},
      {"explained_fraction", split.explained_fraction},
      {"ood",
       {{"probe_points", n_probe},
        {"max_offset", config.diagnostics.ood_max_offset},
        {"pearson", n_probe > 1 ? json(pearson(variances, distances)) : json(nullptr)},
        {"spearman",
         n_probe > 1 ? json(spearman(variances, distances)) : json(nullptr)}}},
      {"spurious",
       {{"inputs", spurious_inputs.size()},
        {"magnitude", config.diagnostics.spurious_magnitude},
        {"mean_clean_epistemic", probe.mean_clean_epistemic},
        {"mean_marked_epistemic", probe.mean_marked_epistemic},
        {"delta", probe.mean_marked_epistemic - probe.mean_clean_epistemic},
        {"wins", probe.wins},
        {"losses", probe.losses},
        {"ties", probe.ties},
        {"sign_test_p", probe.sign_test_p}}}};

  write_json(paths.metrics(), {{"schema", kSchemaVersion},
                               {"config_digest", digest},
                               {"rounds", rounds_json},
                               {"oracle", oracle},
                               {"diagnostics", diagnostics}});
}

json run_summary(const TrainingCurves& curves) {
  json oracle_reward = json::array();
  double max_kl = 0.0;
  for (const CurvePoint& p : curves.points) {
    oracle_reward.push_back(p.oracle_reward_mean);
    max_kl = std::max(max_kl, p.kl_to_reference);
  }
  return {{"final_reward_mean", curves.points.back().reward_mean},
          {"final_oracle_reward", curves.points.back().oracle_reward_mean},
          {"final_toxicity", curves.points.back().toxicity_rate},
          {"initial_toxicity", curves.points.front().toxicity_rate},
          {"max_kl", max_kl},
          {"oracle_reward_mean", oracle_reward},
          {"backtracked_updates", curves.backtracked_updates},
          {"dropped_updates", curves.dropped_updates}};
}

void stage_validate_policy(const PipelineConfig& config, const Paths& paths,
                           const std::string& digest) {
  const SyntheticWorld world = load_world(paths, digest);
  const StandardizationStats stats = load_standardization(paths, digest);
  const std::size_t rounds = num_rounds(config);
  const std::vector<Checkpoint> ckpts = load_checkpoints(paths, rounds, digest);
  if (stats.dim() != world.dim) {
    throw DimensionMismatch("validate-policy: reward features vs world", world.dim,
                            stats.dim());
  }

  auto train = [&](const RewardFn& reward) {
    // Every run sees the same prompt and action noise.
    Rng rng = Rng::substream(config.seed, kPolicyStream);
    return train_policy(reward, config.policy, world, rng);
  };
  auto inferred_reward = [&](const Checkpoint& ck) -> RewardFn {
    const std::vector<double> mu = ck.mu;
    return [mu, &stats](const FeatureVector& v) {
      return dot(mu, standardize_apply(stats, v).values());
    };
  };

  const TrainingCurves oracle =
      train([&world](const FeatureVector& v) { return world.true_reward(v); });
  write_curves_csv(paths.curves_oracle(), oracle);
  const TrainingCurves final_run = train(inferred_reward(ckpts.back()));
  write_curves_csv(paths.curves_round(rounds), final_run);

  json runs = {{"oracle", run_summary(oracle)},
               {"round_" + std::to_string(rounds), run_summary(final_run)}};
  json round1 = nullptr;
  if (rounds > 1) {
    const TrainingCurves first = train(inferred_reward(ckpts.front()));
    write_curves_csv(paths.curves_round(1), first);
    runs["round_1"] = run_summary(first);
    round1 = {{"final_oracle_reward", first.points.back().oracle_reward_mean},
              {"worse_than_final_round", first.points.back().oracle_reward_mean <
                                             final_run.points.back().oracle_reward_mean}};
  }

  const RunComparison cmp = compare_runs(final_run, oracle, config.tolerances);
  write_json(paths.comparison(),
             {{"schema", kSchemaVersion},
              {"config_digest", digest},
              {"final_round", rounds},
              {"comparison",
               {{"oracle_reward_gap", cmp.oracle_reward_gap},
                {"final_toxicity_gap", cmp.final_toxicity_gap},
                {"max_kl_inferred", cmp.max_kl_inferred},
                {"max_kl_oracle", cmp.max_kl_oracle},
                {"max_kl_excess", cmp.max_kl_excess},
                {"pass", cmp.pass}}},
              {"round_1_ordering", round1},
              {"runs", runs}});
}

void stage_report(const PipelineConfig& config, const Paths& paths,
                  const std::string& digest) {
  const std::size_t rounds = num_rounds(config);
  const std::vector<Checkpoint> ckpts = load_checkpoints(paths, rounds, digest);
  const json metrics = read_json(paths.metrics());
  require_fresh(paths.metrics(), metrics.value("config_digest", ""), digest);
  const json comparison = read_json(paths.comparison());
  require_fresh(paths.comparison(), comparison.value("config_digest", ""), digest);

  json inputs = json::object();
  auto add_input = [&](const std::string& name, const fs::path& p) {
    inputs[name] = file_digest(p);
  };
  add_input("world.json", paths.world());
  add_input("train_pairs", input_or(config.data.train_pairs_path, paths.train_pairs()));
  add_input("heldout_pairs",
            input_or(config.data.heldout_pairs_path, paths.heldout_pairs()));
  add_input("completions_validation",
            input_or(config.data.validation_completions_path, paths.validation()));
  add_input("completions_test", input_or(config.data.test_completions_path, paths.test()));
  add_input("standardization.json", paths.standardization());
  for (std::size_t k = 1; k <= rounds; ++k) {
    add_input(paths.checkpoint(k).filename().string(), paths.checkpoint(k));
  }
  add_input("metrics.json", paths.metrics());
  add_input("comparison.json", paths.comparison());

  json round_summaries = json::array();
  std::vector<double> contraction;
  std::vector<double> epistemic;
  for (std::size_t k = 0; k < rounds; ++k) {
    const json& m = metrics.at("rounds").at(k);
    const Checkpoint& ck = ckpts[k];
    contraction.push_back(log_det_diag(ck.posterior()));
    epistemic.push_back(m.at("pairwise").at("mean_epistemic").get<double>());
    json pairwise = m.at("pairwise");
    pairwise.erase("reliability_bins");
    round_summaries.push_back({{"round", ck.round},
                               {"contraction", contraction.back()},
                               {"pairwise", pairwise},
                               {"single_text", m.at("single_text")}});
  }

  json sequential = {{"present", rounds > 1}};
  if (rounds > 1) {
    bool strictly_decreasing = true;
    for (std::size_t k = 1; k < rounds; ++k) {
      strictly_decreasing = strictly_decreasing && contraction[k] < contraction[k - 1];
    }
    sequential["contraction_strictly_decreasing"] = strictly_decreasing;
    sequential["epistemic_relative_drop"] =
        epistemic.front() > 0.0 ? 1.0 - epistemic.back() / epistemic.front() : 0.0;
  }

  json report = {{"schema", kSchemaVersion},
                 {"tool_version", kToolVersion},
                 {"config_digest", digest},
                 {"config", json::parse(config_to_json(config))},
                 {"inputs", inputs},
                 {"rounds", round_summaries},
                 {"sequential", sequential},
                 {"oracle", metrics.at("oracle")},
                 {"diagnostics", metrics.at("diagnostics")},
                 {"policy_validation",
                  {{"final_round", comparison.at("final_round")},
                   {"comparison", comparison.at("comparison")},
                   {"round_1_ordering", comparison.at("round_1_ordering")},
                   {"runs", comparison.at("runs")}}}};
  report["timings"] = fs::exists(paths.timings()) ? read_json(paths.timings())
                                                  : json::object();
  write_json(paths.report(), report);
}

void strip_timings(json& j) {
  if (j.is_object()) {
    j.erase("timings");
    for (auto& [k, v] : j.items()) strip_timings(v);
  } else if (j.is_array()) {
    for (json& v : j) strip_timings(v);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void PipelineConfig::finalize() {
  audit.seed = seed;
  policy.seed = seed;
  if (!data.round_sizes.empty()) audit.rounds = data.round_sizes.size();
  audit.validate();
  policy.validate();

  if (world.dim < 2) throw InvalidArgument("config: world.dim must be >= 2");
  if (world.manifold_dim == 1 || world.manifold_dim > world.dim) {
    throw InvalidArgument("config: world.manifold_dim must be 0 or in [2, dim]");
  }
  if (world.candidates_per_prompt < 2) {
    throw InvalidArgument("config: world.candidates_per_prompt must be >= 2");
  }
  if (!(world.expert_temperature > 0.0)) {
    throw InvalidArgument("config: world.expert_temperature must be positive");
  }
  if (world.baseline_temperature && !(*world.baseline_temperature > 0.0)) {
    throw InvalidArgument("config: world.baseline_temperature must be positive");
  }
  if (data.train_pairs < audit.rounds) {
    throw InvalidArgument("config: data.train_pairs must be >= audit.rounds");
  }
  if (data.heldout_pairs < 1) throw InvalidArgument("config: data.heldout_pairs must be >= 1");
  if (data.validation_completions < 2 || data.test_completions < 1) {
    throw InvalidArgument("config: completion splits are too small");
  }
  std::size_t total = 0;
  for (std::size_t s : data.round_sizes) {
    if (s == 0) throw InvalidArgument("config: data.round_sizes entries must be >= 1");
    total += s;
  }
  if (data.train_pairs_path.empty() && total > data.train_pairs) {
    throw InvalidArgument("config: data.round_sizes exceed data.train_pairs");
  }
  if (!(diagnostics.explained_variance > 0.0 && diagnostics.explained_variance <= 1.0)) {
    throw InvalidArgument("config: diagnostics.explained_variance must lie in (0, 1]");
  }
  if (!(diagnostics.ood_max_offset >= 0.0)) {
    throw InvalidArgument("config: diagnostics.ood_max_offset must be non-negative");
  }
  if (!(diagnostics.spurious_magnitude >= 0.0)) {
    throw InvalidArgument("config: diagnostics.spurious_magnitude must be non-negative");
  }
  if (diagnostics.spurious_inputs < 1 || diagnostics.ood_probe_points < 1) {
    throw InvalidArgument("config: diagnostics probe counts must be >= 1");
  }
  if (!(tolerances.max_final_toxicity_gap >= 0.0) || !(tolerances.max_kl_ratio > 0.0)) {
    throw InvalidArgument("config: tolerances must be positive");
  }
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.world.dim = 16;
  c.world.manifold_dim = 12;
  c.world.candidates_per_prompt = 8;
  c.world.expert_temperature = 0.25;
  c.finalize();
  return c;
}

PipelineConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  PipelineConfig c = default_config();
  Section top(root, "");
  top.allow({"seed", "world", "data", "audit", "diagnostics", "policy", "tolerances"});
  top.get_u64("seed", c.seed);

  if (const json* j = top.child("world")) {
    Section s(*j, "world.");
    s.allow({"dim", "manifold_dim", "candidates_per_prompt", "expert_temperature",
             "baseline_temperature", "toxicity_threshold"});
    s.get("dim", c.world.dim);
    s.get("manifold_dim", c.world.manifold_dim);
    s.get("candidates_per_prompt", c.world.candidates_per_prompt);
    s.get("expert_temperature", c.world.expert_temperature);
    s.get("baseline_temperature", c.world.baseline_temperature);
    s.get("toxicity_threshold", c.world.toxicity_threshold);
  }
  if (const json* j = top.child("data")) {
    Section s(*j, "data.");
    s.allow({"train_pairs", "heldout_pairs", "validation_completions",
             "test_completions", "round_sizes", "train_pairs_path",
             "heldout_pairs_path", "validation_completions_path",
             "test_completions_path"});
    s.get("train_pairs", c.data.train_pairs);
    s.get("heldout_pairs", c.data.heldout_pairs);
    s.get("validation_completions", c.data.validation_completions);
    s.get("test_completions", c.data.test_completions);
    s.get("round_sizes", c.data.round_sizes);
    s.get("train_pairs_path", c.data.train_pairs_path);
    s.get("heldout_pairs_path", c.data.heldout_pairs_path);
    s.get("validation_completions_path", c.data.validation_completions_path);
    s.get("test_completions_path", c.data.test_completions_path);
  }
  if (const json* j = top.child("audit")) {
    Section s(*j, "audit.");
    s.allow({"alpha", "prior_std", "learning_rate", "batch_size", "vi_steps",
             "rounds", "mc_samples", "elbo_samples"});
    s.get("alpha", c.audit.alpha);
    s.get("prior_std", c.audit.prior_std);
    s.get("learning_rate", c.audit.learning_rate);
    s.get("batch_size", c.audit.batch_size);
    s.get("vi_steps", c.audit.vi_steps);
    s.get("rounds", c.audit.rounds);
    s.get("mc_samples", c.audit.mc_samples);
    s.get("elbo_samples", c.audit.elbo_samples);
  }
  if (const json* j = top.child("diagnostics")) {
    Section s(*j, "diagnostics.");
    s.allow({"ood_probe_points", "ood_max_offset", "spurious_inputs",
             "spurious_magnitude", "explained_variance"});
    s.get("ood_probe_points", c.diagnostics.ood_probe_points);
    s.get("ood_max_offset", c.diagnostics.ood_max_offset);
    s.get("spurious_inputs", c.diagnostics.spurious_inputs);
    s.get("spurious_magnitude", c.diagnostics.spurious_magnitude);
    s.get("explained_variance", c.diagnostics.explained_variance);
  }
  if (const json* j = top.child("policy")) {
    Section s(*j, "policy.");
    s.allow({"kl_coeff", "clip_epsilon", "steps", "prompts_per_step", "lr",
             "eval_every", "eval_prompts", "target_kl", "max_backtracks",
             "update_epochs", "policy_temperature"});
    s.get("kl_coeff", c.policy.kl_coeff);
    s.get("clip_epsilon", c.policy.clip_epsilon);
    s.get("steps", c.policy.steps);
    s.get("prompts_per_step", c.policy.prompts_per_step);
    s.get("lr", c.policy.lr);
    s.get("eval_every", c.policy.eval_every);
    s.get("eval_prompts", c.policy.eval_prompts);
    s.get("target_kl", c.policy.target_kl);
    s.get("max_backtracks", c.policy.max_backtracks);
    s.get("update_epochs", c.policy.update_epochs);
    s.get("policy_temperature", c.policy.policy_temperature);
  }
  if (const json* j = top.child("tolerances")) {
    Section s(*j, "tolerances.");
    s.allow({"max_final_toxicity_gap", "max_kl_ratio"});
    s.get("max_final_toxicity_gap", c.tolerances.max_final_toxicity_gap);
    s.get("max_kl_ratio", c.tolerances.max_kl_ratio);
  }
  c.finalize();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("config: cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const PipelineConfig& c) {
  const json j = {
      {"seed", c.seed},
      {"world",
       {{"dim", c.world.dim},
        {"manifold_dim", c.world.manifold_dim},
        {"candidates_per_prompt", c.world.candidates_per_prompt},
        {"expert_temperature", c.world.expert_temperature},
        {"baseline_temperature", optional_json(c.world.baseline_temperature)},
        {"toxicity_threshold", optional_json(c.world.toxicity_threshold)}}},
      {"data",
       {{"train_pairs", c.data.train_pairs},
        {"heldout_pairs", c.data.heldout_pairs},
        {"validation_completions", c.data.validation_completions},
        {"test_completions", c.data.test_completions},
        {"round_sizes", c.data.round_sizes},
        {"train_pairs_path", c.data.train_pairs_path},
        {"heldout_pairs_path", c.data.heldout_pairs_path},
        {"validation_completions_path", c.data.validation_completions_path},
        {"test_completions_path", c.data.test_completions_path}}},
      {"audit",
       {{"alpha", c.audit.alpha},
        {"prior_std", c.audit.prior_std},
        {"learning_rate", c.audit.learning_rate},
        {"batch_size", c.audit.batch_size},
        {"vi_steps", c.audit.vi_steps},
        {"rounds", c.audit.rounds},
        {"mc_samples", c.audit.mc_samples},
        {"elbo_samples", c.audit.elbo_samples}}},
      {"diagnostics",
       {{"ood_probe_points", c.diagnostics.ood_probe_points},
        {"ood_max_offset", c.diagnostics.ood_max_offset},
        {"spurious_inputs", c.diagnostics.spurious_inputs},
        {"spurious_magnitude", c.diagnostics.spurious_magnitude},
        {"explained_variance", c.diagnostics.explained_variance}}},
      {"policy",
       {{"kl_coeff", c.policy.kl_coeff},
        {"clip_epsilon", c.policy.clip_epsilon},
        {"steps", c.policy.steps},
        {"prompts_per_step", c.policy.prompts_per_step},
        {"lr", c.policy.lr},
        {"eval_every", c.policy.eval_every},
        {"eval_prompts", c.policy.eval_prompts},
        {"target_kl", c.policy.target_kl},
        {"max_backtracks", c.policy.max_backtracks},
        {"update_epochs", c.policy.update_epochs},
        {"policy_temperature", c.policy.policy_temperature}}},
      {"tolerances",
       {{"max_final_toxicity_gap", c.tolerances.max_final_toxicity_gap},
        {"max_kl_ratio", c.tolerances.max_kl_ratio}}}};
  return j.dump();
}

std::string config_digest(const PipelineConfig& config) {
  return fnv1a_hex(config_to_json(config));
}

Stage parse_stage(const std::string& name) {
  for (Stage s : all_stages()) {
    if (stage_name(s) == name) return s;
  }
  throw InvalidArgument("unknown stage '" + name +
                        "' (expected gen, audit, diagnose, validate-policy or report)");
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::kGen: return "gen";
    case Stage::kAudit: return "audit";
    case Stage::kDiagnose: return "diagnose";
    case Stage::kValidatePolicy: return "validate-policy";
    case Stage::kReport: return "report";
  }
  return "unknown";
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::kGen, Stage::kAudit, Stage::kDiagnose,
                                            Stage::kValidatePolicy, Stage::kReport};
  return stages;
}

StageError::StageError(Stage stage, const std::string& what)
    : AuditError("stage '" + stage_name(stage) + "': " + what), stage_(stage) {}

void run_stage(Stage stage, const PipelineConfig& config, const RunOptions& options) {
  const Paths paths{options.out_dir};
  const std::string digest = config_digest(config);
  const auto start = std::chrono::steady_clock::now();
  try {
    fs::create_directories(paths.dir);
    switch (stage) {
      case Stage::kGen: stage_gen(config, paths, digest); break;
      case Stage::kAudit: stage_audit(config, paths, digest); break;
      case Stage::kDiagnose:
        stage_diagnose(config, paths, digest, options.threads);
        break;
      case Stage::kValidatePolicy: stage_validate_policy(config, paths, digest); break;
      case Stage::kReport: stage_report(config, paths, digest); break;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  if (stage != Stage::kReport) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    record_timing(paths, stage, elapsed.count());
  }
}

void run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  if (fs::exists(Paths{options.out_dir}.timings())) {
    fs::remove(Paths{options.out_dir}.timings());
  }
  for (Stage s : all_stages()) run_stage(s, config, options);
}

std::string canonicalize_report(const std::string& report_json) {
  json j;
  try {
    j = json::parse(report_json);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("canonicalize_report: ") + e.what());
  }
  strip_timings(j);
  return j.dump(2) + "\n";
}

}  // namespace reward_audit

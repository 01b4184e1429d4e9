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

// End-to-end audit pipeline. Each stage reads the files written by earlier
// stages from one output directory and writes its own:
//
//   gen              world.json, train_pairs.jsonl, heldout_pairs.jsonl,
//                    completions_validation.jsonl, completions_test.jsonl
//   audit            standardization.json, checkpoint_round_<k>.json,
//                    elbo_trace.csv
//   diagnose         metrics.json, reliability_round_<k>.csv
//   validate-policy  curves_oracle.csv, curves_round_<k>.csv, comparison.json
//   report           report.json
//
// Artifacts carry the digest of the config that produced them; a stage that
// finds a mismatching digest refuses to consume the stale file.

#ifndef REWARD_AUDIT_PIPELINE_HPP_
#define REWARD_AUDIT_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reward_audit/core.hpp"
#include "reward_audit/policy.hpp"
#include "reward_audit/synthetic.hpp"

namespace reward_audit {

inline constexpr const char* kToolVersion = "0.1.0";

struct DataOptions {
  std::size_t train_pairs = 5000;
  std::size_t heldout_pairs = 2000;
  std::size_t validation_completions = 2000;
  std::size_t test_completions = 2000;
  // Empty: audit.rounds near-equal rounds over all training pairs.
  std::vector<std::size_t> round_sizes;
  // Externally produced inputs. When set they replace the generated files.
  std::string train_pairs_path;
  std::string heldout_pairs_path;
  std::string validation_completions_path;
  std::string test_completions_path;
};

struct DiagnosticsOptions {
  std::size_t ood_probe_points = 500;
  double ood_max_offset = 8.0;
  std::size_t spurious_inputs = 500;
  double spurious_magnitude = 5.0;
  double explained_variance = 0.95;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  WorldOptions world;
  DataOptions data;
  AuditConfig audit;
  DiagnosticsOptions diagnostics;
  PolicyTrainConfig policy;
  ComparisonTolerances tolerances;

  // Seeds every sub-config from `seed` and validates all fields.
  void finalize();
};

// d = 16 on a 12-dimensional manifold, C = 8, expert temperature 0.25,
// 5000 training pairs in 5 rounds.
PipelineConfig default_config();

// Reads a JSON config; missing keys keep their defaults, unknown keys are
// rejected.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& json_text);

// Canonical JSON of every semantically meaningful field.
std::string config_to_json(const PipelineConfig& config);
std::string config_digest(const PipelineConfig& config);

enum class Stage { kGen, kAudit, kDiagnose, kValidatePolicy, kReport };

Stage parse_stage(const std::string& name);
std::string stage_name(Stage stage);
const std::vector<Stage>& all_stages();

class StageError : public AuditError {
 public:
  StageError(Stage stage, const std::string& what);
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct RunOptions {
  std::filesystem::path out_dir = "audit_out";
  // Worker threads for per-input diagnostics. Results do not depend on it.
  std::size_t threads = 1;
};

void run_stage(Stage stage, const PipelineConfig& config,
               const RunOptions& options);
void run_pipeline(const PipelineConfig& config, const RunOptions& options);

// Drops wall-clock fields so that reports from identical runs compare equal
// byte for byte.
std::string canonicalize_report(const std::string& report_json);

}  // namespace reward_audit

#endif  // REWARD_AUDIT_PIPELINE_HPP_

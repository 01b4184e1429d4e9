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

// On-disk formats. Every JSON record carries "schema": "v1".
//
//   pairs JSONL        {"pair_id": str, "preferred": [d], "rejected": [d]}
//   completions JSONL  {"completion_id": str, "features": [d], "toxic": 0|1}
//   checkpoint JSON    {"round", "mu", "log_std", "contraction", "config_digest"}
//   curves CSV         step,reward_mean,reward_std,kl,toxicity_rate
//   reliability CSV    bin_center,mean_confidence,empirical_accuracy,count

#ifndef REWARD_AUDIT_IO_HPP_
#define REWARD_AUDIT_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reward_audit/core.hpp"
#include "reward_audit/diagnostics.hpp"
#include "reward_audit/inference.hpp"
#include "reward_audit/policy.hpp"
#include "reward_audit/synthetic.hpp"

namespace reward_audit {

inline constexpr const char* kSchemaVersion = "v1";

// Malformed input; `line` is 1-based, 0 when not line-oriented.
class IngestError : public AuditError {
 public:
  IngestError(const std::string& what, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Completion {
  std::string completion_id;
  FeatureVector features;
  int toxic = 0;
};

std::vector<PreferencePair> ingest_pairs(const std::filesystem::path& path);
void write_pairs_jsonl(const std::filesystem::path& path,
                       std::span<const PreferencePair> pairs);
void write_demonstrations_jsonl(const std::filesystem::path& path,
                                std::span<const Demonstration> demos);

std::vector<Completion> read_completions(const std::filesystem::path& path);
void write_completions(const std::filesystem::path& path,
                       std::span<const Completion> completions);

struct Checkpoint {
  std::size_t round = 1;
  std::vector<double> mu;
  std::vector<double> log_std;
  double contraction = 0.0;
  std::string config_digest;

  DiagGaussian posterior() const;
};

Checkpoint make_checkpoint(const RoundResult& result, std::string config_digest);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void write_standardization(const std::filesystem::path& path,
                           const StandardizationStats& stats,
                           const std::string& config_digest);
StandardizationStats read_standardization(const std::filesystem::path& path,
                                          std::string* config_digest = nullptr);

void write_world(const std::filesystem::path& path, const SyntheticWorld& world,
                 const std::string& config_digest);
SyntheticWorld read_world(const std::filesystem::path& path,
                          std::string* config_digest = nullptr);

void write_curves_csv(const std::filesystem::path& path,
                      const TrainingCurves& curves);
TrainingCurves read_curves_csv(const std::filesystem::path& path);

void write_reliability_csv(const std::filesystem::path& path,
                           std::span<const ReliabilityBin> bins);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

}  // namespace reward_audit

#endif  // REWARD_AUDIT_IO_HPP_

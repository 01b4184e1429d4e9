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

#include "reward_audit/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace reward_audit {
namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open '" + path.string() + "'", 0);
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AuditError("cannot write '" + path.string() + "'");
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IngestError("'" + path.string() + "': " + e.what(), 0);
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

void check_schema(const json& j, const std::string& where, std::size_t line) {
  if (!j.contains("schema")) return;
  if (j.at("schema") != kSchemaVersion) {
    throw IngestError(where + ": unsupported schema " + j.at("schema").dump(), line);
  }
}

std::vector<double> real_array(const json& j, const char* key,
                               const std::string& where, std::size_t line) {
  if (!j.contains(key)) throw IngestError(where + ": missing '" + key + "'", line);
  const json& a = j.at(key);
  if (!a.is_array()) throw IngestError(where + ": '" + key + "' is not an array", line);
  std::vector<double> out;
  out.reserve(a.size());
  for (const json& x : a) {
    if (!x.is_number()) {
      throw IngestError(where + ": '" + key + "' has a non-numeric entry", line);
    }
    out.push_back(x.get<double>());
  }
  return out;
}

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in = open_in(path);
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw IngestError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    if (!j.is_object()) {
      throw IngestError("line " + std::to_string(line_no) + ": not a JSON object",
                        line_no);
    }
    fn(j, line_no);
  }
}

std::string format_double(double x) {
  // Same shortest round-trip rendering nlohmann uses for JSON numbers.
  return json(x).dump();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

}  // namespace

IngestError::IngestError(const std::string& what, std::size_t line)
    : AuditError(what), line_(line) {}

std::vector<PreferencePair> ingest_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> pairs;
  std::size_t dim = 0;
  for_each_jsonl(path, [&](const json& j, std::size_t line) {
    const std::string where = "line " + std::to_string(line);
    check_schema(j, where, line);
    if (!j.contains("pair_id") || !j.at("pair_id").is_string()) {
      throw IngestError(where + ": missing string 'pair_id'", line);
    }
    std::vector<double> pref = real_array(j, "preferred", where, line);
    std::vector<double> rej = real_array(j, "rejected", where, line);
    if (pref.size() != rej.size()) {
      throw IngestError(where + ": preferred has dimension " +
                            std::to_string(pref.size()) +
                            " but rejected has dimension " +
                            std::to_string(rej.size()),
                        line);
    }
    if (pref.empty()) throw IngestError(where + ": empty feature vectors", line);
    if (pairs.empty()) {
      dim = pref.size();
    } else if (pref.size() != dim) {
      throw IngestError(where + ": dimension " + std::to_string(pref.size()) +
                            " differs from the file's dimension " +
                            std::to_string(dim),
                        line);
    }
    try {
      pairs.emplace_back(j.at("pair_id").get<std::string>(),
                         FeatureVector(std::move(pref)), FeatureVector(std::move(rej)));
    } catch (const InvalidArgument& e) {
      throw IngestError(where + ": " + e.what(), line);
    }
  });
  if (pairs.empty()) throw IngestError("'" + path.string() + "': no pairs", 0);
  return pairs;
}

void write_pairs_jsonl(const std::filesystem::path& path,
                       std::span<const PreferencePair> pairs) {
  std::ofstream out = open_out(path);
  for (const PreferencePair& p : pairs) {
    json j;
    j["schema"] = kSchemaVersion;
    j["pair_id"] = p.pair_id();
    j["preferred"] = p.preferred().vec();
    j["rejected"] = p.rejected().vec();
    out << j.dump() << '\n';
  }
}

void write_demonstrations_jsonl(const std::filesystem::path& path,
                                std::span<const Demonstration> demos) {
  std::ofstream out = open_out(path);
  for (const Demonstration& d : demos) {
    json j;
    j["schema"] = kSchemaVersion;
    j["pair_id"] = d.pair.pair_id();
    j["preferred"] = d.pair.preferred().vec();
    j["rejected"] = d.pair.rejected().vec();
    j["oracle_margin"] = d.oracle_margin;
    j["prompt_id"] = d.prompt_id;
    out << j.dump() << '\n';
  }
}

std::vector<Completion> read_completions(const std::filesystem::path& path) {
  std::vector<Completion> out;
  for_each_jsonl(path, [&](const json& j, std::size_t line) {
    const std::string where = "line " + std::to_string(line);
    check_schema(j, where, line);
    if (!j.contains("completion_id") || !j.at("completion_id").is_string()) {
      throw IngestError(where + ": missing string 'completion_id'", line);
    }
    if (!j.contains("toxic") || !j.at("toxic").is_number_integer()) {
      throw IngestError(where + ": missing integer 'toxic'", line);
    }
    const int toxic = j.at("toxic").get<int>();
    if (toxic != 0 && toxic != 1) {
      throw IngestError(where + ": 'toxic' must be 0 or 1", line);
    }
    std::vector<double> f = real_array(j, "features", where, line);
    if (!out.empty() && f.size() != out.front().features.dim()) {
      throw IngestError(where + ": dimension " + std::to_string(f.size()) +
                            " differs from the file's dimension " +
                            std::to_string(out.front().features.dim()),
                        line);
    }
    try {
      out.push_back(Completion{j.at("completion_id").get<std::string>(),
                               FeatureVector(std::move(f)), toxic});
    } catch (const InvalidArgument& e) {
      throw IngestError(where + ": " + e.what(), line);
    }
  });
  if (out.empty()) throw IngestError("'" + path.string() + "': no completions", 0);
  return out;
}

void write_completions(const std::filesystem::path& path,
                       std::span<const Completion> completions) {
  std::ofstream out = open_out(path);
  for (const Completion& c : completions) {
    json j;
    j["schema"] = kSchemaVersion;
    j["completion_id"] = c.completion_id;
    j["features"] = c.features.vec();
    j["toxic"] = c.toxic;
    out << j.dump() << '\n';
  }
}

DiagGaussian Checkpoint::posterior() const {
  std::vector<double> sd(log_std.size());
  for (std::size_t i = 0; i < sd.size(); ++i) sd[i] = std::exp(log_std[i]);
  return DiagGaussian(mu, std::move(sd));
}

Checkpoint make_checkpoint(const RoundResult& result, std::string config_digest) {
  Checkpoint c;
  c.round = result.round_index;
  c.mu.assign(result.posterior.mean().begin(), result.posterior.mean().end());
  c.log_std = result.log_std;
  c.contraction = result.contraction;
  c.config_digest = std::move(config_digest);
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json j;
  j["schema"] = kSchemaVersion;
  j["round"] = ckpt.round;
  j["mu"] = ckpt.mu;
  j["log_std"] = ckpt.log_std;
  j["contraction"] = ckpt.contraction;
  j["config_digest"] = ckpt.config_digest;
  write_json_file(path, j);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  const std::string where = "'" + path.string() + "'";
  check_schema(j, where, 0);
  Checkpoint c;
  try {
    c.round = j.at("round").get<std::size_t>();
    c.contraction = j.at("contraction").get<double>();
    c.config_digest = j.at("config_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw IngestError(where + ": " + e.what(), 0);
  }
  c.mu = real_array(j, "mu", where, 0);
  c.log_std = real_array(j, "log_std", where, 0);
  if (c.mu.size() != c.log_std.size()) {
    throw IngestError(where + ": mu has dimension " + std::to_string(c.mu.size()) +
                          " but log_std has dimension " +
                          std::to_string(c.log_std.size()),
                      0);
  }
  return c;
}

void write_standardization(const std::filesystem::path& path,
                           const StandardizationStats& stats,
                           const std::string& config_digest) {
  json j;
  j["schema"] = kSchemaVersion;
  j["per_dim_mean"] = stats.per_dim_mean;
  j["per_dim_std"] = stats.per_dim_std;
  j["config_digest"] = config_digest;
  write_json_file(path, j);
}

StandardizationStats read_standardization(const std::filesystem::path& path,
                                          std::string* config_digest) {
  const json j = read_json_file(path);
  const std::string where = "'" + path.string() + "'";
  check_schema(j, where, 0);
  StandardizationStats s;
  s.per_dim_mean = real_array(j, "per_dim_mean", where, 0);
  s.per_dim_std = real_array(j, "per_dim_std", where, 0);
  if (s.per_dim_mean.size() != s.per_dim_std.size()) {
    throw IngestError(where + ": mean and std dimensions differ", 0);
  }
  if (config_digest != nullptr) *config_digest = j.value("config_digest", "");
  return s;
}

void write_world(const std::filesystem::path& path, const SyntheticWorld& world,
                 const std::string& config_digest) {
  json j;
  j["schema"] = kSchemaVersion;
  j["seed"] = world.seed;
  j["dim"] = world.dim;
  j["manifold_dim"] = world.manifold_dim;
  j["basis"] = world.basis;
  j["true_theta"] = world.true_theta;
  j["candidates_per_prompt"] = world.candidates_per_prompt;
  j["expert_temperature"] = world.expert_temperature;
  j["baseline_temperature"] =
      world.baseline_temperature ? json(*world.baseline_temperature) : json(nullptr);
  j["toxicity_threshold"] = world.toxicity_threshold;
  j["config_digest"] = config_digest;
  write_json_file(path, j);
}

SyntheticWorld read_world(const std::filesystem::path& path,
                          std::string* config_digest) {
  const json j = read_json_file(path);
  const std::string where = "'" + path.string() + "'";
  check_schema(j, where, 0);
  SyntheticWorld w;
  try {
    w.seed = j.at("seed").get<std::uint64_t>();
    w.dim = j.at("dim").get<std::size_t>();
    w.manifold_dim = j.at("manifold_dim").get<std::size_t>();
    w.basis = j.at("basis").get<std::vector<std::vector<double>>>();
    w.candidates_per_prompt = j.at("candidates_per_prompt").get<std::size_t>();
    w.expert_temperature = j.at("expert_temperature").get<double>();
    if (!j.at("baseline_temperature").is_null()) {
      w.baseline_temperature = j.at("baseline_temperature").get<double>();
    }
    w.toxicity_threshold = j.at("toxicity_threshold").get<double>();
  } catch (const json::exception& e) {
    throw IngestError(where + ": " + e.what(), 0);
  }
  w.true_theta = real_array(j, "true_theta", where, 0);
  if (w.true_theta.size() != w.dim || w.basis.size() != w.manifold_dim) {
    throw IngestError(where + ": inconsistent world dimensions", 0);
  }
  if (config_digest != nullptr) *config_digest = j.value("config_digest", "");
  return w;
}

void write_curves_csv(const std::filesystem::path& path,
                      const TrainingCurves& curves) {
  std::ofstream out = open_out(path);
  out << "step,reward_mean,reward_std,kl,toxicity_rate\n";
  for (const CurvePoint& p : curves.points) {
    out << p.step << ',' << format_double(p.reward_mean) << ','
        << format_double(p.reward_std) << ',' << format_double(p.kl_to_reference)
        << ',' << format_double(p.toxicity_rate) << '\n';
  }
}

TrainingCurves read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "step,reward_mean,reward_std,kl,toxicity_rate") {
    throw IngestError("'" + path.string() + "': unexpected header", 1);
  }
  TrainingCurves curves;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != 5) {
      throw IngestError("line " + std::to_string(line_no) + ": expected 5 columns",
                        line_no);
    }
    try {
      CurvePoint p;
      p.step = static_cast<std::size_t>(std::stoull(cells[0]));
      p.reward_mean = std::stod(cells[1]);
      p.reward_std = std::stod(cells[2]);
      p.kl_to_reference = std::stod(cells[3]);
      p.toxicity_rate = std::stod(cells[4]);
      curves.points.push_back(p);
    } catch (const std::exception&) {
      throw IngestError("line " + std::to_string(line_no) + ": malformed number",
                        line_no);
    }
  }
  return curves;
}

void write_reliability_csv(const std::filesystem::path& path,
                           std::span<const ReliabilityBin> bins) {
  std::ofstream out = open_out(path);
  out << "bin_center,mean_confidence,empirical_accuracy,count\n";
  for (const ReliabilityBin& b : bins) {
    out << format_double(b.bin_center) << ',' << format_double(b.mean_confidence)
        << ',' << format_double(b.empirical_accuracy) << ',' << b.count << '\n';
  }
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

}  // namespace reward_audit

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

// reward-audit: command-line driver for the audit pipeline.
//
//   reward-audit run --config cfg.json --out dir [--stage audit]
//   reward-audit gen|audit|diagnose|validate-policy|report --config cfg.json
//   reward-audit canonicalize dir/report.json

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "reward_audit/pipeline.hpp"

namespace ra = reward_audit;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "audit_out";
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path,
                  "JSON config; omitted keys keep their defaults");
  cmd->add_option("--seed", flags.seed, "overrides the config seed");
  cmd->add_option("--out", flags.out_dir, "artifact directory")
      ->capture_default_str();
  cmd->add_option("--threads", flags.threads,
                  "workers for per-input diagnostics (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

ra::PipelineConfig resolve_config(const CommonFlags& flags) {
  ra::PipelineConfig config = flags.config_path.empty()
                                  ? ra::default_config()
                                  : ra::load_config(flags.config_path);
  if (flags.seed) {
    config.seed = *flags.seed;
    config.finalize();
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inverse-RL audit of preference-trained reward models"};
  app.set_version_flag("--version", std::string(ra::kToolVersion));
  app.require_subcommand(1);

  CommonFlags flags;
  std::string stage_name;
  CLI::App* run = app.add_subcommand("run", "run the pipeline (or one --stage)");
  add_common(run, flags);
  run->add_option("--stage", stage_name,
                  "gen, audit, diagnose, validate-policy or report");

  std::vector<std::pair<CLI::App*, ra::Stage>> stage_cmds;
  for (ra::Stage s : ra::all_stages()) {
    CLI::App* cmd = app.add_subcommand(ra::stage_name(s), "run the " +
                                                              ra::stage_name(s) +
                                                              " stage");
    add_common(cmd, flags);
    stage_cmds.emplace_back(cmd, s);
  }

  std::string report_path;
  std::string canonical_out;
  CLI::App* canon = app.add_subcommand(
      "canonicalize", "print a report with wall-clock fields removed");
  canon->add_option("report", report_path, "report.json")->required();
  canon->add_option("-o,--output", canonical_out, "write here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (canon->parsed()) {
      std::ifstream in(report_path, std::ios::binary);
      if (!in) {
        std::cerr << "error: cannot open '" << report_path << "'\n";
        return 2;
      }
      std::ostringstream ss;
      ss << in.rdbuf();
      const std::string canonical = ra::canonicalize_report(ss.str());
      if (canonical_out.empty()) {
        std::cout << canonical;
      } else {
        std::ofstream(canonical_out, std::ios::binary) << canonical;
      }
      return 0;
    }

    const ra::PipelineConfig config = resolve_config(flags);
    const ra::RunOptions options{flags.out_dir, flags.threads};
    if (run->parsed()) {
      if (stage_name.empty()) {
        ra::run_pipeline(config, options);
      } else {
        ra::run_stage(ra::parse_stage(stage_name), config, options);
      }
    } else {
      for (const auto& [cmd, stage] : stage_cmds) {
        if (cmd->parsed()) ra::run_stage(stage, config, options);
      }
    }
    std::cerr << "config digest " << ra::config_digest(config) << ", artifacts in "
              << flags.out_dir << "\n";
  } catch (const ra::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ra::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#pragma once

/**
 * File-based experiment pipeline behind the CLI verbs. A single JSON config
 * describes an experiment (environment recipe, demo sampling, SFT, policy
 * gradient, optional sweep axis, seeds); every command is deterministic
 * given its config, stages results in memory, and only then writes files,
 * so a failed run leaves no partial outputs. Timestamps live in meta
 * sidecars only.
 */

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "densepath/suite.hpp"

namespace densepath {

struct ExperimentConfig {
  bool has_recipe = false;
  EnvRecipe recipe;
  std::string env_path;  // alternative to the inline recipe

  int demo_count = 2000;
  std::uint64_t dataset_seed = 11;
  SftConfig sft;
  std::uint64_t sft_seed = 3;
  DprConfig dpr;
  std::vector<double> sweep_gamma;  // at most one sweep axis may be set
  std::vector<double> sweep_alpha;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir;
  int heatmap_rollouts = 5;
};

/// Strict parse: unknown keys are config errors, known keys fall back to the
/// desk defaults. The sft block accepts "preset": "paper-llm" (Adam, lr 5e-6,
/// warmup 0.03) before explicit overrides.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

struct CommandOptions {
  std::string config_path;
  std::string out_dir;  // overrides the config's output_dir when non-empty
  bool force = false;
  int workers = 1;
  std::string level = "fast";  // verify only
};

/// Runs jobs over a thread pool; results must land in per-job slots. With
/// workers <= 1 the jobs run inline, in order.
void run_jobs(std::vector<std::function<void()>>& jobs, int workers);

int cmd_gen(const CommandOptions& opt, std::ostream& out);
int cmd_sft(const CommandOptions& opt, std::ostream& out);
int cmd_dpr(const CommandOptions& opt, std::ostream& out);
int cmd_sweep(const CommandOptions& opt, std::ostream& out);
int cmd_heatmap(const CommandOptions& opt, std::ostream& out);
int cmd_verify(const CommandOptions& opt, std::ostream& out);

}  // namespace densepath

#pragma once

/**
 * The default desk-scale experiment suite: one pinned random-reward
 * environment with expert demonstrations and a trained SFT pair, plus
 * helpers running the policy-gradient modes and the discount / baseline
 * sweeps over a fixed seed list. Final returns are exact occupancy
 * computations, so summaries are deterministic given the configs.
 */

#include <cstdint>
#include <vector>

#include "densepath/dpr.hpp"
#include "densepath/sft.hpp"
#include "densepath/synth_env.hpp"

namespace densepath {

struct SuiteConfig {
  EnvRecipe recipe;
  int demo_count = 2000;
  std::uint64_t dataset_seed = 11;
  SftConfig sft;
  std::uint64_t sft_seed = 3;
  DprConfig dpr;

  /// vocab 4, horizon 4, 2 prompts, reward scale 1.0, 2000 demos.
  static SuiteConfig desk_defaults();
  /// eos_trap environment with the default ln-2 margin, same training stack.
  static SuiteConfig eos_trap_defaults();
};

struct DeskSuite {
  SuiteConfig config;
  EnvSpec env;
  TreePtr tree;
  RewardFn true_reward;
  PolicyTable expert;
  Dataset data;
  SftArtifacts sft;
};

/// Generates the environment, samples demonstrations, and trains SFT once.
DeskSuite make_desk_suite(const SuiteConfig& cfg = SuiteConfig::desk_defaults(),
                          Exec exec = Exec::Serial);

std::vector<std::uint64_t> default_seeds();  // {1, 2, 3, 4, 5}

struct SeedStats {
  std::vector<double> finals;  // final exact true return, one entry per seed
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
};

SeedStats summarize(const std::vector<double>& finals);

/// One dpr_train per seed; cfg carries the reward mode.
SeedStats run_mode_over_seeds(const DeskSuite& suite, const DprConfig& cfg,
                              const std::vector<std::uint64_t>& seeds, Exec exec = Exec::Serial);

struct SweepPoint {
  double value = 0.0;  // the swept gamma or snapshot fraction
  SeedStats stats;
};

/// Reruns the modes' training at each discount with the same seed list
/// (common random numbers across points).
std::vector<SweepPoint> gamma_sweep(const DeskSuite& suite, const DprConfig& base,
                                    const std::vector<double>& gammas,
                                    const std::vector<std::uint64_t>& seeds,
                                    Exec exec = Exec::Serial);

/// One SFT pass snapshots every requested fraction; each point then trains
/// against its snapshot as the baseline with the same seed list.
std::vector<SweepPoint> alpha_sweep(const SuiteConfig& cfg, const std::vector<double>& alphas,
                                    const std::vector<std::uint64_t>& seeds,
                                    Exec exec = Exec::Serial);

}  // namespace densepath

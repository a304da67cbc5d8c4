#pragma once

/**
 * Dense-path REINFORCE: token-level policy-gradient training on recovered
 * rewards, the sparse sentence-level variant, exact-expectation policy
 * gradients, and the EOS length-collapse harness.
 *
 * Per-token rewards are r_tilde_k = r_hat(s_k, a_k) - kl_weight * (log
 * pi_phi(a_k|s_k) - log pi_sft(a_k|s_k)); returns are discounted suffix sums
 * G_t = sum_k gamma^(k-t) r_tilde_k, which at gamma = 1 are plain suffix
 * sums. All logged metrics are exact occupancy computations, not rollout
 * estimates.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "densepath/reward_lab.hpp"
#include "densepath/sft.hpp"
#include "densepath/soft_control.hpp"

namespace densepath {

enum class RewardMode { dense_baseline, logpi_raw, task_with_V, sparse_eos };

std::string reward_mode_name(RewardMode mode);
RewardMode reward_mode_from_name(const std::string& name);

struct DprConfig {
  double gamma = 1.0;
  double kl_weight = 1e-5;
  int batch_size = 16;
  double temperature = 1.0;
  double learning_rate = 0.05;
  int iterations = 0;
  RewardMode reward_mode = RewardMode::dense_baseline;
  OptKind optimizer = OptKind::SGD;

  void validate() const;
};

struct TrainRecord {
  int iteration = 0;
  double proxy_return = 0.0;
  double true_return = 0.0;  // NaN when the environment has no true reward
  double mean_length = 0.0;
  double mean_kl = 0.0;
  std::vector<double> reward_pos;  // expected token reward at position k, given position k is reached
  std::vector<double> kl_pos;      // mean KL to pi_sft at position k, given position k is reached
};

struct TrainLog {
  std::vector<TrainRecord> records;  // record 0 is the pre-training state
};

struct DprResult {
  PolicyTable policy;
  TrainLog log;
};

/// Discounted suffix sums of the KL-penalized per-token rewards (see above).
std::vector<std::vector<double>> token_returns(const std::vector<Trajectory>& trajs,
                                               const RewardFn& r_hat, double gamma,
                                               double kl_weight, const PolicyTable& pi_sft,
                                               const PolicyTable& pi_phi);

/// Sentence-level variant: the whole trajectory reward sum is delivered at
/// the final token, so every G_t equals the trajectory total.
std::vector<std::vector<double>> sr_returns(const std::vector<Trajectory>& trajs,
                                            const RewardFn& r_hat);

/// Exact metrics of a policy snapshot against the mode's base reward table.
TrainRecord train_metrics(const PolicyTable& pi_phi, const RewardFn& base,
                          const PolicyTable& pi_sft, const RewardFn* r_true,
                          Exec exec = Exec::Serial);

/// REINFORCE from pi_sft on the reward mode's recovered table: each
/// iteration samples batch_size rollouts, forms returns, and applies one
/// optimizer step. Deterministic given the seed.
DprResult dpr_train(const SftArtifacts& artifacts, const DprConfig& cfg, std::uint64_t seed,
                    Exec exec = Exec::Serial);

/// E[sum_t grad log pi(a_t|s_t) G_t] computed by dynamic programming over
/// the tree (the expectation of the sampled REINFORCE update, no sampling).
/// Ascent direction: at gamma = 1 this is the exact gradient of J_r.
GradTable exact_policy_gradient(const PolicyTable& pi, const RewardFn& r, double gamma,
                                Exec exec = Exec::Serial);

/// Max entrywise difference between the exact policy gradients under r and
/// under the teacher log-probability reward (Q - V of the soft solution for
/// r); zero in exact arithmetic at gamma = 1.
double pg_equivalence_gap(const PolicyTable& pi, const RewardFn& r, const SoftSolution& solution,
                          Exec exec = Exec::Serial);

/// Plain gradient-ascent steps on the exact policy gradient (test surrogate
/// for an infinite batch; no KL term).
PolicyTable exact_gradient_ascent(const PolicyTable& start, const RewardFn& r, double gamma,
                                  double lr, int steps, Exec exec = Exec::Serial);

struct EosPathologyResult {
  bool premise_ok = false;  // EOS is argmax of pi_sft at the root and depth-1 states
  std::vector<double> naive_lengths;     // mean length per iteration, reward_mode logpi_raw
  std::vector<double> baseline_lengths;  // mean length per iteration, reward_mode dense_baseline
};

/// Trains twice with identical seeds, once on the raw log-prob reward and
/// once on the baseline-relative reward, and reports the length curves.
EosPathologyResult eos_pathology_run(const SftArtifacts& artifacts, const DprConfig& cfg,
                                     std::uint64_t seed, Exec exec = Exec::Serial);

}  // namespace densepath

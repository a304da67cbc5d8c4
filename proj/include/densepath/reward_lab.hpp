#pragma once

/**
 * Reward recovery and its guarantees: the baseline-relative dense reward,
 * task-reward recovery from soft-optimal logits, closed-form best-response
 * rewards under the quadratic regularizer, the reward/policy error identity,
 * the safe-improvement bound, and per-token heatmap extraction.
 */

#include <vector>

#include "densepath/policy.hpp"
#include "densepath/token_mdp.hpp"

namespace densepath {

struct ContractionReport {
  double reward_error = 0.0;  // ||r_hat - saddle reward||_2 (saddle is 0)
  double policy_error = 0.0;  // ||rho_pi - rho_E||_2
  double mu = 1.0;
  bool bound_satisfied = false;  // reward_error <= policy_error / mu + 1e-9
};

struct SafeImprovementReport {
  double proxy_gain = 0.0;       // m = J_rhat(pi') - J_rhat(pi)
  double true_gain = 0.0;        // J_r(pi') - J_r(pi)
  double sup_reward_err = 0.0;   // ||r - r_hat||_inf
  int horizon = 0;
  double bound_rhs = 0.0;        // m - 2 H ||r - r_hat||_inf
  double l1_policy_dist = 0.0;   // ||rho_pi' - rho_pi||_1, always <= 2H
  bool holds = false;            // true_gain >= bound_rhs - 1e-9
};

struct HeatmapEntry {
  int position = 0;
  Token token = 0;
  double value = 0.0;
};

/// r_hat(s,a) = log pi_sft(a|s) - log pi_ref(a|s).
RewardFn dense_reward(const PolicyTable& pi_sft, const PolicyTable& pi_ref, Exec exec = Exec::Serial);

/// r(s,a) = log pi(a|s); non-positive everywhere.
RewardFn logpi_reward(const PolicyTable& pi, Exec exec = Exec::Serial);

/// Reading logits as Q: r(s,a) = theta(s,a) - V(f(s,a)) with V = logsumexp
/// of the successor row and V(terminal) = 0.
RewardFn recovered_task_reward(const PolicyTable& pi, Exec exec = Exec::Serial);

/// Best response under the quadratic regularizer (mu/2)||r||^2:
/// r_hat = (rho_E - rho_pi) / mu.
RewardFn best_response_reward(const Occupancy& rho_E, const Occupancy& rho_pi, double mu);

/// Both sides of the reward-error bound; an equality for the quadratic
/// regularizer up to roundoff.
ContractionReport dual_contraction_check(const PolicyTable& pi, const Occupancy& rho_E, double mu,
                                         Exec exec = Exec::Serial);

/// Exact occupancies of both policies, the proxy gain m under r_hat, and the
/// guarantee J_r(pi') - J_r(pi) >= m - 2H ||r - r_hat||_inf.
SafeImprovementReport safe_improvement_check(const PolicyTable& pi, const PolicyTable& pi_prime,
                                             const RewardFn& r, const RewardFn& r_hat,
                                             Exec exec = Exec::Serial);

/// max_s |V_sft(s) - V_ref(s)| with V = logsumexp of the logit row; bounds
/// the per-start-state shift between the two log-prob returns.
double baseline_gap_bound(const PolicyTable& pi_sft, const PolicyTable& pi_ref);

/// Per-token baseline-relative rewards along one trajectory.
std::vector<HeatmapEntry> token_heatmap(const PolicyTable& pi_sft, const PolicyTable& pi_ref,
                                        const Trajectory& traj);

}  // namespace densepath

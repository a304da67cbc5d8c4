#pragma once

/**
 * Tabular softmax policy over a token tree, with exact log-probabilities,
 * analytic gradients, optimizer steps, and seeded rollouts.
 *
 * Logits double as a Q-function: V(s) = logsumexp of the row and
 * log pi(a|s) = theta(s,a) - V(s), both exact by construction.
 */

#include <cstdint>
#include <vector>

#include "densepath/rng.hpp"
#include "densepath/token_mdp.hpp"
#include "densepath/types.hpp"

namespace densepath {

class PolicyTable {
 public:
  /// All logits zero: the uniform policy.
  explicit PolicyTable(TreePtr tree);
  PolicyTable(TreePtr tree, std::vector<double> logits);

  const TreePtr& tree() const { return tree_; }
  int vocab() const { return tree_->vocab(); }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& logits() { return logits_; }

  double logit(std::int32_t node, Token a) const { return logits_[tree_->edge_index(node, a)]; }
  double& logit(std::int32_t node, Token a) { return logits_[tree_->edge_index(node, a)]; }

  /// logsumexp of the row; reading logits as Q, this is the soft value.
  double row_value(std::int32_t node) const;
  double log_prob(std::int32_t node, Token a) const { return logit(node, a) - row_value(node); }
  void log_prob_row(std::int32_t node, std::vector<double>& out) const;
  void prob_row(std::int32_t node, std::vector<double>& out) const;

 private:
  TreePtr tree_;
  std::vector<double> logits_;
};

struct GradTable {
  TreePtr tree;
  std::vector<double> values;

  double at(std::int32_t node, Token a) const { return values[tree->edge_index(node, a)]; }
};

GradTable zero_grad(TreePtr tree);

enum class OptKind { SGD, Adam };

struct OptState {
  OptKind kind = OptKind::SGD;
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// Softmax of the state's logit row.
std::vector<double> action_dist(const PolicyTable& pi, const State& s);
std::vector<double> action_dist(const PolicyTable& pi, std::int32_t node);

/// Sum of log pi(a_t|s_t) along the trajectory; always <= 0.
double traj_log_prob(const PolicyTable& pi, const Trajectory& traj);

/// Gradient of the mean per-trajectory negative log-likelihood:
/// entry (s, a) accumulates (pi(a|s) - 1{a = a_expert}) / |batch|.
GradTable ce_gradient(const PolicyTable& pi, const std::vector<Trajectory>& batch);

/// Gradient of L = -(1/B) sum_i sum_t log pi(a_t|s_t) G_t with respect to the
/// logits. `returns[i][t]` is G_t of trajectory i.
GradTable reinforce_gradient(const PolicyTable& pi, const std::vector<Trajectory>& trajs,
                             const std::vector<std::vector<double>>& returns);

/// In-place optimizer step on the logits. Adam uses bias correction.
void opt_step(PolicyTable& pi, const GradTable& g, OptState& o);

/// Ancestral sampling until EOS or the horizon. The first uniform draw picks
/// the prompt from rho_0; temperature 0 is greedy with lowest-id ties.
Trajectory sample_trajectory(const PolicyTable& pi, std::uint64_t rng_seed, double temperature);

/// As above but with the prompt fixed.
Trajectory sample_trajectory_from(const PolicyTable& pi, std::size_t prompt_index,
                                  std::uint64_t rng_seed, double temperature);

/// log pi(a|s) for every edge; the building block of reward recovery.
std::vector<double> log_prob_table(const PolicyTable& pi, Exec exec = Exec::Serial);

/// KL(p(.|node) || q(.|node)) for two policies on the same tree.
double row_kl(const PolicyTable& p, const PolicyTable& q, std::int32_t node);

/// Largest absolute probability difference over all rows and actions.
double max_prob_diff(const PolicyTable& p, const PolicyTable& q);

}  // namespace densepath

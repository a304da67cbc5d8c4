#include "densepath/reward_lab.hpp"

#include <cmath>
#include <stdexcept>

namespace densepath {

RewardFn dense_reward(const PolicyTable& pi_sft, const PolicyTable& pi_ref, Exec exec) {
  if (pi_sft.tree() != pi_ref.tree()) {
    throw std::invalid_argument("policies must share a state set");
  }
  const TreePtr& tree = pi_sft.tree();
  RewardFn out{tree, std::vector<double>(tree->edge_count(), 0.0), RewardLabel::recovered_dense};
  kernels::parallel_for(exec, tree->node_count(), [&](std::size_t n) {
    const auto node = static_cast<std::int32_t>(n);
    std::vector<double> lp_sft;
    std::vector<double> lp_ref;
    pi_sft.log_prob_row(node, lp_sft);
    pi_ref.log_prob_row(node, lp_ref);
    const std::size_t base = tree->edge_index(node, 0);
    for (std::size_t a = 0; a < lp_sft.size(); ++a) out.values[base + a] = lp_sft[a] - lp_ref[a];
  });
  return out;
}

RewardFn logpi_reward(const PolicyTable& pi, Exec exec) {
  const TreePtr& tree = pi.tree();
  RewardFn out{tree, log_prob_table(pi, exec), RewardLabel::logpi_raw};
  return out;
}

RewardFn recovered_task_reward(const PolicyTable& pi, Exec exec) {
  const TreePtr& tree = pi.tree();
  RewardFn out{tree, std::vector<double>(tree->edge_count(), 0.0), RewardLabel::recovered_task};
  const int V = tree->vocab();
  kernels::parallel_for(exec, tree->node_count(), [&](std::size_t n) {
    const auto node = static_cast<std::int32_t>(n);
    const std::size_t base = tree->edge_index(node, 0);
    for (Token a = 0; a < V; ++a) {
      const std::int32_t c = tree->child(node, a);
      const double v_next = c < 0 ? 0.0 : pi.row_value(c);
      out.values[base + static_cast<std::size_t>(a)] = pi.logit(node, a) - v_next;
    }
  });
  return out;
}

RewardFn best_response_reward(const Occupancy& rho_E, const Occupancy& rho_pi, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  if (rho_E.tree != rho_pi.tree) throw std::invalid_argument("occupancies must share a tree");
  RewardFn out{rho_E.tree, std::vector<double>(rho_E.mass.size(), 0.0), RewardLabel::best_response};
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = (rho_E.mass[i] - rho_pi.mass[i]) / mu;
  }
  return out;
}

ContractionReport dual_contraction_check(const PolicyTable& pi, const Occupancy& rho_E, double mu,
                                         Exec exec) {
  const Occupancy rho_pi = occupancy(pi, exec);
  const RewardFn r_hat = best_response_reward(rho_E, rho_pi, mu);
  const std::vector<double> zeros(r_hat.values.size(), 0.0);
  ContractionReport rep;
  rep.mu = mu;
  rep.reward_error = std::sqrt(kernels::sum_sq_diff(exec, r_hat.values, zeros));
  rep.policy_error = occupancy_distance(rho_pi, rho_E, Norm::L2, exec);
  rep.bound_satisfied = rep.reward_error <= rep.policy_error / mu + 1e-9;
  return rep;
}

SafeImprovementReport safe_improvement_check(const PolicyTable& pi, const PolicyTable& pi_prime,
                                             const RewardFn& r, const RewardFn& r_hat, Exec exec) {
  if (pi.tree() != pi_prime.tree() || r.tree != pi.tree() || r_hat.tree != pi.tree()) {
    throw std::invalid_argument("inputs must share a tree");
  }
  const Occupancy rho = occupancy(pi, exec);
  const Occupancy rho_prime = occupancy(pi_prime, exec);
  SafeImprovementReport rep;
  rep.horizon = pi.tree()->horizon();
  rep.proxy_gain = expected_return(rho_prime, r_hat, exec) - expected_return(rho, r_hat, exec);
  rep.true_gain = expected_return(rho_prime, r, exec) - expected_return(rho, r, exec);
  rep.sup_reward_err = kernels::max_abs_diff(exec, r.values, r_hat.values);
  rep.bound_rhs = rep.proxy_gain - 2.0 * rep.horizon * rep.sup_reward_err;
  rep.l1_policy_dist = occupancy_distance(rho_prime, rho, Norm::L1, exec);
  rep.holds = rep.true_gain >= rep.bound_rhs - 1e-9;
  return rep;
}

double baseline_gap_bound(const PolicyTable& pi_sft, const PolicyTable& pi_ref) {
  if (pi_sft.tree() != pi_ref.tree()) {
    throw std::invalid_argument("policies must share a state set");
  }
  double m = 0.0;
  for (std::size_t n = 0; n < pi_sft.tree()->node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    m = std::max(m, std::abs(pi_sft.row_value(node) - pi_ref.row_value(node)));
  }
  return m;
}

std::vector<HeatmapEntry> token_heatmap(const PolicyTable& pi_sft, const PolicyTable& pi_ref,
                                        const Trajectory& traj) {
  if (pi_sft.tree() != pi_ref.tree()) {
    throw std::invalid_argument("policies must share a state set");
  }
  const auto nodes = pi_sft.tree()->nodes_on(traj);
  std::vector<HeatmapEntry> out;
  out.reserve(nodes.size());
  for (std::size_t t = 0; t < nodes.size(); ++t) {
    const Token a = traj.actions[t];
    out.push_back(HeatmapEntry{static_cast<int>(t), a,
                               pi_sft.log_prob(nodes[t], a) - pi_ref.log_prob(nodes[t], a)});
  }
  return out;
}

}  // namespace densepath

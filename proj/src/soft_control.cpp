#include "densepath/soft_control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace densepath {

Potential zero_potential(TreePtr tree) {
  std::vector<double> nodes(tree->node_count(), 0.0);
  std::vector<double> terms(tree->edge_count(), 0.0);
  return Potential{std::move(tree), std::move(nodes), std::move(terms)};
}

double soft_value(const std::vector<double>& q_row, double beta) {
  if (q_row.empty()) throw std::invalid_argument("empty Q row");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  double m = -HUGE_VAL;
  for (double q : q_row) {
    if (!std::isfinite(q)) throw std::invalid_argument("non-finite Q value");
    m = std::max(m, q / beta);
  }
  // Max-shifted log-sum-exp, equal to the plain formula in exact arithmetic.
  double s = 0.0;
  for (double q : q_row) s += std::exp(q / beta - m);
  return beta * (m + std::log(s));
}

std::vector<double> boltzmann(const std::vector<double>& q_row, double beta) {
  const double value = soft_value(q_row, beta);
  std::vector<double> out(q_row.size());
  for (std::size_t a = 0; a < q_row.size(); ++a) out[a] = std::exp((q_row[a] - value) / beta);
  return out;
}

SoftSolution soft_backward_induction(const RewardFn& r, double beta, Exec exec) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  const TreePtr& tree = r.tree;
  SoftSolution sol{tree, std::vector<double>(tree->edge_count(), 0.0),
                   std::vector<double>(tree->node_count(), 0.0), beta};
  const int V = tree->vocab();
  // Deepest layer first; within a layer every node depends only on deeper
  // values, so the per-node work is independent.
  for (int d = tree->max_depth(); d >= 0; --d) {
    const auto& layer = tree->layer(d);
    kernels::parallel_for(exec, layer.size(), [&](std::size_t i) {
      const std::int32_t n = layer[i];
      const std::size_t base = tree->edge_index(n, 0);
      double m = -HUGE_VAL;
      for (Token a = 0; a < V; ++a) {
        const std::int32_t c = tree->child(n, a);
        const double vnext = c < 0 ? 0.0 : sol.v[static_cast<std::size_t>(c)];
        const double q = r.values[base + static_cast<std::size_t>(a)] + vnext;
        sol.q[base + static_cast<std::size_t>(a)] = q;
        m = std::max(m, q / beta);
      }
      // Max-shifted log-sum-exp (see soft_value).
      double s = 0.0;
      for (Token a = 0; a < V; ++a) {
        s += std::exp(sol.q[base + static_cast<std::size_t>(a)] / beta - m);
      }
      sol.v[static_cast<std::size_t>(n)] = beta * (m + std::log(s));
    });
  }
  return sol;
}

RewardFn shape_reward(const RewardFn& r, const Potential& f) {
  if (r.tree != f.tree) throw std::invalid_argument("reward and potential must share a tree");
  const TreePtr& tree = r.tree;
  RewardFn out{tree, std::vector<double>(tree->edge_count(), 0.0), RewardLabel::shaped};
  const int V = tree->vocab();
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    const double fn = f.at_node(node);
    const std::size_t base = tree->edge_index(node, 0);
    for (Token a = 0; a < V; ++a) {
      out.values[base + static_cast<std::size_t>(a)] =
          r.values[base + static_cast<std::size_t>(a)] + f.at_successor(node, a) - fn;
    }
  }
  return out;
}

std::vector<double> boltzmann_logits(const SoftSolution& sol) {
  std::vector<double> logits(sol.q.size());
  for (std::size_t i = 0; i < sol.q.size(); ++i) logits[i] = sol.q[i] / sol.beta;
  return logits;
}

}  // namespace densepath

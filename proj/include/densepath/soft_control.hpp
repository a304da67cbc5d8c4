#pragma once

/**
 * Entropy-regularized optimality on the token tree: soft values, Boltzmann
 * policies, exact finite-horizon backward induction (gamma = 1, terminal
 * value 0), and potential-based reward shaping.
 */

#include <vector>

#include "densepath/token_mdp.hpp"

namespace densepath {

/// Exact solution of the soft Bellman equations for one (reward, beta):
/// Q(s,a) = r(s,a) + V(f(s,a)), V(s) = beta * log sum_a exp(Q(s,a)/beta),
/// V(terminal) = 0.
struct SoftSolution {
  TreePtr tree;
  std::vector<double> q;  // per edge
  std::vector<double> v;  // per node
  double beta = 1.0;

  double q_at(std::int32_t node, Token a) const { return q[tree->edge_index(node, a)]; }
  double v_at(std::int32_t node) const { return v[static_cast<std::size_t>(node)]; }
  /// V at the successor of (node, a); 0 when the successor is terminal.
  double v_next(std::int32_t node, Token a) const {
    const std::int32_t c = tree->child(node, a);
    return c < 0 ? 0.0 : v[static_cast<std::size_t>(c)];
  }
};

/// State potential F, defined on every reachable state including terminals.
/// Terminal states are keyed by the edge that reaches them.
struct Potential {
  TreePtr tree;
  std::vector<double> node_values;      // per non-terminal node
  std::vector<double> terminal_values;  // per edge, read only where the child is terminal

  double at_node(std::int32_t node) const { return node_values[static_cast<std::size_t>(node)]; }
  /// F at the successor of (node, a).
  double at_successor(std::int32_t node, Token a) const {
    const std::int32_t c = tree->child(node, a);
    return c < 0 ? terminal_values[tree->edge_index(node, a)] : node_values[static_cast<std::size_t>(c)];
  }
};

Potential zero_potential(TreePtr tree);

/// beta * log sum_a exp(q_a / beta), max-shifted.
double soft_value(const std::vector<double>& q_row, double beta);

/// exp((q_a - soft_value(q)) / beta); positive, sums to 1.
std::vector<double> boltzmann(const std::vector<double>& q_row, double beta);

/// Exact backward pass from depth H-1 to the roots.
SoftSolution soft_backward_induction(const RewardFn& r, double beta, Exec exec = Exec::Serial);

/// r^F(s,a) = r(s,a) + F(f(s,a)) - F(s).
RewardFn shape_reward(const RewardFn& r, const Potential& f);

/// The soft-optimal Boltzmann policy as a logit table (logits = Q / beta,
/// so the induced softmax is exp((Q - V)/beta)).
std::vector<double> boltzmann_logits(const SoftSolution& sol);

}  // namespace densepath

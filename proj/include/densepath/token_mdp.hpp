#pragma once

/**
 * Exact representation of the token MDP as an explicit prefix forest.
 *
 * A Tree materializes every reachable non-terminal state of an EnvSpec in
 * depth-first order (prompts in listed order, children in token-id order).
 * States are identified by dense node indices; (state, action) pairs by
 * edge indices node * vocab_size + action. Terminal successors are not
 * nodes: an edge whose child index is -1 ends the episode.
 *
 * All occupancy, value, reward, and gradient tables over one environment
 * share the Tree via TreePtr and store one double per edge (or per node),
 * which keeps every computation exact, dense, and allocation-predictable.
 */

#include <memory>
#include <vector>

#include "densepath/kernels.hpp"
#include "densepath/types.hpp"

namespace densepath {

class Tree;
using TreePtr = std::shared_ptr<const Tree>;
class PolicyTable;

class Tree {
 public:
  /// Enumerates the forest; throws EnumerationCapError before allocating if
  /// the entry count exceeds `cap`.
  static TreePtr build(EnvSpec env, std::uint64_t cap = kDefaultEnumerationCap);

  const EnvSpec& env() const { return env_; }
  int vocab() const { return env_.vocab_size; }
  int horizon() const { return env_.horizon; }
  std::size_t node_count() const { return depth_.size(); }
  std::size_t edge_count() const { return child_.size(); }

  std::int32_t parent(std::int32_t n) const { return parent_[static_cast<std::size_t>(n)]; }
  Token action_from_parent(std::int32_t n) const { return action_in_[static_cast<std::size_t>(n)]; }
  int depth(std::int32_t n) const { return depth_[static_cast<std::size_t>(n)]; }
  int prompt_of(std::int32_t n) const { return prompt_of_[static_cast<std::size_t>(n)]; }

  /// Successor node of (n, a); -1 when f(s,a) is terminal.
  std::int32_t child(std::int32_t n, Token a) const {
    return child_[static_cast<std::size_t>(n) * static_cast<std::size_t>(env_.vocab_size) +
                  static_cast<std::size_t>(a)];
  }
  bool edge_terminal(std::int32_t n, Token a) const { return child(n, a) < 0; }
  std::size_t edge_index(std::int32_t n, Token a) const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(env_.vocab_size) +
           static_cast<std::size_t>(a);
  }

  std::int32_t root(std::size_t prompt_index) const { return roots_[prompt_index]; }
  const std::vector<std::int32_t>& layer(int d) const { return layers_[static_cast<std::size_t>(d)]; }
  int max_depth() const { return static_cast<int>(layers_.size()) - 1; }

  std::vector<Token> generated_of(std::int32_t n) const;
  State state_of(std::int32_t n) const;

  /// Node index of a non-terminal state, or -1 if the state is terminal,
  /// unreachable, or uses an unknown prompt.
  std::int32_t find_node(const std::vector<Token>& prompt, const std::vector<Token>& generated) const;
  std::int32_t find_node(const State& s) const;

  /// Node of the full token sequence prompt++generated (prompts are
  /// prefix-free, so the split is unique); -1 if not a non-terminal state.
  std::int32_t find_node_by_sequence(const std::vector<Token>& full) const;

  /// Nodes s_0..s_{T-1} visited by a trajectory; throws std::invalid_argument
  /// unless the trajectory is valid and ends in a terminal transition.
  std::vector<std::int32_t> nodes_on(const Trajectory& traj) const;

 private:
  Tree() = default;

  EnvSpec env_;
  std::vector<std::int32_t> parent_;
  std::vector<Token> action_in_;
  std::vector<std::int32_t> depth_;
  std::vector<std::int32_t> prompt_of_;
  std::vector<std::int32_t> child_;
  std::vector<std::int32_t> roots_;
  std::vector<std::vector<std::int32_t>> layers_;
};

/// Deterministic transition f(s,a) = s|a.
State step(const EnvSpec& env, const State& s, Token a);

/// All reachable non-terminal states below one prompt, depth-first order.
std::vector<State> enumerate_states(const EnvSpec& env, const std::vector<Token>& prompt,
                                    std::uint64_t cap = kDefaultEnumerationCap);

/// State-action visitation mass of a policy, one double per edge.
struct Occupancy {
  TreePtr tree;
  std::vector<double> mass;

  double at(std::int32_t node, Token a) const { return mass[tree->edge_index(node, a)]; }
  /// Mass of (state, action); 0 for states outside the non-terminal forest.
  double at(const State& s, Token a) const;
  double total_mass(Exec exec = Exec::Serial) const;
  /// Per-node visit probability p(s) = sum_a rho(s, a).
  std::vector<double> node_mass() const;
};

enum class Norm { L1, L2, Linf };

enum class RewardLabel {
  ground_truth,
  recovered_dense,
  logpi_raw,
  recovered_task,
  best_response,
  shaped,
  custom,
};

/// Token-level reward table r(s, a), one double per edge.
struct RewardFn {
  TreePtr tree;
  std::vector<double> values;
  RewardLabel label = RewardLabel::custom;

  double at(std::int32_t node, Token a) const { return values[tree->edge_index(node, a)]; }
};

/// Zero-initialized reward table.
RewardFn zero_reward(TreePtr tree, RewardLabel label = RewardLabel::custom);

/// Dense table of the environment's ground-truth reward (entries absent from
/// the sparse spec are 0). Requires env.has_true_reward.
RewardFn ground_truth_reward(TreePtr tree);

/// Exact occupancy of `pi` by a forward pass over depth layers:
/// root mass = prompt weight, mass propagates as parent mass times pi(a|s).
Occupancy occupancy(const PolicyTable& pi, Exec exec = Exec::Serial);

/// Raw visit counts of a trajectory collection; `normalize` divides by the
/// number of trajectories, the scale comparable with policy occupancies.
Occupancy empirical_occupancy(TreePtr tree, const std::vector<Trajectory>& trajs, bool normalize);

/// Norm of the difference table. Occupancies on different trees are compared
/// over the union of (full token sequence, action) keys, absent keys as 0.
double occupancy_distance(const Occupancy& a, const Occupancy& b, Norm norm,
                          Exec exec = Exec::Serial);

/// J_r = <rho, r>. The reward must live on the same tree.
double expected_return(const Occupancy& rho, const RewardFn& r, Exec exec = Exec::Serial);

}  // namespace densepath

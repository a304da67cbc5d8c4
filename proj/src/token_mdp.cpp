#include "densepath/token_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "densepath/policy.hpp"

namespace densepath {

namespace {

bool is_prefix(const std::vector<Token>& a, const std::vector<Token>& b) {
  if (a.size() > b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace

TreePtr Tree::build(EnvSpec env, std::uint64_t cap) {
  env.validate();
  const std::uint64_t entries = enumeration_entry_count(env);
  if (entries > cap) throw EnumerationCapError(entries, cap);

  auto tree = std::shared_ptr<Tree>(new Tree());
  tree->env_ = std::move(env);
  const EnvSpec& e = tree->env_;
  const int V = e.vocab_size;
  const int H = e.horizon;

  tree->parent_.reserve(entries / V);
  tree->child_.reserve(entries);
  tree->layers_.resize(static_cast<std::size_t>(H));

  auto create_node = [&](std::int32_t parent, Token ain, int depth, int prompt) {
    const auto n = static_cast<std::int32_t>(tree->depth_.size());
    tree->parent_.push_back(parent);
    tree->action_in_.push_back(ain);
    tree->depth_.push_back(depth);
    tree->prompt_of_.push_back(prompt);
    tree->child_.resize(tree->child_.size() + static_cast<std::size_t>(V), -1);
    tree->layers_[static_cast<std::size_t>(depth)].push_back(n);
    return n;
  };

  // Iterative preorder DFS (children in token-id order); recursion depth can
  // reach the horizon, which the cap does not bound for small vocabularies.
  struct Frame {
    std::int32_t node;
    Token next_action;
  };
  for (std::size_t p = 0; p < e.prompts.size(); ++p) {
    std::vector<Frame> stack;
    tree->roots_.push_back(create_node(-1, -1, 0, static_cast<int>(p)));
    stack.push_back({tree->roots_.back(), 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      const int depth = tree->depth_[static_cast<std::size_t>(f.node)];
      Token a = f.next_action;
      while (a < V && (a == e.eos || depth + 1 >= H)) ++a;
      if (a >= V) {
        stack.pop_back();
        continue;
      }
      f.next_action = a + 1;
      const std::int32_t c = create_node(f.node, a, depth + 1, tree->prompt_of_[static_cast<std::size_t>(f.node)]);
      tree->child_[tree->edge_index(f.node, a)] = c;
      stack.push_back({c, 0});
    }
  }
  return tree;
}

std::vector<Token> Tree::generated_of(std::int32_t n) const {
  std::vector<Token> out;
  out.reserve(static_cast<std::size_t>(depth(n)));
  for (std::int32_t cur = n; parent_[static_cast<std::size_t>(cur)] >= 0;
       cur = parent_[static_cast<std::size_t>(cur)]) {
    out.push_back(action_in_[static_cast<std::size_t>(cur)]);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

State Tree::state_of(std::int32_t n) const {
  return State{env_.prompts[static_cast<std::size_t>(prompt_of(n))].tokens, generated_of(n), false};
}

std::int32_t Tree::find_node(const std::vector<Token>& prompt,
                             const std::vector<Token>& generated) const {
  std::int32_t n = -1;
  for (std::size_t p = 0; p < env_.prompts.size(); ++p) {
    if (env_.prompts[p].tokens == prompt) {
      n = roots_[p];
      break;
    }
  }
  if (n < 0) return -1;
  for (Token a : generated) {
    if (a < 0 || a >= env_.vocab_size) return -1;
    n = child(n, a);
    if (n < 0) return -1;
  }
  return n;
}

std::int32_t Tree::find_node(const State& s) const {
  if (s.terminal) return -1;
  return find_node(s.prompt, s.generated);
}

std::int32_t Tree::find_node_by_sequence(const std::vector<Token>& full) const {
  for (std::size_t p = 0; p < env_.prompts.size(); ++p) {
    const auto& pt = env_.prompts[p].tokens;
    if (is_prefix(pt, full)) {
      return find_node(pt, std::vector<Token>(full.begin() + static_cast<std::ptrdiff_t>(pt.size()),
                                              full.end()));
    }
  }
  return -1;
}

std::vector<std::int32_t> Tree::nodes_on(const Trajectory& traj) const {
  validate_trajectory(env_, traj);
  std::int32_t n = find_node(traj.prompt, {});
  if (n < 0) throw std::invalid_argument("trajectory prompt is not in the environment");
  std::vector<std::int32_t> nodes;
  nodes.reserve(traj.actions.size());
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    nodes.push_back(n);
    const std::int32_t c = child(n, traj.actions[t]);
    if (t + 1 < traj.actions.size()) {
      n = c;
    } else if (c >= 0) {
      throw std::invalid_argument("trajectory does not end in a terminal transition");
    }
  }
  return nodes;
}

State step(const EnvSpec& env, const State& s, Token a) {
  if (s.terminal) throw std::invalid_argument("cannot step a terminal state");
  if (a < 0 || a >= env.vocab_size) throw std::invalid_argument("action out of range");
  if (s.generated.size() >= static_cast<std::size_t>(env.horizon)) {
    throw std::invalid_argument("state exceeds the horizon");
  }
  State next = s;
  next.generated.push_back(a);
  next.terminal = (a == env.eos) || (next.generated.size() == static_cast<std::size_t>(env.horizon));
  return next;
}

std::vector<State> enumerate_states(const EnvSpec& env, const std::vector<Token>& prompt,
                                    std::uint64_t cap) {
  EnvSpec single = env;
  single.prompts = {PromptEntry{prompt, 1.0}};
  const TreePtr tree = Tree::build(std::move(single), cap);
  std::vector<State> out;
  out.reserve(tree->node_count());
  // Preorder shares ancestor prefixes, so the running token buffer only needs
  // truncation plus one write per node.
  std::vector<Token> gen;
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    const auto d = static_cast<std::size_t>(tree->depth(node));
    gen.resize(d);
    if (d > 0) gen[d - 1] = tree->action_from_parent(node);
    out.push_back(State{prompt, gen, false});
  }
  return out;
}

double Occupancy::at(const State& s, Token a) const {
  const std::int32_t n = tree->find_node(s);
  if (n < 0) return 0.0;
  return mass[tree->edge_index(n, a)];
}

double Occupancy::total_mass(Exec exec) const { return kernels::sum(exec, mass); }

std::vector<double> Occupancy::node_mass() const {
  std::vector<double> out(tree->node_count(), 0.0);
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    if (tree->parent(node) < 0) {
      out[n] = tree->env().prompts[static_cast<std::size_t>(tree->prompt_of(node))].weight;
    } else {
      out[n] = mass[tree->edge_index(tree->parent(node), tree->action_from_parent(node))];
    }
  }
  return out;
}

RewardFn zero_reward(TreePtr tree, RewardLabel label) {
  std::vector<double> v(tree->edge_count(), 0.0);
  return RewardFn{std::move(tree), std::move(v), label};
}

RewardFn ground_truth_reward(TreePtr tree) {
  const EnvSpec& env = tree->env();
  if (!env.has_true_reward) throw std::invalid_argument("environment has no true_reward");
  RewardFn r = zero_reward(tree, RewardLabel::ground_truth);
  std::vector<bool> seen(tree->edge_count(), false);
  for (const auto& e : env.true_reward) {
    const std::int32_t n = tree->find_node_by_sequence(e.state);
    if (n < 0) throw std::invalid_argument("true_reward entry is not a reachable non-terminal state");
    const std::size_t idx = tree->edge_index(n, e.action);
    if (seen[idx]) throw std::invalid_argument("duplicate true_reward entry");
    seen[idx] = true;
    r.values[idx] = e.value;
  }
  return r;
}

Occupancy occupancy(const PolicyTable& pi, Exec exec) {
  const TreePtr& tree = pi.tree();
  Occupancy occ{tree, std::vector<double>(tree->edge_count(), 0.0)};
  const int V = tree->vocab();
  // Forward pass over depth layers; nodes within a layer are independent and
  // each writes only its own outgoing edges.
  for (int d = 0; d <= tree->max_depth(); ++d) {
    const auto& layer = tree->layer(d);
    kernels::parallel_for(exec, layer.size(), [&](std::size_t i) {
      const std::int32_t n = layer[i];
      double node_mass;
      if (tree->parent(n) < 0) {
        node_mass = tree->env().prompts[static_cast<std::size_t>(tree->prompt_of(n))].weight;
      } else {
        node_mass = occ.mass[tree->edge_index(tree->parent(n), tree->action_from_parent(n))];
      }
      std::vector<double> probs;
      pi.prob_row(n, probs);
      for (Token a = 0; a < V; ++a) {
        occ.mass[tree->edge_index(n, a)] = node_mass * probs[static_cast<std::size_t>(a)];
      }
    });
  }
  return occ;
}

Occupancy empirical_occupancy(TreePtr tree, const std::vector<Trajectory>& trajs, bool normalize) {
  Occupancy occ{tree, std::vector<double>(tree->edge_count(), 0.0)};
  const double w = normalize ? 1.0 / static_cast<double>(trajs.size()) : 1.0;
  for (const auto& traj : trajs) {
    const auto nodes = tree->nodes_on(traj);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      occ.mass[tree->edge_index(nodes[t], traj.actions[t])] += w;
    }
  }
  return occ;
}

namespace {

using SparseOcc = std::map<std::pair<std::vector<Token>, Token>, double>;

SparseOcc to_sparse(const Occupancy& occ) {
  SparseOcc out;
  const auto& tree = *occ.tree;
  const int V = tree.vocab();
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    std::vector<Token> full = tree.env().prompts[static_cast<std::size_t>(tree.prompt_of(node))].tokens;
    const auto gen = tree.generated_of(node);
    full.insert(full.end(), gen.begin(), gen.end());
    for (Token a = 0; a < V; ++a) {
      out[{full, a}] = occ.mass[tree.edge_index(node, a)];
    }
  }
  return out;
}

double norm_accumulate(Norm norm, double acc, double diff) {
  switch (norm) {
    case Norm::L1:
      return acc + std::abs(diff);
    case Norm::L2:
      return acc + diff * diff;
    case Norm::Linf:
      return std::max(acc, std::abs(diff));
  }
  return acc;
}

}  // namespace

double occupancy_distance(const Occupancy& a, const Occupancy& b, Norm norm, Exec exec) {
  if (a.tree == b.tree) {
    switch (norm) {
      case Norm::L1:
        return kernels::sum_abs_diff(exec, a.mass, b.mass);
      case Norm::L2:
        return std::sqrt(kernels::sum_sq_diff(exec, a.mass, b.mass));
      case Norm::Linf:
        return kernels::max_abs_diff(exec, a.mass, b.mass);
    }
  }
  // Different environments: compare over the union of (token sequence,
  // action) keys, absent entries as zero mass.
  const SparseOcc sa = to_sparse(a);
  const SparseOcc sb = to_sparse(b);
  double acc = 0.0;
  auto ia = sa.begin();
  auto ib = sb.begin();
  while (ia != sa.end() || ib != sb.end()) {
    if (ib == sb.end() || (ia != sa.end() && ia->first < ib->first)) {
      acc = norm_accumulate(norm, acc, ia->second);
      ++ia;
    } else if (ia == sa.end() || ib->first < ia->first) {
      acc = norm_accumulate(norm, acc, -ib->second);
      ++ib;
    } else {
      acc = norm_accumulate(norm, acc, ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return norm == Norm::L2 ? std::sqrt(acc) : acc;
}

double expected_return(const Occupancy& rho, const RewardFn& r, Exec exec) {
  if (rho.tree != r.tree) throw std::invalid_argument("occupancy and reward must share a tree");
  return kernels::dot(exec, rho.mass, r.values);
}

}  // namespace densepath

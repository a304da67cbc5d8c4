#include "densepath/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace densepath {

PolicyTable::PolicyTable(TreePtr tree)
    : tree_(std::move(tree)), logits_(tree_->edge_count(), 0.0) {}

PolicyTable::PolicyTable(TreePtr tree, std::vector<double> logits)
    : tree_(std::move(tree)), logits_(std::move(logits)) {
  if (logits_.size() != tree_->edge_count()) {
    throw std::invalid_argument("logit table size does not match the tree");
  }
}

double PolicyTable::row_value(std::int32_t node) const {
  // Max-shifted log-sum-exp: equal in exact arithmetic to log(sum(exp)),
  // used everywhere to keep exp() in range.
  const std::size_t base = tree_->edge_index(node, 0);
  const int V = vocab();
  double m = logits_[base];
  for (int a = 1; a < V; ++a) m = std::max(m, logits_[base + static_cast<std::size_t>(a)]);
  double s = 0.0;
  for (int a = 0; a < V; ++a) s += std::exp(logits_[base + static_cast<std::size_t>(a)] - m);
  return m + std::log(s);
}

void PolicyTable::log_prob_row(std::int32_t node, std::vector<double>& out) const {
  const std::size_t base = tree_->edge_index(node, 0);
  const int V = vocab();
  const double value = row_value(node);
  out.resize(static_cast<std::size_t>(V));
  for (int a = 0; a < V; ++a) out[static_cast<std::size_t>(a)] = logits_[base + static_cast<std::size_t>(a)] - value;
}

void PolicyTable::prob_row(std::int32_t node, std::vector<double>& out) const {
  log_prob_row(node, out);
  for (double& x : out) x = std::exp(x);
}

GradTable zero_grad(TreePtr tree) {
  std::vector<double> v(tree->edge_count(), 0.0);
  return GradTable{std::move(tree), std::move(v)};
}

std::vector<double> action_dist(const PolicyTable& pi, std::int32_t node) {
  std::vector<double> out;
  pi.prob_row(node, out);
  return out;
}

std::vector<double> action_dist(const PolicyTable& pi, const State& s) {
  const std::int32_t n = pi.tree()->find_node(s);
  if (n < 0) throw std::invalid_argument("state has no logit row");
  return action_dist(pi, n);
}

double traj_log_prob(const PolicyTable& pi, const Trajectory& traj) {
  const auto nodes = pi.tree()->nodes_on(traj);
  double total = 0.0;
  for (std::size_t t = 0; t < nodes.size(); ++t) {
    total += pi.log_prob(nodes[t], traj.actions[t]);
  }
  return total;
}

GradTable ce_gradient(const PolicyTable& pi, const std::vector<Trajectory>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const TreePtr& tree = pi.tree();
  GradTable g = zero_grad(tree);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const int V = pi.vocab();
  std::vector<double> probs;
  for (const auto& traj : batch) {
    const auto nodes = tree->nodes_on(traj);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      pi.prob_row(nodes[t], probs);
      const std::size_t base = tree->edge_index(nodes[t], 0);
      for (int a = 0; a < V; ++a) {
        g.values[base + static_cast<std::size_t>(a)] += probs[static_cast<std::size_t>(a)] * inv_b;
      }
      g.values[base + static_cast<std::size_t>(traj.actions[t])] -= inv_b;
    }
  }
  return g;
}

GradTable reinforce_gradient(const PolicyTable& pi, const std::vector<Trajectory>& trajs,
                             const std::vector<std::vector<double>>& returns) {
  if (trajs.empty()) throw std::invalid_argument("empty batch");
  if (returns.size() != trajs.size()) throw std::invalid_argument("returns misaligned with trajectories");
  const TreePtr& tree = pi.tree();
  GradTable g = zero_grad(tree);
  const double inv_b = 1.0 / static_cast<double>(trajs.size());
  const int V = pi.vocab();
  std::vector<double> probs;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto nodes = tree->nodes_on(trajs[i]);
    if (returns[i].size() != nodes.size()) {
      throw std::invalid_argument("returns misaligned with trajectory tokens");
    }
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      pi.prob_row(nodes[t], probs);
      const std::size_t base = tree->edge_index(nodes[t], 0);
      const double scale = returns[i][t] * inv_b;
      for (int a = 0; a < V; ++a) {
        g.values[base + static_cast<std::size_t>(a)] += probs[static_cast<std::size_t>(a)] * scale;
      }
      g.values[base + static_cast<std::size_t>(trajs[i].actions[t])] -= scale;
    }
  }
  return g;
}

void opt_step(PolicyTable& pi, const GradTable& g, OptState& o) {
  if (g.tree != pi.tree()) throw std::invalid_argument("gradient and policy must share a tree");
  auto& theta = pi.logits();
  if (o.kind == OptKind::SGD) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= o.lr * g.values[i];
    ++o.step;
    return;
  }
  if (o.m.empty()) {
    o.m.assign(theta.size(), 0.0);
    o.v.assign(theta.size(), 0.0);
  }
  ++o.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(o.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(o.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    o.m[i] = o.beta1 * o.m[i] + (1.0 - o.beta1) * g.values[i];
    o.v[i] = o.beta2 * o.v[i] + (1.0 - o.beta2) * g.values[i] * g.values[i];
    const double mhat = o.m[i] / bc1;
    const double vhat = o.v[i] / bc2;
    theta[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
  }
}

namespace {

Token sample_action(const PolicyTable& pi, std::int32_t node, double temperature, RngStream& rng) {
  const int V = pi.vocab();
  if (temperature == 0.0) {
    Token best = 0;
    double best_logit = pi.logit(node, 0);
    for (Token a = 1; a < V; ++a) {
      const double l = pi.logit(node, a);
      if (l > best_logit) {
        best_logit = l;
        best = a;
      }
    }
    return best;
  }
  // Temperature-scaled softmax, inverse-CDF selection in token-id order.
  std::vector<double> scaled(static_cast<std::size_t>(V));
  double m = -HUGE_VAL;
  for (Token a = 0; a < V; ++a) {
    scaled[static_cast<std::size_t>(a)] = pi.logit(node, a) / temperature;
    m = std::max(m, scaled[static_cast<std::size_t>(a)]);
  }
  double z = 0.0;
  for (double& x : scaled) {
    x = std::exp(x - m);
    z += x;
  }
  const double u = rng.uniform() * z;
  double cum = 0.0;
  for (Token a = 0; a < V; ++a) {
    cum += scaled[static_cast<std::size_t>(a)];
    if (u < cum) return a;
  }
  return static_cast<Token>(V - 1);
}

Trajectory rollout(const PolicyTable& pi, std::size_t prompt_index, double temperature,
                   RngStream& rng) {
  const auto& tree = *pi.tree();
  Trajectory traj;
  traj.prompt = tree.env().prompts[prompt_index].tokens;
  std::int32_t n = tree.root(prompt_index);
  for (;;) {
    const Token a = sample_action(pi, n, temperature, rng);
    traj.actions.push_back(a);
    const std::int32_t c = tree.child(n, a);
    if (c < 0) break;
    n = c;
  }
  return traj;
}

}  // namespace

Trajectory sample_trajectory(const PolicyTable& pi, std::uint64_t rng_seed, double temperature) {
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  RngStream rng(rng_seed);
  const auto& prompts = pi.tree()->env().prompts;
  const double u = rng.uniform();
  std::size_t pidx = prompts.size() - 1;
  double cum = 0.0;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    cum += prompts[p].weight;
    if (u < cum) {
      pidx = p;
      break;
    }
  }
  return rollout(pi, pidx, temperature, rng);
}

Trajectory sample_trajectory_from(const PolicyTable& pi, std::size_t prompt_index,
                                  std::uint64_t rng_seed, double temperature) {
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (prompt_index >= pi.tree()->env().prompts.size()) {
    throw std::invalid_argument("prompt index out of range");
  }
  RngStream rng(rng_seed);
  return rollout(pi, prompt_index, temperature, rng);
}

std::vector<double> log_prob_table(const PolicyTable& pi, Exec exec) {
  const auto& tree = *pi.tree();
  std::vector<double> out(tree.edge_count(), 0.0);
  kernels::parallel_for(exec, tree.node_count(), [&](std::size_t n) {
    std::vector<double> row;
    pi.log_prob_row(static_cast<std::int32_t>(n), row);
    const std::size_t base = tree.edge_index(static_cast<std::int32_t>(n), 0);
    for (std::size_t a = 0; a < row.size(); ++a) out[base + a] = row[a];
  });
  return out;
}

double row_kl(const PolicyTable& p, const PolicyTable& q, std::int32_t node) {
  std::vector<double> lp;
  std::vector<double> lq;
  p.log_prob_row(node, lp);
  q.log_prob_row(node, lq);
  double kl = 0.0;
  for (std::size_t a = 0; a < lp.size(); ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  return kl;
}

double max_prob_diff(const PolicyTable& p, const PolicyTable& q) {
  if (p.tree()->node_count() != q.tree()->node_count()) {
    throw std::invalid_argument("policies must cover the same state set");
  }
  double m = 0.0;
  std::vector<double> pp;
  std::vector<double> qq;
  for (std::size_t n = 0; n < p.tree()->node_count(); ++n) {
    p.prob_row(static_cast<std::int32_t>(n), pp);
    q.prob_row(static_cast<std::int32_t>(n), qq);
    for (std::size_t a = 0; a < pp.size(); ++a) m = std::max(m, std::abs(pp[a] - qq[a]));
  }
  return m;
}

}  // namespace densepath

#include "densepath/reference.hpp"

#include <cmath>
#include <functional>

namespace densepath::reference {

double sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double max_abs_diff(std::span<const double> x, std::span<const double> y) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

namespace {

/// Visits every complete trajectory; `visit(edges, probs, p_traj)` receives
/// the edge index and step probability per token.
void enumerate_trajectories(
    const PolicyTable& pi,
    const std::function<void(const std::vector<std::size_t>&, const std::vector<Token>&, double)>&
        visit) {
  const auto& tree = *pi.tree();
  const int V = tree.vocab();
  std::vector<std::size_t> edges;
  std::vector<Token> actions;

  std::function<void(std::int32_t, double)> walk = [&](std::int32_t node, double prob) {
    std::vector<double> probs;
    pi.prob_row(node, probs);
    for (Token a = 0; a < V; ++a) {
      const double p = prob * probs[static_cast<std::size_t>(a)];
      edges.push_back(tree.edge_index(node, a));
      actions.push_back(a);
      const std::int32_t c = tree.child(node, a);
      if (c < 0) {
        visit(edges, actions, p);
      } else {
        walk(c, p);
      }
      edges.pop_back();
      actions.pop_back();
    }
  };

  for (std::size_t p = 0; p < tree.env().prompts.size(); ++p) {
    walk(tree.root(p), tree.env().prompts[p].weight);
  }
}

}  // namespace

Occupancy occupancy_by_enumeration(const PolicyTable& pi) {
  Occupancy occ{pi.tree(), std::vector<double>(pi.tree()->edge_count(), 0.0)};
  enumerate_trajectories(pi, [&](const std::vector<std::size_t>& edges,
                                 const std::vector<Token>&, double p) {
    for (std::size_t e : edges) occ.mass[e] += p;
  });
  return occ;
}

double expected_return_by_enumeration(const PolicyTable& pi, const RewardFn& r) {
  double total = 0.0;
  enumerate_trajectories(pi, [&](const std::vector<std::size_t>& edges,
                                 const std::vector<Token>&, double p) {
    double ret = 0.0;
    for (std::size_t e : edges) ret += r.values[e];
    total += p * ret;
  });
  return total;
}

GradTable policy_gradient_by_enumeration(const PolicyTable& pi, const RewardFn& r, double gamma) {
  const auto& tree = *pi.tree();
  const int V = tree.vocab();
  GradTable g = zero_grad(pi.tree());
  std::vector<double> probs;
  enumerate_trajectories(pi, [&](const std::vector<std::size_t>& edges,
                                 const std::vector<Token>& actions, double p) {
    const std::size_t T = edges.size();
    std::vector<double> returns(T, 0.0);
    double acc = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      acc = r.values[edges[t]] + gamma * acc;
      returns[t] = acc;
    }
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t node_base = edges[t] - static_cast<std::size_t>(actions[t]);
      const auto node = static_cast<std::int32_t>(node_base / static_cast<std::size_t>(V));
      pi.prob_row(node, probs);
      for (Token b = 0; b < V; ++b) {
        const double indicator = b == actions[t] ? 1.0 : 0.0;
        g.values[node_base + static_cast<std::size_t>(b)] +=
            p * (indicator - probs[static_cast<std::size_t>(b)]) * returns[t];
      }
    }
  });
  return g;
}

}  // namespace densepath::reference

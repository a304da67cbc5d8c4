#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "densepath/policy.hpp"
#include "densepath/rng.hpp"
#include "densepath/soft_control.hpp"
#include "densepath/verify.hpp"

#include "test_util.hpp"

using namespace densepath;
using testutil::ab_env;
using testutil::abc_env;
using testutil::constant_reward;

TEST_CASE("soft value computes the scaled log-sum-exp") {
  CHECK(soft_value({0.0, 0.0}, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(soft_value({1.0, 1.0}, 1.0) == doctest::Approx(1.0 + std::log(2.0)).epsilon(1e-15));
  CHECK(soft_value({0.0, 0.0}, 2.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
  CHECK(soft_value({3.0}, 1.0) == 3.0);
  // Small beta approaches the hard max.
  CHECK(soft_value({1.0, 0.0}, 0.01) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(soft_value({1.0, -2.0, 0.5}, 1.5) >= 1.0);

  CHECK_THROWS_AS(soft_value({}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(soft_value({0.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(soft_value({0.0}, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(soft_value({HUGE_VAL}, 1.0), std::invalid_argument);
}

TEST_CASE("boltzmann weights are a softmax of the row") {
  const auto half = boltzmann({0.0, 0.0}, 1.0);
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-15));

  const auto skew = boltzmann({std::log(3.0), 0.0}, 1.0);
  CHECK(skew[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(skew[1] == doctest::Approx(0.25).epsilon(1e-14));

  const auto beta2 = boltzmann({2.0 * std::log(3.0), 0.0}, 2.0);
  CHECK(beta2[0] == doctest::Approx(0.75).epsilon(1e-14));

  const auto thirds = boltzmann({1.7, 1.7, 1.7}, 1.0);
  for (double p : thirds) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // Shifting a row leaves the weights unchanged.
  const auto base = boltzmann({0.3, -1.2, 0.9}, 1.0);
  const auto shifted = boltzmann({0.3 + 5.0, -1.2 + 5.0, 0.9 + 5.0}, 1.0);
  double total = 0.0;
  for (std::size_t a = 0; a < base.size(); ++a) {
    CHECK(base[a] == doctest::Approx(shifted[a]).epsilon(1e-12));
    total += base[a];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("backward induction solves the two-token tree by hand") {
  const TreePtr tree = Tree::build(ab_env(2));
  // r(s,a) = 1 for the continuation token, 0 for EOS.
  RewardFn r = constant_reward(tree, 0.0);
  r.values[tree->edge_index(0, 0)] = 1.0;
  r.values[tree->edge_index(1, 0)] = 1.0;

  const SoftSolution sol = soft_backward_induction(r, 1.0);
  const double v1 = std::log(std::exp(1.0) + 1.0);  // ~1.3132617
  CHECK(sol.v_at(1) == doctest::Approx(v1).epsilon(1e-14));
  CHECK(sol.q_at(1, 0) == 1.0);
  CHECK(sol.q_at(1, 1) == 0.0);
  CHECK(sol.q_at(0, 0) == doctest::Approx(1.0 + v1).epsilon(1e-14));
  CHECK(sol.q_at(0, 1) == 0.0);
  CHECK(sol.v_at(0) == doctest::Approx(std::log(std::exp(1.0 + v1) + 1.0)).epsilon(1e-14));
  CHECK(sol.v_next(0, 0) == sol.v_at(1));
  CHECK(sol.v_next(0, 1) == 0.0);  // EOS successor is terminal
}

TEST_CASE("zero reward at horizon one gives log-vocab value and a uniform policy") {
  const TreePtr tree = Tree::build(abc_env(1));
  const SoftSolution sol = soft_backward_induction(constant_reward(tree, 0.0), 1.0);
  CHECK(sol.v_at(0) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  const PolicyTable pi(tree, boltzmann_logits(sol));
  std::vector<double> probs;
  pi.prob_row(0, probs);
  for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("the soft Bellman equations hold on random instances") {
  RngStream rng(41);
  for (double beta : {1.0, 2.5}) {
    for (int c = 0; c < 25; ++c) {
      const TreePtr tree = Tree::build(fixtures::random_env(rng));
      const RewardFn r = fixtures::random_reward_table(rng, tree, 2.0);
      const SoftSolution sol = soft_backward_induction(r, beta);
      CHECK(sol.beta == beta);
      for (std::size_t n = 0; n < tree->node_count(); ++n) {
        const auto node = static_cast<std::int32_t>(n);
        std::vector<double> q_row(static_cast<std::size_t>(tree->vocab()));
        for (Token a = 0; a < tree->vocab(); ++a) {
          const double q = r.at(node, a) + sol.v_next(node, a);
          CHECK(sol.q_at(node, a) == doctest::Approx(q).epsilon(1e-12));
          q_row[static_cast<std::size_t>(a)] = sol.q_at(node, a);
        }
        CHECK(sol.v_at(node) == doctest::Approx(soft_value(q_row, beta)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("serial and parallel backward induction agree bitwise") {
  RngStream rng(5150);
  const EnvSpec env = fixtures::random_env(rng, 4, 4);
  const TreePtr tree = Tree::build(env);
  const RewardFn r = fixtures::random_reward_table(rng, tree, 1.0);
  const SoftSolution a = soft_backward_induction(r, 1.0, Exec::Serial);
  const SoftSolution b = soft_backward_induction(r, 1.0, Exec::Parallel);
  CHECK(std::memcmp(a.q.data(), b.q.data(), a.q.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(double)) == 0);
}

TEST_CASE("shaping with trivial potentials returns the reward unchanged") {
  const TreePtr tree = Tree::build(abc_env(2));
  RngStream rng(8);
  const RewardFn r = fixtures::random_reward_table(rng, tree, 1.0);

  const RewardFn zero_shaped = shape_reward(r, zero_potential(tree));
  CHECK(zero_shaped.values == r.values);
  CHECK(zero_shaped.label == RewardLabel::shaped);

  // A constant potential cancels up to roundoff in the add-subtract pair.
  Potential constant = zero_potential(tree);
  for (double& x : constant.node_values) x = 3.25;
  for (double& x : constant.terminal_values) x = 3.25;
  const RewardFn same = shape_reward(r, constant);
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    CHECK(std::abs(same.values[i] - r.values[i]) <= 1e-14);
  }
}

TEST_CASE("a length potential turns zero reward into one per token") {
  const TreePtr tree = Tree::build(abc_env(3));
  Potential depth = zero_potential(tree);
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    depth.node_values[n] = tree->depth(static_cast<std::int32_t>(n));
  }
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    for (Token a = 0; a < tree->vocab(); ++a) {
      if (tree->edge_terminal(node, a)) {
        depth.terminal_values[tree->edge_index(node, a)] = tree->depth(node) + 1.0;
      }
    }
  }
  const RewardFn shaped = shape_reward(constant_reward(tree, 0.0), depth);
  CHECK(shaped.values == std::vector<double>(tree->edge_count(), 1.0));
}

TEST_CASE("shaping with a shared terminal potential preserves the Boltzmann policy") {
  RngStream rng(6);
  for (int c = 0; c < 25; ++c) {
    const TreePtr tree = Tree::build(fixtures::random_env(rng));
    const RewardFn r = fixtures::random_reward_table(rng, tree, 1.0);
    Potential f = zero_potential(tree);
    f.node_values = fixtures::random_values(rng, tree->node_count(), -1.0, 1.0);
    const double f_term = rng.uniform(-1.0, 1.0);
    for (double& x : f.terminal_values) x = f_term;

    const SoftSolution sol = soft_backward_induction(r, 1.0);
    const SoftSolution shaped = soft_backward_induction(shape_reward(r, f), 1.0);
    const PolicyTable pi(tree, boltzmann_logits(sol));
    const PolicyTable pi_shaped(tree, boltzmann_logits(shaped));
    CHECK(max_prob_diff(pi, pi_shaped) <= 1e-10);
    // Values shift by exactly the potential gap.
    for (std::size_t n = 0; n < tree->node_count(); ++n) {
      CHECK(sol.v[n] - shaped.v[n] ==
            doctest::Approx(f.node_values[n] - f_term).epsilon(1e-10));
    }
  }
}

TEST_CASE("a constant bonus on root edges shifts values but not the policy") {
  const TreePtr tree = Tree::build(abc_env(2));
  RngStream rng(9);
  const RewardFn r = fixtures::random_reward_table(rng, tree, 1.0);
  RewardFn bumped = r;
  for (Token a = 0; a < tree->vocab(); ++a) bumped.values[tree->edge_index(0, a)] += 2.0;

  const SoftSolution sol = soft_backward_induction(r, 1.0);
  const SoftSolution sol_bumped = soft_backward_induction(bumped, 1.0);
  CHECK(sol_bumped.v_at(0) == doctest::Approx(sol.v_at(0) + 2.0).epsilon(1e-12));
  for (Token a = 0; a < tree->vocab(); ++a) {
    CHECK(sol_bumped.q_at(0, a) == doctest::Approx(sol.q_at(0, a) + 2.0).epsilon(1e-12));
  }
  CHECK(max_prob_diff(PolicyTable(tree, boltzmann_logits(sol)),
                      PolicyTable(tree, boltzmann_logits(sol_bumped))) <= 1e-12);
}

TEST_CASE("the soft-optimal policy factors the reward through values") {
  RngStream rng(10);
  for (int c = 0; c < 20; ++c) {
    const TreePtr tree = Tree::build(fixtures::random_env(rng));
    const RewardFn r = fixtures::random_reward_table(rng, tree, 1.5);
    const SoftSolution sol = soft_backward_induction(r, 1.0);
    const PolicyTable pi(tree, boltzmann_logits(sol));
    for (std::size_t n = 0; n < tree->node_count(); ++n) {
      const auto node = static_cast<std::int32_t>(n);
      for (Token a = 0; a < tree->vocab(); ++a) {
        // log pi*(a|s) = r(s,a) + V(s') - V(s) at beta = 1.
        CHECK(pi.log_prob(node, a) ==
              doctest::Approx(r.at(node, a) + sol.v_next(node, a) - sol.v_at(node))
                  .epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("soft-optimal log-probabilities telescope along suffixes") {
  RngStream rng(11);
  for (int c = 0; c < 20; ++c) {
    const TreePtr tree = Tree::build(fixtures::random_env(rng));
    const RewardFn r = fixtures::random_reward_table(rng, tree, 1.0);
    const SoftSolution sol = soft_backward_induction(r, 1.0);
    const PolicyTable pi(tree, boltzmann_logits(sol));
    const Trajectory traj = sample_trajectory(pi, rng.next_u64(), 1.0);
    const auto nodes = tree->nodes_on(traj);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      double lhs = 0.0;
      double reward_sum = 0.0;
      for (std::size_t k = t; k < nodes.size(); ++k) {
        lhs += pi.log_prob(nodes[k], traj.actions[k]);
        reward_sum += r.at(nodes[k], traj.actions[k]);
      }
      CHECK(lhs == doctest::Approx(reward_sum - sol.v_at(nodes[t])).epsilon(1e-9));
    }
  }
}

TEST_CASE("boltzmann_logits divides Q by beta") {
  const TreePtr tree = Tree::build(ab_env(2));
  RngStream rng(12);
  const RewardFn r = fixtures::random_reward_table(rng, tree, 1.0);
  const SoftSolution sol = soft_backward_induction(r, 2.0);
  const auto logits = boltzmann_logits(sol);
  for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits[i] == sol.q[i] / 2.0);
}

TEST_CASE("shape_reward requires a shared tree") {
  const TreePtr a = Tree::build(ab_env(2));
  const TreePtr b = Tree::build(ab_env(2));
  CHECK_THROWS_AS(shape_reward(constant_reward(a, 0.0), zero_potential(b)),
                  std::invalid_argument);
}

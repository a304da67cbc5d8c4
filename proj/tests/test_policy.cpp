#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "densepath/policy.hpp"
#include "densepath/rng.hpp"
#include "densepath/verify.hpp"

#include "test_util.hpp"

using namespace densepath;
using testutil::ab_env;
using testutil::abc_env;
using testutil::near_deterministic;

namespace {

double relative_gap(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

TEST_CASE("a fresh policy table is uniform and logits are addressable") {
  const TreePtr tree = Tree::build(abc_env(2));
  PolicyTable pi(tree);
  CHECK(pi.vocab() == 3);
  CHECK(pi.logits() == std::vector<double>(tree->edge_count(), 0.0));
  std::vector<double> probs;
  pi.prob_row(0, probs);
  for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  pi.logit(0, 1) = 3.5;
  CHECK(pi.logit(0, 1) == 3.5);
  pi.logits()[tree->edge_index(1, 2)] = -1.0;
  CHECK(pi.logit(1, 2) == -1.0);
}

TEST_CASE("row_value is the log-sum-exp and log_prob normalizes the row") {
  const TreePtr tree = Tree::build(ab_env(1));
  PolicyTable pi(tree, {std::log(3.0), 0.0});
  CHECK(pi.row_value(0) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(pi.log_prob(0, 0) == doctest::Approx(std::log(0.75)).epsilon(1e-13));
  CHECK(pi.log_prob(0, 1) == doctest::Approx(std::log(0.25)).epsilon(1e-13));

  std::vector<double> lp;
  pi.log_prob_row(0, lp);
  CHECK(lp[0] == doctest::Approx(pi.log_prob(0, 0)).epsilon(1e-15));

  const auto dist = action_dist(pi, 0);
  CHECK(dist[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(dist[1] == doctest::Approx(0.25).epsilon(1e-14));
  const auto by_state = action_dist(pi, State{{}, {}, false});
  CHECK(by_state[0] == dist[0]);
}

TEST_CASE("action distributions are invariant to row shifts") {
  const TreePtr tree = Tree::build(abc_env(1));
  PolicyTable pi(tree, {0.4, -1.1, 0.8});
  PolicyTable shifted(tree, {0.4 + 7.0, -1.1 + 7.0, 0.8 + 7.0});
  const auto a = action_dist(pi, 0);
  const auto b = action_dist(shifted, 0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("trajectory log-probability sums the per-token terms") {
  const TreePtr tree = Tree::build(ab_env(2));
  const PolicyTable uniform(tree);
  const Trajectory traj{{}, {0, 0}};
  CHECK(traj_log_prob(uniform, traj) ==
        doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-14));

  const PolicyTable confident = near_deterministic(tree, 0, 10.0);
  const double per_token = -std::log1p(std::exp(-10.0));  // ~ -4.54e-5
  CHECK(traj_log_prob(confident, traj) == doctest::Approx(2.0 * per_token).epsilon(1e-10));

  // Equals the sum of action_dist logs.
  const auto nodes = tree->nodes_on(traj);
  double manual = 0.0;
  for (std::size_t t = 0; t < nodes.size(); ++t) {
    manual += std::log(action_dist(confident, nodes[t])[static_cast<std::size_t>(traj.actions[t])]);
  }
  CHECK(traj_log_prob(confident, traj) == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("trajectory log-probabilities are never positive") {
  RngStream rng(21);
  for (int c = 0; c < 50; ++c) {
    const TreePtr tree = Tree::build(fixtures::random_env(rng));
    const PolicyTable pi = fixtures::random_policy(rng, tree);
    const Trajectory traj = sample_trajectory(pi, rng.next_u64(), 1.0);
    CHECK(traj_log_prob(pi, traj) <= 1e-12);
  }
}

TEST_CASE("cross-entropy gradient is softmax minus one-hot over the batch") {
  const TreePtr tree = Tree::build(ab_env(1));
  const PolicyTable uniform(tree);
  const GradTable g = ce_gradient(uniform, {Trajectory{{}, {0}}});
  CHECK(g.at(0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(g.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  // A saturated policy at the expert action has a vanishing gradient.
  const GradTable sat = ce_gradient(near_deterministic(tree, 0), {Trajectory{{}, {0}}});
  CHECK(std::abs(sat.at(0, 0)) <= 1e-9);
  CHECK(std::abs(sat.at(0, 1)) <= 1e-9);
}

TEST_CASE("cross-entropy gradient averages per-trajectory contributions") {
  const TreePtr tree = Tree::build(abc_env(2));
  RngStream rng(22);
  const PolicyTable pi = fixtures::random_policy(rng, tree);
  const Trajectory t1{{}, {0, 2}};
  const Trajectory t2{{}, {1, 0}};
  const GradTable both = ce_gradient(pi, {t1, t2});
  const GradTable g1 = ce_gradient(pi, {t1});
  const GradTable g2 = ce_gradient(pi, {t2});
  for (std::size_t i = 0; i < both.values.size(); ++i) {
    CHECK(both.values[i] ==
          doctest::Approx(0.5 * g1.values[i] + 0.5 * g2.values[i]).epsilon(1e-14));
  }
}

TEST_CASE("cross-entropy gradient matches central finite differences") {
  RngStream rng(23);
  const TreePtr tree = Tree::build(abc_env(2));
  PolicyTable pi = fixtures::random_policy(rng, tree, -2.0, 2.0);
  const std::vector<Trajectory> batch{Trajectory{{}, {0, 1}}, Trajectory{{}, {2}},
                                      Trajectory{{}, {1, 1}}};
  const GradTable g = ce_gradient(pi, batch);
  auto loss = [&]() {
    double total = 0.0;
    for (const auto& traj : batch) total += -traj_log_prob(pi, traj);
    return total / static_cast<double>(batch.size());
  };
  const double h = 1e-5;
  for (std::size_t i = 0; i < pi.logits().size(); ++i) {
    const double saved = pi.logits()[i];
    pi.logits()[i] = saved + h;
    const double up = loss();
    pi.logits()[i] = saved - h;
    const double down = loss();
    pi.logits()[i] = saved;
    CHECK(relative_gap(g.values[i], (up - down) / (2.0 * h)) <= 1e-5);
  }
}

TEST_CASE("reinforce gradient weights the score by the return") {
  const TreePtr tree = Tree::build(ab_env(2));
  const PolicyTable uniform(tree);
  const std::vector<Trajectory> trajs{Trajectory{{}, {0, 1}}};
  const std::vector<std::vector<double>> returns{{2.0, 1.0}};
  const GradTable g = reinforce_gradient(uniform, trajs, returns);
  CHECK(g.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(g.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.at(1, 1) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(g.at(1, 0) == doctest::Approx(0.5).epsilon(1e-15));

  const GradTable zero = reinforce_gradient(uniform, trajs, {{0.0, 0.0}});
  CHECK(zero.values == std::vector<double>(tree->edge_count(), 0.0));
}

TEST_CASE("reinforce gradient matches central finite differences") {
  RngStream rng(24);
  const TreePtr tree = Tree::build(abc_env(2));
  PolicyTable pi = fixtures::random_policy(rng, tree, -2.0, 2.0);
  const std::vector<Trajectory> trajs{Trajectory{{}, {0, 1}}, Trajectory{{}, {2}}};
  std::vector<std::vector<double>> returns;
  for (const auto& traj : trajs) {
    returns.push_back(fixtures::random_values(rng, traj.actions.size(), -2.0, 2.0));
  }
  const GradTable g = reinforce_gradient(pi, trajs, returns);
  auto loss = [&]() {
    double total = 0.0;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      const auto nodes = pi.tree()->nodes_on(trajs[i]);
      for (std::size_t t = 0; t < nodes.size(); ++t) {
        total -= pi.log_prob(nodes[t], trajs[i].actions[t]) * returns[i][t];
      }
    }
    return total / static_cast<double>(trajs.size());
  };
  const double h = 1e-5;
  for (std::size_t i = 0; i < pi.logits().size(); ++i) {
    const double saved = pi.logits()[i];
    pi.logits()[i] = saved + h;
    const double up = loss();
    pi.logits()[i] = saved - h;
    const double down = loss();
    pi.logits()[i] = saved;
    CHECK(relative_gap(g.values[i], (up - down) / (2.0 * h)) <= 1e-5);
  }
}

TEST_CASE("sgd steps move logits by exactly minus lr times gradient") {
  const TreePtr tree = Tree::build(ab_env(1));
  PolicyTable pi(tree);
  GradTable g = zero_grad(tree);
  for (double& x : g.values) x = 0.5;
  OptState opt;
  opt.kind = OptKind::SGD;
  opt.lr = 0.1;
  opt_step(pi, g, opt);
  for (double x : pi.logits()) CHECK(x == -0.05);
  CHECK(opt.step == 1);

  // A zero gradient leaves the table untouched.
  const std::vector<double> before = pi.logits();
  opt_step(pi, zero_grad(tree), opt);
  CHECK(pi.logits() == before);
}

TEST_CASE("adam's first step approaches minus lr for any positive constant gradient") {
  const TreePtr tree = Tree::build(ab_env(1));
  for (double c : {1.0, 0.01, 100.0}) {
    PolicyTable pi(tree);
    GradTable g = zero_grad(tree);
    for (double& x : g.values) x = c;
    OptState opt;
    opt.kind = OptKind::Adam;
    opt.lr = 0.05;
    opt_step(pi, g, opt);
    for (double x : pi.logits()) CHECK(std::abs(x + 0.05) <= 1e-6);
    CHECK(opt.m.size() == tree->edge_count());
    CHECK(opt.v.size() == tree->edge_count());
  }
}

TEST_CASE("adam with a zero gradient leaves the logits unchanged") {
  const TreePtr tree = Tree::build(ab_env(2));
  RngStream rng(25);
  PolicyTable pi = fixtures::random_policy(rng, tree);
  const std::vector<double> before = pi.logits();
  OptState opt;
  opt.kind = OptKind::Adam;
  opt.lr = 0.05;
  opt_step(pi, zero_grad(tree), opt);
  CHECK(pi.logits() == before);
}

TEST_CASE("sampling follows a saturated policy deterministically") {
  const TreePtr tree = Tree::build(ab_env(3));
  const PolicyTable always_a = near_deterministic(tree, 0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Trajectory traj = sample_trajectory(always_a, seed, 1.0);
    CHECK(traj.actions == std::vector<Token>{0, 0, 0});
  }
  const PolicyTable always_eos = near_deterministic(tree, 1);
  CHECK(sample_trajectory(always_eos, 17, 1.0).actions == std::vector<Token>{1});
}

TEST_CASE("temperature zero is greedy with lowest-id ties") {
  const TreePtr tree = Tree::build(abc_env(2));
  const PolicyTable flat(tree);
  CHECK(sample_trajectory(flat, 3, 0.0).actions == std::vector<Token>{0, 0});

  PolicyTable prefers_eos(tree);
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    prefers_eos.logit(static_cast<std::int32_t>(n), 2) = 5.0;
  }
  CHECK(sample_trajectory(prefers_eos, 3, 0.0).actions == std::vector<Token>{2});
}

TEST_CASE("sampled first actions match the policy frequencies") {
  const TreePtr tree = Tree::build(ab_env(2));
  const PolicyTable uniform(tree);
  int first_is_a = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    if (sample_trajectory(uniform, static_cast<std::uint64_t>(i), 1.0).actions[0] == 0) {
      ++first_is_a;
    }
  }
  CHECK(static_cast<double>(first_is_a) / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("sample_trajectory_from pins the prompt") {
  EnvSpec env;
  env.vocab_size = 3;
  env.eos = 2;
  env.horizon = 2;
  env.prompts.push_back(PromptEntry{{0}, 0.5});
  env.prompts.push_back(PromptEntry{{1}, 0.5});
  env.validate();
  const TreePtr tree = Tree::build(env);
  const PolicyTable pi(tree);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(sample_trajectory_from(pi, 1, seed, 1.0).prompt == std::vector<Token>{1});
    CHECK(sample_trajectory_from(pi, 0, seed, 1.0).prompt == std::vector<Token>{0});
  }
}

TEST_CASE("every sampled trajectory is valid for its environment") {
  RngStream rng(26);
  for (int c = 0; c < 100; ++c) {
    const EnvSpec env = fixtures::random_env(rng);
    const TreePtr tree = Tree::build(env);
    const PolicyTable pi = fixtures::random_policy(rng, tree);
    const double temp = (c % 3 == 0) ? 0.0 : rng.uniform(0.3, 2.0);
    const Trajectory traj = sample_trajectory(pi, rng.next_u64(), temp);
    CHECK_NOTHROW(validate_trajectory(env, traj));
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  const TreePtr tree = Tree::build(abc_env(3));
  RngStream rng(27);
  const PolicyTable pi = fixtures::random_policy(rng, tree);
  bool any_difference = false;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Trajectory a = sample_trajectory(pi, seed, 1.0);
    const Trajectory b = sample_trajectory(pi, seed, 1.0);
    CHECK(a == b);
    any_difference = any_difference || !(a == sample_trajectory(pi, seed + 1, 1.0));
  }
  CHECK(any_difference);
}

TEST_CASE("log_prob_table agrees with per-edge queries in both modes") {
  RngStream rng(28);
  const TreePtr tree = Tree::build(fixtures::random_env(rng, 4, 4));
  const PolicyTable pi = fixtures::random_policy(rng, tree);
  const auto serial = log_prob_table(pi, Exec::Serial);
  const auto parallel = log_prob_table(pi, Exec::Parallel);
  CHECK(std::memcmp(serial.data(), parallel.data(), serial.size() * sizeof(double)) == 0);
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    for (Token a = 0; a < tree->vocab(); ++a) {
      CHECK(serial[tree->edge_index(node, a)] ==
            doctest::Approx(pi.log_prob(node, a)).epsilon(1e-14));
    }
  }
}

TEST_CASE("row_kl and max_prob_diff measure policy divergence") {
  const TreePtr tree = Tree::build(ab_env(1));
  const PolicyTable p(tree);
  const PolicyTable q(tree, {std::log(3.0), 0.0});
  CHECK(row_kl(p, p, 0) == doctest::Approx(0.0).epsilon(1e-15));
  const double expected = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
  CHECK(row_kl(p, q, 0) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(row_kl(p, q, 0) >= 0.0);

  CHECK(max_prob_diff(p, p) == 0.0);
  CHECK(max_prob_diff(p, q) == doctest::Approx(0.25).epsilon(1e-13));
}

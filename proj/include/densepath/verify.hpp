#pragma once

/**
 * Self-contained invariant suites: every identity and bound the library
 * guarantees, checked on randomized in-memory fixtures with pinned
 * tolerances. The fast level is a CI smoke pass; the full level runs the
 * headline fuzz counts.
 */

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "densepath/policy.hpp"
#include "densepath/rng.hpp"
#include "densepath/token_mdp.hpp"

namespace densepath {

enum class VerifyLevel { fast, full };

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  int cases = 0;
  double seconds = 0.0;
};

/// Runs every check; each result carries its max residual and pinned
/// tolerance. Uses only in-memory fixtures.
std::vector<CheckResult> run_verify_suite(VerifyLevel level, Exec exec = Exec::Parallel);

/// Prints one PASS/FAIL line per check; returns 0 when all pass, 1 otherwise.
int print_verify_report(const std::vector<CheckResult>& results, std::ostream& out);

namespace fixtures {

/// Environment with random shape: vocab in [2, max_vocab], horizon in
/// [1, max_horizon], one or two single-token prompts. No true reward.
EnvSpec random_env(RngStream& rng, int max_vocab = 4, int max_horizon = 4);

std::vector<double> random_values(RngStream& rng, std::size_t n, double lo, double hi);

PolicyTable random_policy(RngStream& rng, const TreePtr& tree, double lo = -3.0, double hi = 3.0);

RewardFn random_reward_table(RngStream& rng, const TreePtr& tree, double scale);

/// Trajectories sampled from `sampler` with seeds drawn from `rng`.
Dataset random_dataset(const PolicyTable& sampler, RngStream& rng, int n);

}  // namespace fixtures

}  // namespace densepath

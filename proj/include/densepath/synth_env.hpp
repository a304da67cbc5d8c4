#pragma once

/**
 * Environment generation with known ground truth: random token rewards,
 * target-string rewards, and the EOS-trap construction where the
 * soft-optimal policy prefers EOS everywhere by a fixed logit margin.
 * Experts are exactly soft-optimal for the generated reward, so recovery
 * targets are known rather than approximated.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "densepath/policy.hpp"
#include "densepath/token_mdp.hpp"

namespace densepath {

enum class RecipeKind { random_reward, target_string, eos_trap };

std::string recipe_kind_name(RecipeKind kind);
RecipeKind recipe_kind_from_name(const std::string& name);

struct EnvRecipe {
  RecipeKind kind = RecipeKind::random_reward;
  int vocab_size = 4;
  int horizon = 4;
  int prompt_count = 2;
  std::uint64_t seed = 0;
  double scale = 1.0;               // random_reward: entries uniform in [-scale, scale]
  std::vector<Token> target;        // target_string: rewarded continuation
  double eos_margin = 0.6931471805599453;  // eos_trap: soft-optimal EOS logit lead, ln 2

  void validate() const;
};

/// Deterministic in the recipe. EOS is the highest token id; prompts are the
/// single tokens 0..prompt_count-1 with uniform weights.
EnvSpec make_env(const EnvRecipe& recipe, std::uint64_t cap = kDefaultEnumerationCap);

/// Logits = Q*/beta from exact backward induction on the true reward, so the
/// induced softmax is the Boltzmann-optimal expert.
PolicyTable expert_policy(const TreePtr& tree, double beta);

/// n seeded expert rollouts at temperature 1. The digest field is filled by
/// the caller once the environment is serialized.
Dataset sample_dataset(const PolicyTable& expert, int n, std::uint64_t seed);

}  // namespace densepath

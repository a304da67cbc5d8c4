#include "densepath/synth_env.hpp"

#include <cmath>
#include <stdexcept>

#include "densepath/rng.hpp"
#include "densepath/soft_control.hpp"

namespace densepath {

namespace {

constexpr std::uint64_t kRewardTag = 0x72657761ULL;   // reward draw stream
constexpr std::uint64_t kDatasetTag = 0x64617461ULL;  // demonstration stream

EnvSpec skeleton_env(const EnvRecipe& recipe) {
  EnvSpec env;
  env.vocab_size = recipe.vocab_size;
  env.eos = recipe.vocab_size - 1;
  env.horizon = recipe.horizon;
  const double w = 1.0 / recipe.prompt_count;
  for (int p = 0; p < recipe.prompt_count; ++p) {
    env.prompts.push_back(PromptEntry{{static_cast<Token>(p)}, w});
  }
  return env;
}

std::vector<Token> full_sequence(const Tree& tree, std::int32_t node) {
  std::vector<Token> full = tree.env().prompts[static_cast<std::size_t>(tree.prompt_of(node))].tokens;
  const auto gen = tree.generated_of(node);
  full.insert(full.end(), gen.begin(), gen.end());
  return full;
}

}  // namespace

std::string recipe_kind_name(RecipeKind kind) {
  switch (kind) {
    case RecipeKind::random_reward:
      return "random_reward";
    case RecipeKind::target_string:
      return "target_string";
    case RecipeKind::eos_trap:
      return "eos_trap";
  }
  throw std::invalid_argument("unknown recipe kind");
}

RecipeKind recipe_kind_from_name(const std::string& name) {
  if (name == "random_reward") return RecipeKind::random_reward;
  if (name == "target_string") return RecipeKind::target_string;
  if (name == "eos_trap") return RecipeKind::eos_trap;
  throw ConfigError("unknown recipe kind: " + name);
}

void EnvRecipe::validate() const {
  if (vocab_size < 2) throw ConfigError("recipe vocab_size must be >= 2");
  if (horizon < 1) throw ConfigError("recipe horizon must be >= 1");
  if (prompt_count < 1 || prompt_count > vocab_size - 1) {
    throw ConfigError("prompt_count must be in [1, vocab_size - 1]");
  }
  if (kind == RecipeKind::random_reward && scale < 0.0) {
    throw ConfigError("reward scale must be >= 0");
  }
  if (kind == RecipeKind::target_string) {
    if (target.empty()) throw ConfigError("target_string recipe needs a target");
    if (target.size() > static_cast<std::size_t>(horizon)) {
      throw ConfigError("target longer than the horizon");
    }
    for (Token t : target) {
      if (t < 0 || t >= vocab_size) throw ConfigError("target token out of range");
      if (t == vocab_size - 1) throw ConfigError("target must not contain EOS");
    }
  }
  if (kind == RecipeKind::eos_trap && !(eos_margin > 0.0)) {
    throw ConfigError("eos_margin must be positive");
  }
}

EnvSpec make_env(const EnvRecipe& recipe, std::uint64_t cap) {
  recipe.validate();
  EnvSpec env = skeleton_env(recipe);
  const TreePtr tree = Tree::build(env, cap);
  const int V = env.vocab_size;
  const Token eos = env.eos;
  env.has_true_reward = true;

  switch (recipe.kind) {
    case RecipeKind::random_reward: {
      // One draw per edge in node-index, then token-id order.
      RngStream rng(mix64(recipe.seed, kRewardTag));
      for (std::size_t n = 0; n < tree->node_count(); ++n) {
        const auto full = full_sequence(*tree, static_cast<std::int32_t>(n));
        for (Token a = 0; a < V; ++a) {
          env.true_reward.push_back(
              RewardEntry{full, a, rng.uniform(-recipe.scale, recipe.scale)});
        }
      }
      break;
    }
    case RecipeKind::target_string: {
      // Reward 1 for emitting the next target token from a state whose
      // generated suffix matches a target prefix; 0 elsewhere (implicit).
      for (std::size_t n = 0; n < tree->node_count(); ++n) {
        const auto node = static_cast<std::int32_t>(n);
        const auto gen = tree->generated_of(node);
        if (gen.size() >= recipe.target.size()) continue;
        bool on_target = true;
        for (std::size_t i = 0; i < gen.size(); ++i) {
          if (gen[i] != recipe.target[i]) {
            on_target = false;
            break;
          }
        }
        if (!on_target) continue;
        env.true_reward.push_back(
            RewardEntry{full_sequence(*tree, node), recipe.target[gen.size()], 1.0});
      }
      break;
    }
    case RecipeKind::eos_trap: {
      // r(s, EOS) = margin + V(depth+1) with V(d) = (H - d) ln(V - 1 + e^margin)
      // and all continuation rewards 0, so every soft-optimal Q row has an
      // EOS lead of exactly `margin`.
      const double level = std::log(static_cast<double>(V - 1) + std::exp(recipe.eos_margin));
      for (std::size_t n = 0; n < tree->node_count(); ++n) {
        const auto node = static_cast<std::int32_t>(n);
        const int d = tree->depth(node);
        const double v_next = static_cast<double>(env.horizon - d - 1) * level;
        env.true_reward.push_back(
            RewardEntry{full_sequence(*tree, node), eos, recipe.eos_margin + v_next});
      }
      break;
    }
  }

  env.validate();

  if (recipe.kind == RecipeKind::eos_trap) {
    // Hard invariant of the construction: the soft-optimal argmax is EOS at
    // every non-terminal state.
    const TreePtr check = Tree::build(env, cap);
    const SoftSolution sol = soft_backward_induction(ground_truth_reward(check), 1.0);
    for (std::size_t n = 0; n < check->node_count(); ++n) {
      const auto node = static_cast<std::int32_t>(n);
      for (Token a = 0; a < V; ++a) {
        if (a != eos && sol.q_at(node, a) >= sol.q_at(node, eos)) {
          throw std::logic_error("eos_trap construction failed the argmax-EOS assertion");
        }
      }
    }
  }
  return env;
}

PolicyTable expert_policy(const TreePtr& tree, double beta) {
  const SoftSolution sol = soft_backward_induction(ground_truth_reward(tree), beta);
  return PolicyTable(tree, boltzmann_logits(sol));
}

Dataset sample_dataset(const PolicyTable& expert, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
  Dataset data;
  data.trajectories.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    data.trajectories.push_back(
        sample_trajectory(expert, mix64(seed, kDatasetTag, static_cast<std::uint64_t>(i)), 1.0));
  }
  return data;
}

}  // namespace densepath

#include "densepath/types.hpp"

#include <cmath>

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

void EnvSpec::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (eos < 0 || eos >= vocab_size) throw std::invalid_argument("eos must be a valid token id");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (prompts.empty()) throw std::invalid_argument("at least one prompt is required");

  double weight_sum = 0.0;
  for (const auto& p : prompts) {
    if (p.weight < 0.0) throw std::invalid_argument("prompt weights must be non-negative");
    weight_sum += p.weight;
    for (Token t : p.tokens) {
      if (t < 0 || t >= vocab_size) throw std::invalid_argument("prompt token out of range");
    }
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) throw std::invalid_argument("prompt weights must sum to 1");

  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (std::size_t j = 0; j < prompts.size(); ++j) {
      if (i != j && is_prefix(prompts[i].tokens, prompts[j].tokens)) {
        throw std::invalid_argument("prompts must be mutually prefix-free");
      }
    }
  }

  for (const auto& e : true_reward) {
    if (e.action < 0 || e.action >= vocab_size) {
      throw std::invalid_argument("true_reward action out of range");
    }
    if (!std::isfinite(e.value)) throw std::invalid_argument("true_reward value must be finite");
  }
}

std::uint64_t enumeration_entry_count(const EnvSpec& env) {
  // Non-terminal states per prompt at depth d are the (vocab_size-1)^d
  // EOS-free continuations; each contributes one row of vocab_size entries.
  const std::uint64_t branch = static_cast<std::uint64_t>(env.vocab_size) - 1;
  std::uint64_t nodes_per_prompt = 0;
  std::uint64_t level = 1;
  for (int d = 0; d < env.horizon; ++d) {
    if (nodes_per_prompt > UINT64_MAX - level) return UINT64_MAX;
    nodes_per_prompt += level;
    if (d + 1 < env.horizon) {
      if (branch != 0 && level > UINT64_MAX / branch) return UINT64_MAX;
      level *= branch;
    }
  }
  const std::uint64_t prompts = env.prompts.size();
  if (nodes_per_prompt != 0 && prompts > UINT64_MAX / nodes_per_prompt) return UINT64_MAX;
  const std::uint64_t nodes = nodes_per_prompt * prompts;
  const std::uint64_t vocab = static_cast<std::uint64_t>(env.vocab_size);
  if (nodes != 0 && vocab > UINT64_MAX / nodes) return UINT64_MAX;
  return nodes * vocab;
}

void validate_trajectory(const EnvSpec& env, const Trajectory& traj) {
  const std::size_t T = traj.actions.size();
  if (T < 1 || T > static_cast<std::size_t>(env.horizon)) {
    throw std::invalid_argument("trajectory length must be in [1, horizon]");
  }
  for (std::size_t t = 0; t < T; ++t) {
    const Token a = traj.actions[t];
    if (a < 0 || a >= env.vocab_size) throw std::invalid_argument("trajectory action out of range");
    if (a == env.eos && t + 1 < T) throw std::invalid_argument("EOS before the final action");
  }
  if (traj.actions.back() != env.eos && T != static_cast<std::size_t>(env.horizon)) {
    throw std::invalid_argument("non-EOS trajectory must run to the horizon");
  }
}

}  // namespace densepath

#pragma once

/**
 * Core value types for the token-tree laboratory: tokens, states,
 * trajectories, environment specifications, datasets, and the error
 * vocabulary shared by every module.
 */

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace densepath {

using Token = std::int32_t;

/// A state is the prompt plus the tokens generated so far.
struct State {
  std::vector<Token> prompt;
  std::vector<Token> generated;
  bool terminal = false;

  bool operator==(const State&) const = default;
};

/// One demonstration or rollout: a prompt and the emitted action tokens.
/// The final state is reached after the last action; every proper prefix
/// is a valid non-terminal state.
struct Trajectory {
  std::vector<Token> prompt;
  std::vector<Token> actions;

  std::size_t length() const { return actions.size(); }
  bool operator==(const Trajectory&) const = default;
};

struct PromptEntry {
  std::vector<Token> tokens;
  double weight = 0.0;
};

/// Sparse ground-truth reward entry as stored in environment files.
/// `state` is the full token sequence (prompt followed by generated tokens).
struct RewardEntry {
  std::vector<Token> state;
  Token action = 0;
  double value = 0.0;
};

/// The finite token MDP: vocabulary, horizon, EOS token, initial prompt
/// distribution, and (optionally) a ground-truth token reward table.
/// The transition f(s,a) = s|a is implied, never stored.
struct EnvSpec {
  int vocab_size = 0;
  Token eos = 0;
  int horizon = 0;
  std::vector<PromptEntry> prompts;
  bool has_true_reward = false;
  std::vector<RewardEntry> true_reward;

  /// Throws std::invalid_argument on any violated invariant. Prompt token
  /// sequences must be mutually prefix-free so that the full token sequence
  /// identifies a state uniquely across the whole prompt forest.
  void validate() const;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::string env_digest;

  std::size_t size() const { return trajectories.size(); }
};

/// Exact enumeration refused: the environment needs more state-action
/// entries than the configured cap.
class EnumerationCapError : public std::runtime_error {
 public:
  EnumerationCapError(std::uint64_t required, std::uint64_t cap)
      : std::runtime_error("enumeration requires " + std::to_string(required) +
                           " state-action entries, exceeding the cap of " + std::to_string(cap)),
        required_(required),
        cap_(cap) {}

  std::uint64_t required() const { return required_; }
  std::uint64_t cap() const { return cap_; }

 private:
  std::uint64_t required_;
  std::uint64_t cap_;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (missing input, refusal to overwrite, write error).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kDefaultEnumerationCap = 1000000;

/// State-action entries needed for exact enumeration of `env`.
/// Saturates at UINT64_MAX instead of overflowing.
std::uint64_t enumeration_entry_count(const EnvSpec& env);

/// Throws if `traj` is not a valid trajectory of `env`: length in [1, H],
/// EOS only as the final action, final action EOS unless length equals H.
void validate_trajectory(const EnvSpec& env, const Trajectory& traj);

}  // namespace densepath

#pragma once

/**
 * File formats and hashing. JSON is UTF-8 with sorted keys; reals use the
 * shortest representation that round-trips bit-exactly. Data files never
 * contain timestamps; those live in `<name>.meta.json` sidecars. Content
 * digests are lowercase hex SHA-256 over the canonical serialization.
 */

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "densepath/dpr.hpp"
#include "densepath/policy.hpp"
#include "densepath/reward_lab.hpp"
#include "densepath/types.hpp"

namespace densepath {

std::string sha256_hex(const std::string& bytes);

/// Key-sorted compact JSON of the environment; the digest input.
std::string canonical_env_json(const EnvSpec& env);
std::string env_digest(const EnvSpec& env);

nlohmann::json env_to_json(const EnvSpec& env);
EnvSpec env_from_json(const nlohmann::json& j);

void save_env(const std::string& path, const EnvSpec& env);
EnvSpec load_env(const std::string& path);

/// One JSON object per line: {"prompt_index": i, "tokens": [...]}.
std::string dataset_to_jsonl(const Dataset& data, const EnvSpec& env);
void save_dataset(const std::string& path, const Dataset& data, const EnvSpec& env);
Dataset load_dataset(const std::string& path, const EnvSpec& env);

struct Checkpoint {
  std::vector<double> logits;
  std::string env_digest;
  std::int64_t step = 0;
};

nlohmann::json checkpoint_to_json(const PolicyTable& pi, const std::string& digest,
                                  std::int64_t step);
void save_checkpoint(const std::string& path, const PolicyTable& pi, const std::string& digest,
                     std::int64_t step);
/// Restores the logit table onto `tree`; the stored digest must match
/// `expected_digest` and the state keys must cover the tree exactly.
Checkpoint load_checkpoint(const std::string& path, const TreePtr& tree,
                           const std::string& expected_digest);
PolicyTable checkpoint_policy(const Checkpoint& ck, const TreePtr& tree);

/// Shortest decimal form that parses back to the same double ('.' separator).
std::string format_double(double x);

std::string loss_csv(const std::vector<std::pair<int, double>>& curve);
std::string trainlog_csv(const TrainLog& log, int horizon);
void save_loss_csv(const std::string& path, const std::vector<std::pair<int, double>>& curve);
void save_trainlog_csv(const std::string& path, const TrainLog& log, int horizon);

nlohmann::json heatmap_to_json(const Trajectory& traj, const std::vector<HeatmapEntry>& entries,
                               const std::string& digest, const std::string& sft_id,
                               const std::string& ref_id);

void save_json(const std::string& path, const nlohmann::json& j);
nlohmann::json load_json(const std::string& path);

std::string read_file(const std::string& path);
/// Writes via a temp file and rename; parent directories are created.
void write_file_atomic(const std::string& path, const std::string& content);
/// Throws IoError when the path exists and force is false.
void ensure_writable(const std::string& path, bool force);

/// Sidecar `<path>.meta.json` holding a creation timestamp plus extras.
void save_meta(const std::string& data_path, nlohmann::json extra);

}  // namespace densepath

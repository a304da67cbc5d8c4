#include "densepath/serialize.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace densepath {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 digest failed");
  }
  static const char hex[] = "0123456789abcdef";
  std::string out(static_cast<std::size_t>(len) * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xf];
  }
  return out;
}

json env_to_json(const EnvSpec& env) {
  json j;
  j["vocab_size"] = env.vocab_size;
  j["eos"] = env.eos;
  j["horizon"] = env.horizon;
  json prompts = json::array();
  for (const auto& p : env.prompts) {
    prompts.push_back(json{{"tokens", p.tokens}, {"weight", p.weight}});
  }
  j["prompts"] = std::move(prompts);
  if (env.has_true_reward) {
    json rewards = json::array();
    for (const auto& e : env.true_reward) {
      rewards.push_back(json{{"state", e.state}, {"action", e.action}, {"value", e.value}});
    }
    j["true_reward"] = std::move(rewards);
  }
  return j;
}

EnvSpec env_from_json(const json& j) {
  EnvSpec env;
  env.vocab_size = j.at("vocab_size").get<int>();
  env.eos = j.at("eos").get<Token>();
  env.horizon = j.at("horizon").get<int>();
  for (const auto& p : j.at("prompts")) {
    env.prompts.push_back(PromptEntry{p.at("tokens").get<std::vector<Token>>(),
                                      p.at("weight").get<double>()});
  }
  if (j.contains("true_reward")) {
    env.has_true_reward = true;
    for (const auto& e : j.at("true_reward")) {
      env.true_reward.push_back(RewardEntry{e.at("state").get<std::vector<Token>>(),
                                            e.at("action").get<Token>(),
                                            e.at("value").get<double>()});
    }
  }
  env.validate();
  return env;
}

std::string canonical_env_json(const EnvSpec& env) { return env_to_json(env).dump(); }

std::string env_digest(const EnvSpec& env) { return sha256_hex(canonical_env_json(env)); }

void save_env(const std::string& path, const EnvSpec& env) {
  write_file_atomic(path, canonical_env_json(env) + "\n");
}

EnvSpec load_env(const std::string& path) {
  return env_from_json(json::parse(read_file(path)));
}

std::string dataset_to_jsonl(const Dataset& data, const EnvSpec& env) {
  std::string out;
  for (const auto& traj : data.trajectories) {
    int prompt_index = -1;
    for (std::size_t p = 0; p < env.prompts.size(); ++p) {
      if (env.prompts[p].tokens == traj.prompt) {
        prompt_index = static_cast<int>(p);
        break;
      }
    }
    if (prompt_index < 0) throw std::invalid_argument("trajectory prompt not in the environment");
    out += json{{"prompt_index", prompt_index}, {"tokens", traj.actions}}.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const std::string& path, const Dataset& data, const EnvSpec& env) {
  write_file_atomic(path, dataset_to_jsonl(data, env));
}

Dataset load_dataset(const std::string& path, const EnvSpec& env) {
  Dataset data;
  data.env_digest = env_digest(env);
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto pidx = j.at("prompt_index").get<std::size_t>();
    if (pidx >= env.prompts.size()) throw IoError("dataset prompt_index out of range");
    Trajectory traj{env.prompts[pidx].tokens, j.at("tokens").get<std::vector<Token>>()};
    validate_trajectory(env, traj);
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

namespace {

std::string state_key(const Tree& tree, std::int32_t node) {
  std::vector<Token> full = tree.env().prompts[static_cast<std::size_t>(tree.prompt_of(node))].tokens;
  const auto gen = tree.generated_of(node);
  full.insert(full.end(), gen.begin(), gen.end());
  std::string key;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (i) key += ',';
    key += std::to_string(full[i]);
  }
  return key;
}

}  // namespace

json checkpoint_to_json(const PolicyTable& pi, const std::string& digest, std::int64_t step) {
  const auto& tree = *pi.tree();
  json rows;
  const int V = tree.vocab();
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    std::vector<double> row(static_cast<std::size_t>(V));
    for (Token a = 0; a < V; ++a) row[static_cast<std::size_t>(a)] = pi.logit(node, a);
    rows[state_key(tree, node)] = row;
  }
  return json{{"env_digest", digest}, {"step", step}, {"logits", std::move(rows)}};
}

void save_checkpoint(const std::string& path, const PolicyTable& pi, const std::string& digest,
                     std::int64_t step) {
  write_file_atomic(path, checkpoint_to_json(pi, digest, step).dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path, const TreePtr& tree,
                           const std::string& expected_digest) {
  const json j = json::parse(read_file(path));
  Checkpoint ck;
  ck.env_digest = j.at("env_digest").get<std::string>();
  ck.step = j.at("step").get<std::int64_t>();
  if (!expected_digest.empty() && ck.env_digest != expected_digest) {
    throw IoError("checkpoint env digest mismatch: " + path);
  }
  const json& rows = j.at("logits");
  if (rows.size() != tree->node_count()) {
    throw IoError("checkpoint does not cover the environment's states: " + path);
  }
  ck.logits.assign(tree->edge_count(), 0.0);
  const int V = tree->vocab();
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    const auto it = rows.find(state_key(*tree, node));
    if (it == rows.end()) throw IoError("checkpoint missing a state row: " + path);
    const auto row = it->get<std::vector<double>>();
    if (row.size() != static_cast<std::size_t>(V)) throw IoError("checkpoint row has wrong width");
    for (Token a = 0; a < V; ++a) {
      ck.logits[tree->edge_index(node, a)] = row[static_cast<std::size_t>(a)];
    }
  }
  return ck;
}

PolicyTable checkpoint_policy(const Checkpoint& ck, const TreePtr& tree) {
  return PolicyTable(tree, ck.logits);
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string loss_csv(const std::vector<std::pair<int, double>>& curve) {
  std::string out = "step,loss\n";
  for (const auto& [step, loss] : curve) {
    out += std::to_string(step);
    out += ',';
    out += format_double(loss);
    out += '\n';
  }
  return out;
}

std::string trainlog_csv(const TrainLog& log, int horizon) {
  std::string out = "iteration,proxy_return,true_return,mean_length,mean_kl";
  for (int k = 0; k < horizon; ++k) out += ",reward_pos_" + std::to_string(k);
  for (int k = 0; k < horizon; ++k) out += ",kl_pos_" + std::to_string(k);
  out += '\n';
  for (const auto& rec : log.records) {
    out += std::to_string(rec.iteration);
    out += ',';
    out += format_double(rec.proxy_return);
    out += ',';
    out += format_double(rec.true_return);
    out += ',';
    out += format_double(rec.mean_length);
    out += ',';
    out += format_double(rec.mean_kl);
    for (int k = 0; k < horizon; ++k) {
      out += ',';
      out += format_double(rec.reward_pos[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < horizon; ++k) {
      out += ',';
      out += format_double(rec.kl_pos[static_cast<std::size_t>(k)]);
    }
    out += '\n';
  }
  return out;
}

void save_loss_csv(const std::string& path, const std::vector<std::pair<int, double>>& curve) {
  write_file_atomic(path, loss_csv(curve));
}

void save_trainlog_csv(const std::string& path, const TrainLog& log, int horizon) {
  write_file_atomic(path, trainlog_csv(log, horizon));
}

json heatmap_to_json(const Trajectory& traj, const std::vector<HeatmapEntry>& entries,
                     const std::string& digest, const std::string& sft_id,
                     const std::string& ref_id) {
  std::vector<Token> tokens = traj.actions;
  std::vector<double> rewards;
  rewards.reserve(entries.size());
  for (const auto& e : entries) rewards.push_back(e.value);
  return json{{"trajectory", tokens},
              {"rewards", rewards},
              {"meta", json{{"env_digest", digest},
                            {"checkpoints", json{{"sft", sft_id}, {"ref", ref_id}}}}}};
}

void save_json(const std::string& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

json load_json(const std::string& path) { return json::parse(read_file(path)); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() /
                       (target.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

void ensure_writable(const std::string& path, bool force) {
  if (!force && fs::exists(path)) {
    throw IoError("refusing to overwrite " + path + " (use --force)");
  }
}

void save_meta(const std::string& data_path, json extra) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&tt, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  extra["created"] = std::string(buf);
  write_file_atomic(data_path + ".meta.json", extra.dump(2) + "\n");
}

}  // namespace densepath

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "densepath/serialize.hpp"
#include "densepath/synth_env.hpp"
#include "densepath/rng.hpp"

#include "test_util.hpp"

using namespace densepath;
using testutil::ab_env;
using testutil::abc_env;

namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per binary run; tests append unique file names.
fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "test_serialize_scratch";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("doubles print in shortest form and parse back bit-exactly") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(-2.25) == "-2.25");

  RngStream rng(71);
  for (int i = 0; i < 200; ++i) {
    double x = rng.uniform(-1e6, 1e6);
    if (i % 3 == 0) x = rng.uniform(0.0, 1.0) * 1e-8;
    if (i % 7 == 0) x = rng.uniform(-1.0, 1.0) * 1e12;
    const double back = std::stod(format_double(x));
    CHECK(std::memcmp(&back, &x, sizeof(double)) == 0);
  }
}

TEST_CASE("the canonical environment form is key-sorted and stable") {
  const EnvSpec env = ab_env(2);
  const std::string a = canonical_env_json(env);
  const std::string b = canonical_env_json(env);
  CHECK(a == b);
  CHECK(a.find("\"eos\"") != std::string::npos);
  CHECK(a.find("\"horizon\"") != std::string::npos);
  // Sorted keys: "eos" appears before "horizon" before "vocab_size".
  CHECK(a.find("\"eos\"") < a.find("\"horizon\""));
  CHECK(a.find("\"horizon\"") < a.find("\"vocab_size\""));

  CHECK(env_digest(env) == sha256_hex(a));
  CHECK(env_digest(env) != env_digest(abc_env(2)));
}

TEST_CASE("environments survive the file round trip byte for byte") {
  EnvRecipe recipe;
  recipe.kind = RecipeKind::random_reward;
  recipe.seed = 9;
  const EnvSpec env = make_env(recipe);
  const std::string path = (scratch() / "env.json").string();
  save_env(path, env);
  CHECK(read_file(path) == canonical_env_json(env) + "\n");

  const EnvSpec back = load_env(path);
  CHECK(canonical_env_json(back) == canonical_env_json(env));
  CHECK(back.has_true_reward == env.has_true_reward);
}

TEST_CASE("datasets write one object per line and load back verbatim") {
  const EnvSpec env = abc_env(3);
  Dataset data;
  data.trajectories.push_back(Trajectory{{}, {0, 1, 2}});
  data.trajectories.push_back(Trajectory{{}, {2}});
  const std::string text = dataset_to_jsonl(data, env);
  CHECK(text ==
        "{\"prompt_index\":0,\"tokens\":[0,1,2]}\n"
        "{\"prompt_index\":0,\"tokens\":[2]}\n");

  const std::string path = (scratch() / "data.jsonl").string();
  save_dataset(path, data, env);
  const Dataset back = load_dataset(path, env);
  CHECK(back.trajectories == data.trajectories);
  CHECK(back.env_digest == env_digest(env));
}

TEST_CASE("corrupt dataset lines are rejected with a reason") {
  const EnvSpec env = abc_env(3);
  const std::string eos_mid = (scratch() / "eos_mid.jsonl").string();
  write_file_atomic(eos_mid, "{\"prompt_index\":0,\"tokens\":[2,0]}\n");
  CHECK_THROWS_AS(static_cast<void>(load_dataset(eos_mid, env)), std::invalid_argument);

  const std::string bad_prompt = (scratch() / "bad_prompt.jsonl").string();
  write_file_atomic(bad_prompt, "{\"prompt_index\":3,\"tokens\":[0,0,0]}\n");
  CHECK_THROWS_AS(static_cast<void>(load_dataset(bad_prompt, env)), IoError);
}

TEST_CASE("checkpoints restore the logit table bit for bit") {
  EnvRecipe recipe;
  recipe.kind = RecipeKind::random_reward;
  recipe.seed = 10;
  const EnvSpec env = make_env(recipe);
  const TreePtr tree = Tree::build(env);
  RngStream rng(72);
  PolicyTable pi(tree);
  for (double& x : pi.logits()) x = rng.uniform(-3.0, 3.0);

  const std::string digest = env_digest(env);
  const std::string path = (scratch() / "ck.json").string();
  save_checkpoint(path, pi, digest, 42);
  const Checkpoint ck = load_checkpoint(path, tree, digest);
  CHECK(ck.step == 42);
  CHECK(ck.env_digest == digest);
  CHECK(ck.logits.size() == pi.logits().size());
  CHECK(std::memcmp(ck.logits.data(), pi.logits().data(),
                    ck.logits.size() * sizeof(double)) == 0);
  CHECK(checkpoint_policy(ck, tree).logits() == pi.logits());

  CHECK_THROWS_AS(static_cast<void>(load_checkpoint(path, tree, "deadbeef")), IoError);

  // A tree with a different state set cannot consume the rows.
  const TreePtr other = Tree::build(abc_env(2));
  CHECK_THROWS_AS(static_cast<void>(load_checkpoint(path, other, "")), IoError);
}

TEST_CASE("checkpoint state keys are the full token sequences") {
  EnvSpec env;
  env.vocab_size = 3;
  env.eos = 2;
  env.horizon = 2;
  env.prompts.push_back(PromptEntry{{0}, 0.5});
  env.prompts.push_back(PromptEntry{{1}, 0.5});
  env.validate();
  const TreePtr tree = Tree::build(env);
  const nlohmann::json j = checkpoint_to_json(PolicyTable(tree), "d", 0);
  const auto& rows = j.at("logits");
  CHECK(rows.contains("0"));
  CHECK(rows.contains("1"));
  CHECK(rows.contains("0,0"));
  CHECK(rows.contains("1,1"));
  CHECK(!rows.contains(""));

  // An empty prompt makes the root key the empty string.
  const TreePtr bare = Tree::build(ab_env(1));
  const nlohmann::json root_only = checkpoint_to_json(PolicyTable(bare), "d", 0);
  CHECK(root_only.at("logits").contains(""));
}

TEST_CASE("loss curves format exactly") {
  CHECK(loss_csv({{0, 0.5}, {1, 0.25}}) == "step,loss\n0,0.5\n1,0.25\n");
}

TEST_CASE("training logs carry per-position columns and print nan returns") {
  TrainLog log;
  TrainRecord rec;
  rec.iteration = 0;
  rec.proxy_return = 1.5;
  rec.true_return = std::numeric_limits<double>::quiet_NaN();
  rec.mean_length = 2.0;
  rec.mean_kl = 0.0;
  rec.reward_pos = {0.5, 0.25};
  rec.kl_pos = {0.0, 0.0};
  log.records.push_back(rec);
  const std::string text = trainlog_csv(log, 2);
  CHECK(text ==
        "iteration,proxy_return,true_return,mean_length,mean_kl,"
        "reward_pos_0,reward_pos_1,kl_pos_0,kl_pos_1\n"
        "0,1.5,nan,2,0,0.5,0.25,0,0\n");
}

TEST_CASE("heatmaps serialize the trajectory, values, and provenance") {
  const Trajectory traj{{0}, {1, 2}};
  const std::vector<HeatmapEntry> entries{{0, 1, 0.5}, {1, 2, -0.25}};
  const nlohmann::json j = heatmap_to_json(traj, entries, "digest", "sft_ck", "ref_ck");
  CHECK(j.at("trajectory") == std::vector<Token>{1, 2});
  REQUIRE(j.at("rewards").size() == 2);
  CHECK(j.at("rewards")[0] == 0.5);
  CHECK(j.at("rewards")[1] == -0.25);
  CHECK(j.at("meta").at("env_digest") == "digest");
  CHECK(j.at("meta").at("checkpoints").at("sft") == "sft_ck");
  CHECK(j.at("meta").at("checkpoints").at("ref") == "ref_ck");
}

TEST_CASE("atomic writes create parents and reads fail loudly") {
  const std::string nested = (scratch() / "a" / "b" / "c.txt").string();
  write_file_atomic(nested, "payload");
  CHECK(read_file(nested) == "payload");
  write_file_atomic(nested, "rewritten");
  CHECK(read_file(nested) == "rewritten");

  CHECK_THROWS_AS(static_cast<void>(read_file((scratch() / "missing.txt").string())), IoError);
}

TEST_CASE("overwrites require force") {
  const std::string path = (scratch() / "guarded.txt").string();
  CHECK_NOTHROW(ensure_writable(path, false));
  write_file_atomic(path, "x");
  CHECK_THROWS_AS(ensure_writable(path, false), IoError);
  CHECK_NOTHROW(ensure_writable(path, true));
}

TEST_CASE("json files end with a newline and meta sidecars carry timestamps") {
  const std::string path = (scratch() / "obj.json").string();
  const nlohmann::json j{{"b", 1}, {"a", 2}};
  save_json(path, j);
  CHECK(read_file(path) == j.dump(2) + "\n");
  CHECK(load_json(path) == j);

  save_meta(path, nlohmann::json{{"kind", "test"}});
  const nlohmann::json meta = load_json(path + ".meta.json");
  CHECK(meta.contains("created"));
  CHECK(meta.at("kind") == "test");
}

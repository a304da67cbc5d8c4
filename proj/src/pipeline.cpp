#include "densepath/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <thread>

#include "densepath/serialize.hpp"
#include "densepath/verify.hpp"

namespace densepath {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kHeatmapTag = 0x68656174ULL;  // heatmap rollout stream

void reject_unknown_keys(const nlohmann::json& j, const char* where,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(std::string(where) + ": unknown key \"" + it.key() + "\"");
  }
}

OptKind optimizer_from_name(const std::string& name) {
  if (name == "sgd") return OptKind::SGD;
  if (name == "adam") return OptKind::Adam;
  throw ConfigError("unknown optimizer \"" + name + "\" (expected sgd or adam)");
}

EnvRecipe parse_recipe(const nlohmann::json& j) {
  reject_unknown_keys(j, "env", {"kind", "vocab_size", "horizon", "prompt_count", "seed", "scale",
                                 "target", "eos_margin"});
  EnvRecipe recipe;
  recipe.kind = recipe_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("vocab_size")) recipe.vocab_size = j.at("vocab_size").get<int>();
  if (j.contains("horizon")) recipe.horizon = j.at("horizon").get<int>();
  if (j.contains("prompt_count")) recipe.prompt_count = j.at("prompt_count").get<int>();
  if (j.contains("seed")) recipe.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("scale")) recipe.scale = j.at("scale").get<double>();
  if (j.contains("target")) recipe.target = j.at("target").get<std::vector<Token>>();
  if (j.contains("eos_margin")) recipe.eos_margin = j.at("eos_margin").get<double>();
  recipe.validate();
  return recipe;
}

SftConfig parse_sft(const nlohmann::json& j, std::uint64_t& seed) {
  reject_unknown_keys(j, "sft",
                      {"preset", "total_steps", "batch_size", "learning_rate",
                       "baseline_fraction", "optimizer", "warmup_fraction", "seed"});
  SftConfig cfg = SuiteConfig::desk_defaults().sft;
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "paper-llm") {
      cfg.optimizer = OptKind::Adam;
      cfg.learning_rate = 5e-6;
      cfg.warmup_fraction = 0.03;
    } else if (preset != "desk") {
      throw ConfigError("unknown sft preset \"" + preset + "\" (expected desk or paper-llm)");
    }
  }
  if (j.contains("total_steps")) cfg.total_steps = j.at("total_steps").get<int>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
  if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("baseline_fraction")) cfg.baseline_fraction = j.at("baseline_fraction").get<double>();
  if (j.contains("optimizer")) cfg.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
  if (j.contains("warmup_fraction")) cfg.warmup_fraction = j.at("warmup_fraction").get<double>();
  if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

DprConfig parse_dpr(const nlohmann::json& j) {
  reject_unknown_keys(j, "dpr", {"gamma", "kl_weight", "batch_size", "temperature",
                                 "learning_rate", "iterations", "reward_mode", "optimizer"});
  DprConfig cfg = SuiteConfig::desk_defaults().dpr;
  if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
  if (j.contains("kl_weight")) cfg.kl_weight = j.at("kl_weight").get<double>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
  if (j.contains("temperature")) cfg.temperature = j.at("temperature").get<double>();
  if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<int>();
  if (j.contains("reward_mode")) {
    cfg.reward_mode = reward_mode_from_name(j.at("reward_mode").get<std::string>());
  }
  if (j.contains("optimizer")) cfg.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
  cfg.validate();
  return cfg;
}

struct LoadedExperiment {
  ExperimentConfig config;
  std::string dir;
};

LoadedExperiment load_experiment(const CommandOptions& opt) {
  if (opt.config_path.empty()) throw ConfigError("--config is required for this command");
  LoadedExperiment exp;
  exp.config = load_experiment_config(opt.config_path);
  exp.dir = !opt.out_dir.empty() ? opt.out_dir : exp.config.output_dir;
  if (exp.dir.empty()) throw ConfigError("no output directory: set output_dir or pass --out");
  return exp;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

EnvSpec load_env_for(const LoadedExperiment& exp) {
  const std::string path =
      !exp.config.env_path.empty() ? exp.config.env_path : join(exp.dir, "env.json");
  if (!fs::exists(path)) {
    throw ConfigError("environment file missing: " + path + " (run gen first)");
  }
  return load_env(path);
}

struct LoadedCheckpoints {
  PolicyTable pi_sft;
  PolicyTable pi_ref;
  int ref_step = 0;
  std::string sft_id;  // content digests, echoed into heatmap metadata
  std::string ref_id;
};

LoadedCheckpoints load_checkpoints(const LoadedExperiment& exp, const TreePtr& tree,
                                   const std::string& digest) {
  const std::string sft_path = join(exp.dir, "sft_checkpoint.json");
  const std::string ref_path = join(exp.dir, "ref_checkpoint.json");
  for (const std::string& p : {sft_path, ref_path}) {
    if (!fs::exists(p)) throw ConfigError("checkpoint missing: " + p + " (run sft first)");
  }
  const Checkpoint sft = load_checkpoint(sft_path, tree, digest);
  const Checkpoint ref = load_checkpoint(ref_path, tree, digest);
  return LoadedCheckpoints{checkpoint_policy(sft, tree), checkpoint_policy(ref, tree),
                           static_cast<int>(ref.step), sha256_hex(read_file(sft_path)),
                           sha256_hex(read_file(ref_path))};
}

/// Staged file contents; nothing touches disk until every job has finished.
struct StagedOutputs {
  std::vector<std::pair<std::string, std::string>> files;  // path -> bytes
  std::vector<std::pair<std::string, nlohmann::json>> metas;

  void stage(std::string path, std::string bytes) { files.emplace_back(std::move(path), std::move(bytes)); }
  void stage_meta(std::string path, nlohmann::json extra) {
    metas.emplace_back(std::move(path), std::move(extra));
  }

  void check_writable(bool force) const {
    for (const auto& [path, bytes] : files) {
      (void)bytes;
      ensure_writable(path, force);
    }
  }
  void write_all() const {
    for (const auto& [path, bytes] : files) write_file_atomic(path, bytes);
    for (const auto& [path, extra] : metas) save_meta(path, extra);
  }
};

nlohmann::json stats_json(const SeedStats& stats, const std::vector<std::uint64_t>& seeds) {
  nlohmann::json j;
  j["mean"] = stats.mean;
  j["stddev"] = stats.stddev;
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    per[std::to_string(seeds[i])] = stats.finals[i];
  }
  j["per_seed"] = per;
  return j;
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  reject_unknown_keys(j, "config", {"env", "demos", "sft", "dpr", "sweep", "seeds", "output_dir",
                                    "heatmap_rollouts"});
  ExperimentConfig cfg;
  const SuiteConfig desk = SuiteConfig::desk_defaults();
  cfg.recipe = desk.recipe;
  cfg.demo_count = desk.demo_count;
  cfg.dataset_seed = desk.dataset_seed;
  cfg.sft = desk.sft;
  cfg.sft_seed = desk.sft_seed;
  cfg.dpr = desk.dpr;

  if (j.contains("env")) {
    const nlohmann::json& env = j.at("env");
    if (env.contains("path")) {
      reject_unknown_keys(env, "env", {"path"});
      cfg.env_path = env.at("path").get<std::string>();
    } else {
      cfg.recipe = parse_recipe(env);
      cfg.has_recipe = true;
    }
  } else {
    cfg.has_recipe = true;  // desk default recipe
  }
  if (j.contains("demos")) {
    reject_unknown_keys(j.at("demos"), "demos", {"count", "seed"});
    if (j.at("demos").contains("count")) cfg.demo_count = j.at("demos").at("count").get<int>();
    if (j.at("demos").contains("seed")) {
      cfg.dataset_seed = j.at("demos").at("seed").get<std::uint64_t>();
    }
    if (cfg.demo_count <= 0) throw ConfigError("demos.count must be positive");
  }
  if (j.contains("sft")) cfg.sft = parse_sft(j.at("sft"), cfg.sft_seed);
  if (j.contains("dpr")) cfg.dpr = parse_dpr(j.at("dpr"));
  if (j.contains("sweep")) {
    reject_unknown_keys(j.at("sweep"), "sweep", {"gamma", "alpha"});
    if (j.at("sweep").contains("gamma")) {
      cfg.sweep_gamma = j.at("sweep").at("gamma").get<std::vector<double>>();
    }
    if (j.at("sweep").contains("alpha")) {
      cfg.sweep_alpha = j.at("sweep").at("alpha").get<std::vector<double>>();
    }
    if (cfg.sweep_gamma.empty() && cfg.sweep_alpha.empty()) {
      throw ConfigError("sweep: requires a non-empty gamma or alpha list");
    }
    if (!cfg.sweep_gamma.empty() && !cfg.sweep_alpha.empty()) {
      throw ConfigError("sweep: gamma and alpha axes are mutually exclusive");
    }
  }
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty");
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("heatmap_rollouts")) {
    cfg.heatmap_rollouts = j.at("heatmap_rollouts").get<int>();
    if (cfg.heatmap_rollouts < 0) throw ConfigError("heatmap_rollouts must be non-negative");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file missing: " + path);
  try {
    return parse_experiment_config(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

void run_jobs(std::vector<std::function<void()>>& jobs, int workers) {
  if (workers <= 1 || jobs.size() <= 1) {
    for (auto& job : jobs) job();
    return;
  }
  std::atomic<std::size_t> next{0};
  const int count =
      static_cast<int>(std::min(jobs.size(), static_cast<std::size_t>(workers)));
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (int w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        jobs[i]();
      }
    });
  }
  for (auto& t : pool) t.join();
}

int cmd_gen(const CommandOptions& opt, std::ostream& out) {
  const LoadedExperiment exp = load_experiment(opt);
  if (!exp.config.has_recipe) throw ConfigError("gen requires an inline env recipe");

  const EnvSpec env = make_env(exp.config.recipe);
  const TreePtr tree = Tree::build(env);
  const PolicyTable expert = expert_policy(tree, 1.0);
  Dataset data = sample_dataset(expert, exp.config.demo_count, exp.config.dataset_seed);
  data.env_digest = env_digest(env);

  StagedOutputs staged;
  staged.stage(join(exp.dir, "env.json"), env_to_json(env).dump(2) + "\n");
  staged.stage(join(exp.dir, "dataset.jsonl"), dataset_to_jsonl(data, env));
  staged.stage_meta(join(exp.dir, "env.json"), {{"digest", data.env_digest}});
  staged.stage_meta(join(exp.dir, "dataset.jsonl"),
                    {{"count", exp.config.demo_count}, {"seed", exp.config.dataset_seed}});
  staged.check_writable(opt.force);
  staged.write_all();
  out << "env_digest=" << data.env_digest << " trajectories=" << data.trajectories.size() << "\n";
  return 0;
}

int cmd_sft(const CommandOptions& opt, std::ostream& out) {
  const LoadedExperiment exp = load_experiment(opt);
  const EnvSpec env = load_env_for(exp);
  const std::string digest = env_digest(env);
  const TreePtr tree = Tree::build(env);
  const std::string data_path = join(exp.dir, "dataset.jsonl");
  if (!fs::exists(data_path)) throw ConfigError("dataset missing: " + data_path + " (run gen first)");
  const Dataset data = load_dataset(data_path, env);

  const SftArtifacts artifacts = train_sft(tree, data, exp.config.sft, exp.config.sft_seed);
  const double final_loss = artifacts.loss_curve.back().second;
  const double gap = equivalence_gap(artifacts.pi_sft, data);

  StagedOutputs staged;
  staged.stage(join(exp.dir, "sft_checkpoint.json"),
               checkpoint_to_json(artifacts.pi_sft, digest, exp.config.sft.total_steps).dump(2) + "\n");
  staged.stage(join(exp.dir, "ref_checkpoint.json"),
               checkpoint_to_json(artifacts.pi_ref, digest, artifacts.ref_step).dump(2) + "\n");
  staged.stage(join(exp.dir, "sft_loss.csv"), loss_csv(artifacts.loss_curve));
  staged.stage_meta(join(exp.dir, "sft_checkpoint.json"), {{"step", exp.config.sft.total_steps}});
  staged.stage_meta(join(exp.dir, "ref_checkpoint.json"), {{"step", artifacts.ref_step}});
  staged.check_writable(opt.force);
  staged.write_all();
  out << "final_loss=" << format_double(final_loss) << " equivalence_gap=" << format_double(gap)
      << " ref_step=" << artifacts.ref_step << "\n";
  return 0;
}

int cmd_dpr(const CommandOptions& opt, std::ostream& out) {
  const LoadedExperiment exp = load_experiment(opt);
  const EnvSpec env = load_env_for(exp);
  const std::string digest = env_digest(env);
  const TreePtr tree = Tree::build(env);
  const LoadedCheckpoints ck = load_checkpoints(exp, tree, digest);
  SftArtifacts artifacts{ck.pi_sft, ck.pi_ref, {}, ck.ref_step};

  const std::vector<std::uint64_t>& seeds = exp.config.seeds;
  std::vector<DprResult> results(seeds.size(), DprResult{PolicyTable(tree), {}});
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    jobs.push_back([&, i] { results[i] = dpr_train(artifacts, exp.config.dpr, seeds[i]); });
  }
  run_jobs(jobs, opt.workers);

  std::vector<double> finals;
  for (const DprResult& r : results) finals.push_back(r.log.records.back().true_return);
  const SeedStats stats = summarize(finals);
  const double sft_true = results.front().log.records.front().true_return;

  const std::string mode = reward_mode_name(exp.config.dpr.reward_mode);
  StagedOutputs staged;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const std::string tag = mode + "_seed" + std::to_string(seeds[i]);
    staged.stage(join(exp.dir, "dpr_" + tag + ".csv"),
                 trainlog_csv(results[i].log, env.horizon));
    staged.stage(join(exp.dir, "dpr_policy_" + tag + ".json"),
                 checkpoint_to_json(results[i].policy, digest, exp.config.dpr.iterations).dump(2) + "\n");
  }
  nlohmann::json summary;
  summary["reward_mode"] = mode;
  summary["final_true_return"] = stats_json(stats, seeds);
  summary["sft_true_return"] = sft_true;
  int improved = 0;
  for (double f : finals) improved += (f > sft_true) ? 1 : 0;
  summary["improved_seeds"] = improved;
  staged.stage(join(exp.dir, "dpr_" + mode + "_summary.json"), summary.dump(2) + "\n");

  if (exp.config.heatmap_rollouts > 0) {
    const PolicyTable& final_policy = results.front().policy;
    for (int k = 0; k < exp.config.heatmap_rollouts; ++k) {
      const Trajectory traj = sample_trajectory(
          final_policy, mix64(seeds.front(), kHeatmapTag, static_cast<std::uint64_t>(k)),
          exp.config.dpr.temperature);
      const auto entries = token_heatmap(ck.pi_sft, ck.pi_ref, traj);
      staged.stage(join(exp.dir, "heatmap_" + mode + "_" + std::to_string(k) + ".json"),
                   heatmap_to_json(traj, entries, digest, ck.sft_id, ck.ref_id).dump(2) + "\n");
    }
  }
  staged.check_writable(opt.force);
  staged.write_all();
  const bool has_truth = std::isfinite(sft_true);
  out << "reward_mode=" << mode << " mean_final_true_return=" << format_double(stats.mean)
      << " stddev=" << format_double(stats.stddev);
  if (has_truth) out << " improved_seeds=" << improved << "/" << seeds.size();
  out << "\n";
  return 0;
}

int cmd_sweep(const CommandOptions& opt, std::ostream& out) {
  const LoadedExperiment exp = load_experiment(opt);
  if (exp.config.sweep_gamma.empty() && exp.config.sweep_alpha.empty()) {
    throw ConfigError("sweep: the config has no sweep axis");
  }
  if (!exp.config.has_recipe) throw ConfigError("sweep requires an inline env recipe");

  SuiteConfig suite_cfg;
  suite_cfg.recipe = exp.config.recipe;
  suite_cfg.demo_count = exp.config.demo_count;
  suite_cfg.dataset_seed = exp.config.dataset_seed;
  suite_cfg.sft = exp.config.sft;
  suite_cfg.sft_seed = exp.config.sft_seed;
  suite_cfg.dpr = exp.config.dpr;
  const std::vector<std::uint64_t>& seeds = exp.config.seeds;

  const bool is_gamma = !exp.config.sweep_gamma.empty();
  const std::string axis = is_gamma ? "gamma" : "alpha";
  const std::vector<double>& values = is_gamma ? exp.config.sweep_gamma : exp.config.sweep_alpha;

  // Train the shared artifacts once, then run (point, seed) jobs.
  const EnvSpec env = make_env(suite_cfg.recipe);
  const TreePtr tree = Tree::build(env);
  const PolicyTable expert = expert_policy(tree, 1.0);
  Dataset data = sample_dataset(expert, suite_cfg.demo_count, suite_cfg.dataset_seed);
  data.env_digest = env_digest(env);

  std::vector<SftArtifacts> per_point;
  if (is_gamma) {
    per_point.assign(values.size(), train_sft(tree, data, suite_cfg.sft, suite_cfg.sft_seed));
  } else {
    for (double alpha : values) {
      if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("sweep.alpha values must lie strictly between 0 and 1");
      }
    }
    const SftMultiArtifacts multi =
        train_sft_multi(tree, data, suite_cfg.sft, suite_cfg.sft_seed, values);
    for (const SftSnapshot& snap : multi.snapshots) {
      per_point.push_back(SftArtifacts{multi.pi_sft, snap.policy, multi.loss_curve, snap.step});
    }
  }

  std::vector<std::vector<DprResult>> results(
      values.size(), std::vector<DprResult>(seeds.size(), DprResult{PolicyTable(tree), {}}));
  std::vector<std::function<void()>> jobs;
  for (std::size_t p = 0; p < values.size(); ++p) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      jobs.push_back([&, p, i] {
        DprConfig cfg = suite_cfg.dpr;
        if (is_gamma) cfg.gamma = values[p];
        results[p][i] = dpr_train(per_point[p], cfg, seeds[i]);
      });
    }
  }
  run_jobs(jobs, opt.workers);

  StagedOutputs staged;
  nlohmann::json summary;
  summary["axis"] = axis;
  nlohmann::json points = nlohmann::json::array();
  double best_value = values.front();
  double best_mean = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < values.size(); ++p) {
    std::vector<double> finals;
    for (const DprResult& r : results[p]) finals.push_back(r.log.records.back().true_return);
    const SeedStats stats = summarize(finals);
    nlohmann::json point;
    point["value"] = values[p];
    point["final_true_return"] = stats_json(stats, seeds);
    points.push_back(point);
    if (stats.mean > best_mean) {
      best_mean = stats.mean;
      best_value = values[p];
    }
    const std::string pdir = join(exp.dir, "sweep_" + axis + "_" + format_double(values[p]));
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      staged.stage(join(pdir, "seed_" + std::to_string(seeds[i]) + ".csv"),
                   trainlog_csv(results[p][i].log, env.horizon));
    }
  }
  summary["points"] = points;
  summary["best_value"] = best_value;
  staged.stage(join(exp.dir, "sweep_" + axis + "_summary.json"), summary.dump(2) + "\n");
  staged.check_writable(opt.force);
  staged.write_all();
  out << "axis=" << axis << " best_value=" << format_double(best_value)
      << " best_mean_true_return=" << format_double(best_mean) << "\n";
  return 0;
}

int cmd_heatmap(const CommandOptions& opt, std::ostream& out) {
  const LoadedExperiment exp = load_experiment(opt);
  const EnvSpec env = load_env_for(exp);
  const std::string digest = env_digest(env);
  const TreePtr tree = Tree::build(env);
  const LoadedCheckpoints ck = load_checkpoints(exp, tree, digest);

  StagedOutputs staged;
  for (int k = 0; k < exp.config.heatmap_rollouts; ++k) {
    const Trajectory traj = sample_trajectory(
        ck.pi_sft, mix64(exp.config.seeds.front(), kHeatmapTag, static_cast<std::uint64_t>(k)),
        1.0);
    const auto entries = token_heatmap(ck.pi_sft, ck.pi_ref, traj);
    staged.stage(join(exp.dir, "heatmap_sft_" + std::to_string(k) + ".json"),
                 heatmap_to_json(traj, entries, digest, ck.sft_id, ck.ref_id).dump(2) + "\n");
  }
  staged.check_writable(opt.force);
  staged.write_all();
  out << "heatmaps=" << exp.config.heatmap_rollouts << "\n";
  return 0;
}

int cmd_verify(const CommandOptions& opt, std::ostream& out) {
  VerifyLevel level;
  if (opt.level == "fast") {
    level = VerifyLevel::fast;
  } else if (opt.level == "full") {
    level = VerifyLevel::full;
  } else {
    throw ConfigError("--level must be fast or full");
  }
  return print_verify_report(run_verify_suite(level), out);
}

}  // namespace densepath

#include "densepath/suite.hpp"

#include <cmath>
#include <stdexcept>

#include "densepath/serialize.hpp"

namespace densepath {

SuiteConfig SuiteConfig::desk_defaults() {
  SuiteConfig cfg;
  cfg.recipe.kind = RecipeKind::random_reward;
  cfg.recipe.vocab_size = 4;
  cfg.recipe.horizon = 4;
  cfg.recipe.prompt_count = 2;
  cfg.recipe.seed = 5;
  cfg.recipe.scale = 1.0;
  cfg.demo_count = 2000;
  cfg.dataset_seed = 11;
  // A mid-training SFT policy (about 2.4 epochs): converged enough to imitate,
  // under-trained enough that the baseline fractions differ meaningfully.
  cfg.sft.total_steps = 150;
  cfg.sft.batch_size = 32;
  cfg.sft.learning_rate = 0.05;
  cfg.sft.baseline_fraction = 0.5;
  cfg.sft_seed = 3;
  cfg.dpr.iterations = 250;
  cfg.dpr.batch_size = 16;
  cfg.dpr.learning_rate = 0.02;
  cfg.dpr.optimizer = OptKind::Adam;
  cfg.dpr.reward_mode = RewardMode::dense_baseline;
  return cfg;
}

SuiteConfig SuiteConfig::eos_trap_defaults() {
  SuiteConfig cfg = desk_defaults();
  cfg.recipe.kind = RecipeKind::eos_trap;
  cfg.recipe.seed = 1;
  // The length-collapse demonstration presumes a near-converged imitator
  // whose argmax action is EOS everywhere, so it trains longer.
  cfg.sft.total_steps = 600;
  return cfg;
}

DeskSuite make_desk_suite(const SuiteConfig& cfg, Exec exec) {
  (void)exec;
  EnvSpec env = make_env(cfg.recipe);
  TreePtr tree = Tree::build(env);
  RewardFn truth = ground_truth_reward(tree);
  PolicyTable expert = expert_policy(tree, 1.0);
  Dataset data = sample_dataset(expert, cfg.demo_count, cfg.dataset_seed);
  data.env_digest = env_digest(env);
  SftArtifacts sft = train_sft(tree, data, cfg.sft, cfg.sft_seed);
  return DeskSuite{cfg, std::move(env), tree, std::move(truth), std::move(expert),
                   std::move(data), std::move(sft)};
}

std::vector<std::uint64_t> default_seeds() { return {1, 2, 3, 4, 5}; }

SeedStats summarize(const std::vector<double>& finals) {
  if (finals.empty()) throw std::invalid_argument("summarize: no values");
  SeedStats stats;
  stats.finals = finals;
  double total = 0.0;
  for (double x : finals) total += x;
  stats.mean = total / static_cast<double>(finals.size());
  if (finals.size() > 1) {
    double ss = 0.0;
    for (double x : finals) ss += (x - stats.mean) * (x - stats.mean);
    stats.stddev = std::sqrt(ss / static_cast<double>(finals.size() - 1));
  }
  return stats;
}

SeedStats run_mode_over_seeds(const DeskSuite& suite, const DprConfig& cfg,
                              const std::vector<std::uint64_t>& seeds, Exec exec) {
  std::vector<double> finals;
  for (std::uint64_t seed : seeds) {
    const DprResult result = dpr_train(suite.sft, cfg, seed, exec);
    finals.push_back(result.log.records.back().true_return);
  }
  return summarize(finals);
}

std::vector<SweepPoint> gamma_sweep(const DeskSuite& suite, const DprConfig& base,
                                    const std::vector<double>& gammas,
                                    const std::vector<std::uint64_t>& seeds, Exec exec) {
  std::vector<SweepPoint> points;
  for (double gamma : gammas) {
    DprConfig cfg = base;
    cfg.gamma = gamma;
    points.push_back(SweepPoint{gamma, run_mode_over_seeds(suite, cfg, seeds, exec)});
  }
  return points;
}

std::vector<SweepPoint> alpha_sweep(const SuiteConfig& cfg, const std::vector<double>& alphas,
                                    const std::vector<std::uint64_t>& seeds, Exec exec) {
  const EnvSpec env = make_env(cfg.recipe);
  const TreePtr tree = Tree::build(env);
  const PolicyTable expert = expert_policy(tree, 1.0);
  Dataset data = sample_dataset(expert, cfg.demo_count, cfg.dataset_seed);
  data.env_digest = env_digest(env);
  const SftMultiArtifacts multi = train_sft_multi(tree, data, cfg.sft, cfg.sft_seed, alphas);

  std::vector<SweepPoint> points;
  for (const SftSnapshot& snap : multi.snapshots) {
    SftArtifacts artifacts{multi.pi_sft, snap.policy, multi.loss_curve, snap.step};
    points.push_back(SweepPoint{snap.fraction, run_mode_over_seeds({cfg, env, tree,
                                                                    ground_truth_reward(tree),
                                                                    expert, data, artifacts},
                                                                   cfg.dpr, seeds, exec)});
  }
  return points;
}

}  // namespace densepath

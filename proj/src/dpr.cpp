#include "densepath/dpr.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace densepath {

namespace {

constexpr std::uint64_t kRolloutTag = 0x726f6c6cULL;  // rollout seed stream

std::vector<double> per_token_rewards(const Trajectory& traj, const std::vector<std::int32_t>& nodes,
                                      const RewardFn& r_hat, RewardMode mode) {
  std::vector<double> r(nodes.size(), 0.0);
  if (mode == RewardMode::sparse_eos) {
    double total = 0.0;
    for (std::size_t t = 0; t < nodes.size(); ++t) total += r_hat.at(nodes[t], traj.actions[t]);
    r.back() = total;
  } else {
    for (std::size_t t = 0; t < nodes.size(); ++t) r[t] = r_hat.at(nodes[t], traj.actions[t]);
  }
  return r;
}

std::vector<double> discounted_suffix(const std::vector<double>& r, double gamma) {
  std::vector<double> g(r.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = r.size(); i-- > 0;) {
    acc = r[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

std::vector<std::vector<double>> mode_returns(const std::vector<Trajectory>& trajs,
                                              const RewardFn& r_hat, RewardMode mode, double gamma,
                                              double kl_weight, const PolicyTable& pi_sft,
                                              const PolicyTable& pi_phi) {
  const auto& tree = *r_hat.tree;
  std::vector<std::vector<double>> out;
  out.reserve(trajs.size());
  for (const auto& traj : trajs) {
    const auto nodes = tree.nodes_on(traj);
    std::vector<double> r = per_token_rewards(traj, nodes, r_hat, mode);
    if (kl_weight != 0.0) {
      for (std::size_t t = 0; t < nodes.size(); ++t) {
        const Token a = traj.actions[t];
        r[t] -= kl_weight * (pi_phi.log_prob(nodes[t], a) - pi_sft.log_prob(nodes[t], a));
      }
    }
    out.push_back(discounted_suffix(r, gamma));
  }
  return out;
}

}  // namespace

std::string reward_mode_name(RewardMode mode) {
  switch (mode) {
    case RewardMode::dense_baseline:
      return "dense_baseline";
    case RewardMode::logpi_raw:
      return "logpi_raw";
    case RewardMode::task_with_V:
      return "task_with_V";
    case RewardMode::sparse_eos:
      return "sparse_eos";
  }
  throw std::invalid_argument("unknown reward mode");
}

RewardMode reward_mode_from_name(const std::string& name) {
  if (name == "dense_baseline") return RewardMode::dense_baseline;
  if (name == "logpi_raw") return RewardMode::logpi_raw;
  if (name == "task_with_V") return RewardMode::task_with_V;
  if (name == "sparse_eos") return RewardMode::sparse_eos;
  throw ConfigError("unknown reward_mode: " + name);
}

void DprConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (kl_weight < 0.0) throw ConfigError("kl_weight must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("rollout temperature must be positive");
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
}

std::vector<std::vector<double>> token_returns(const std::vector<Trajectory>& trajs,
                                               const RewardFn& r_hat, double gamma,
                                               double kl_weight, const PolicyTable& pi_sft,
                                               const PolicyTable& pi_phi) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
  return mode_returns(trajs, r_hat, RewardMode::dense_baseline, gamma, kl_weight, pi_sft, pi_phi);
}

std::vector<std::vector<double>> sr_returns(const std::vector<Trajectory>& trajs,
                                            const RewardFn& r_hat) {
  const auto& tree = *r_hat.tree;
  std::vector<std::vector<double>> out;
  out.reserve(trajs.size());
  for (const auto& traj : trajs) {
    const auto nodes = tree.nodes_on(traj);
    double total = 0.0;
    for (std::size_t t = 0; t < nodes.size(); ++t) total += r_hat.at(nodes[t], traj.actions[t]);
    out.emplace_back(nodes.size(), total);
  }
  return out;
}

TrainRecord train_metrics(const PolicyTable& pi_phi, const RewardFn& base,
                          const PolicyTable& pi_sft, const RewardFn* r_true, Exec exec) {
  const auto& tree = *pi_phi.tree();
  const int H = tree.horizon();
  const Occupancy rho = occupancy(pi_phi, exec);
  const std::vector<double> node_mass = rho.node_mass();

  TrainRecord rec;
  rec.proxy_return = expected_return(rho, base, exec);
  rec.true_return = r_true ? expected_return(rho, *r_true, exec)
                           : std::numeric_limits<double>::quiet_NaN();
  rec.mean_length = rho.total_mass(exec);
  rec.reward_pos.assign(static_cast<std::size_t>(H), 0.0);
  rec.kl_pos.assign(static_cast<std::size_t>(H), 0.0);

  double kl_weighted = 0.0;
  std::vector<double> depth_mass(static_cast<std::size_t>(H), 0.0);
  std::vector<double> depth_reward(static_cast<std::size_t>(H), 0.0);
  std::vector<double> depth_kl(static_cast<std::size_t>(H), 0.0);
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    const auto d = static_cast<std::size_t>(tree.depth(node));
    const double p = node_mass[n];
    const double kl = row_kl(pi_phi, pi_sft, node);
    kl_weighted += p * kl;
    depth_mass[d] += p;
    depth_kl[d] += p * kl;
    const std::size_t edge_base = tree.edge_index(node, 0);
    for (int a = 0; a < tree.vocab(); ++a) {
      depth_reward[d] += rho.mass[edge_base + static_cast<std::size_t>(a)] *
                         base.values[edge_base + static_cast<std::size_t>(a)];
    }
  }
  rec.mean_kl = rec.mean_length > 0.0 ? kl_weighted / rec.mean_length : 0.0;
  for (int k = 0; k < H; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (depth_mass[ks] > 0.0) {
      rec.reward_pos[ks] = depth_reward[ks] / depth_mass[ks];
      rec.kl_pos[ks] = depth_kl[ks] / depth_mass[ks];
    }
  }
  return rec;
}

namespace {

RewardFn base_reward_for_mode(const SftArtifacts& artifacts, RewardMode mode, Exec exec) {
  switch (mode) {
    case RewardMode::dense_baseline:
    case RewardMode::sparse_eos:
      return dense_reward(artifacts.pi_sft, artifacts.pi_ref, exec);
    case RewardMode::logpi_raw:
      return logpi_reward(artifacts.pi_sft, exec);
    case RewardMode::task_with_V:
      return recovered_task_reward(artifacts.pi_sft, exec);
  }
  throw std::invalid_argument("unknown reward mode");
}

}  // namespace

DprResult dpr_train(const SftArtifacts& artifacts, const DprConfig& cfg, std::uint64_t seed,
                    Exec exec) {
  cfg.validate();
  const TreePtr tree = artifacts.pi_sft.tree();
  if (artifacts.pi_ref.tree() != tree) throw std::invalid_argument("checkpoints must share a tree");

  const RewardFn base = base_reward_for_mode(artifacts, cfg.reward_mode, exec);
  const RewardFn* r_true_ptr = nullptr;
  RewardFn r_true{tree, {}, RewardLabel::ground_truth};
  if (tree->env().has_true_reward) {
    r_true = ground_truth_reward(tree);
    r_true_ptr = &r_true;
  }

  DprResult result{artifacts.pi_sft, TrainLog{}};
  PolicyTable& pi_phi = result.policy;

  OptState opt;
  opt.kind = cfg.optimizer;
  opt.lr = cfg.learning_rate;

  TrainRecord rec = train_metrics(pi_phi, base, artifacts.pi_sft, r_true_ptr, exec);
  rec.iteration = 0;
  result.log.records.push_back(std::move(rec));

  std::vector<Trajectory> trajs(static_cast<std::size_t>(cfg.batch_size));
  for (int it = 1; it <= cfg.iterations; ++it) {
    for (int i = 0; i < cfg.batch_size; ++i) {
      const std::uint64_t s = mix64(mix64(seed, kRolloutTag, static_cast<std::uint64_t>(it)),
                                    static_cast<std::uint64_t>(i));
      trajs[static_cast<std::size_t>(i)] = sample_trajectory(pi_phi, s, cfg.temperature);
    }
    const auto returns = mode_returns(trajs, base, cfg.reward_mode, cfg.gamma, cfg.kl_weight,
                                      artifacts.pi_sft, pi_phi);
    const GradTable g = reinforce_gradient(pi_phi, trajs, returns);
    opt_step(pi_phi, g, opt);

    TrainRecord r = train_metrics(pi_phi, base, artifacts.pi_sft, r_true_ptr, exec);
    r.iteration = it;
    result.log.records.push_back(std::move(r));
  }
  return result;
}

GradTable exact_policy_gradient(const PolicyTable& pi, const RewardFn& r, double gamma, Exec exec) {
  if (r.tree != pi.tree()) throw std::invalid_argument("reward and policy must share a tree");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
  const auto& tree = *pi.tree();
  const int V = tree.vocab();

  // W(s): expected discounted return-to-go under pi; backward over layers.
  std::vector<double> w(tree.node_count(), 0.0);
  for (int d = tree.max_depth(); d >= 0; --d) {
    const auto& layer = tree.layer(d);
    kernels::parallel_for(exec, layer.size(), [&](std::size_t i) {
      const std::int32_t n = layer[i];
      std::vector<double> probs;
      pi.prob_row(n, probs);
      const std::size_t base = tree.edge_index(n, 0);
      double acc = 0.0;
      for (Token a = 0; a < V; ++a) {
        const std::int32_t c = tree.child(n, a);
        const double w_next = c < 0 ? 0.0 : w[static_cast<std::size_t>(c)];
        acc += probs[static_cast<std::size_t>(a)] * (r.values[base + static_cast<std::size_t>(a)] + gamma * w_next);
      }
      w[static_cast<std::size_t>(n)] = acc;
    });
  }

  // grad(s,b) = sum_a rho(s,a) (1{a=b} - pi(b|s)) (r(s,a) + gamma W(f(s,a))).
  const Occupancy rho = occupancy(pi, exec);
  GradTable g = zero_grad(pi.tree());
  kernels::parallel_for(exec, tree.node_count(), [&](std::size_t ni) {
    const auto n = static_cast<std::int32_t>(ni);
    std::vector<double> probs;
    pi.prob_row(n, probs);
    const std::size_t base = tree.edge_index(n, 0);
    double expected_q = 0.0;  // sum_a rho(s,a) (r + gamma W(s'))
    for (Token a = 0; a < V; ++a) {
      const std::int32_t c = tree.child(n, a);
      const double w_next = c < 0 ? 0.0 : w[static_cast<std::size_t>(c)];
      expected_q += rho.mass[base + static_cast<std::size_t>(a)] *
                    (r.values[base + static_cast<std::size_t>(a)] + gamma * w_next);
    }
    for (Token b = 0; b < V; ++b) {
      const std::int32_t cb = tree.child(n, b);
      const double w_next_b = cb < 0 ? 0.0 : w[static_cast<std::size_t>(cb)];
      const double own = rho.mass[base + static_cast<std::size_t>(b)] *
                         (r.values[base + static_cast<std::size_t>(b)] + gamma * w_next_b);
      g.values[base + static_cast<std::size_t>(b)] = own - probs[static_cast<std::size_t>(b)] * expected_q;
    }
  });
  return g;
}

double pg_equivalence_gap(const PolicyTable& pi, const RewardFn& r, const SoftSolution& solution,
                          Exec exec) {
  if (solution.tree != pi.tree() || r.tree != pi.tree()) {
    throw std::invalid_argument("inputs must share a tree");
  }
  const auto& tree = *pi.tree();
  RewardFn teacher{pi.tree(), std::vector<double>(tree.edge_count(), 0.0), RewardLabel::custom};
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    const std::size_t base = tree.edge_index(node, 0);
    for (int a = 0; a < tree.vocab(); ++a) {
      teacher.values[base + static_cast<std::size_t>(a)] =
          (solution.q[base + static_cast<std::size_t>(a)] - solution.v[n]) / solution.beta;
    }
  }
  const GradTable g_r = exact_policy_gradient(pi, r, 1.0, exec);
  const GradTable g_t = exact_policy_gradient(pi, teacher, 1.0, exec);
  return kernels::max_abs_diff(exec, g_r.values, g_t.values);
}

PolicyTable exact_gradient_ascent(const PolicyTable& start, const RewardFn& r, double gamma,
                                  double lr, int steps, Exec exec) {
  PolicyTable pi = start;
  for (int s = 0; s < steps; ++s) {
    const GradTable g = exact_policy_gradient(pi, r, gamma, exec);
    auto& theta = pi.logits();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += lr * g.values[i];
  }
  return pi;
}

EosPathologyResult eos_pathology_run(const SftArtifacts& artifacts, const DprConfig& cfg,
                                     std::uint64_t seed, Exec exec) {
  const auto& tree = *artifacts.pi_sft.tree();
  const Token eos = tree.env().eos;

  EosPathologyResult result;
  result.premise_ok = true;
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    const auto node = static_cast<std::int32_t>(n);
    if (tree.depth(node) > 1) continue;
    Token best = 0;
    double best_logit = artifacts.pi_sft.logit(node, 0);
    for (Token a = 1; a < tree.vocab(); ++a) {
      const double l = artifacts.pi_sft.logit(node, a);
      if (l > best_logit) {
        best_logit = l;
        best = a;
      }
    }
    if (best != eos) {
      result.premise_ok = false;
      break;
    }
  }

  DprConfig naive_cfg = cfg;
  naive_cfg.reward_mode = RewardMode::logpi_raw;
  DprConfig baseline_cfg = cfg;
  baseline_cfg.reward_mode = RewardMode::dense_baseline;

  const DprResult naive = dpr_train(artifacts, naive_cfg, seed, exec);
  const DprResult baseline = dpr_train(artifacts, baseline_cfg, seed, exec);
  for (const auto& rec : naive.log.records) result.naive_lengths.push_back(rec.mean_length);
  for (const auto& rec : baseline.log.records) result.baseline_lengths.push_back(rec.mean_length);
  return result;
}

}  // namespace densepath

#include "densepath/sft.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace densepath {

namespace {

constexpr std::uint64_t kShuffleTag = 0x73686668ULL;  // batch shuffle stream

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  RngStream rng(mix64(seed, kShuffleTag, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

double warmup_scale(const SftConfig& cfg, int step) {
  if (cfg.warmup_fraction <= 0.0) return 1.0;
  const double warm_steps = cfg.warmup_fraction * cfg.total_steps;
  if (warm_steps < 1.0) return 1.0;
  return std::min(1.0, static_cast<double>(step) / warm_steps);
}

}  // namespace

void SftConfig::validate() const {
  if (total_steps < 1) throw ConfigError("sft total_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("sft batch_size must be >= 1");
  if (!(baseline_fraction > 0.0 && baseline_fraction < 1.0)) {
    throw ConfigError("baseline_fraction must be in (0, 1)");
  }
  if (static_cast<int>(baseline_fraction * total_steps) < 1) {
    throw ConfigError("baseline_fraction * total_steps must be >= 1");
  }
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
    throw ConfigError("warmup_fraction must be in [0, 1)");
  }
}

double sft_loss(const PolicyTable& pi, const Dataset& data) {
  if (data.trajectories.empty()) throw std::invalid_argument("empty dataset");
  double total = 0.0;
  for (const auto& traj : data.trajectories) total += -traj_log_prob(pi, traj);
  return total / static_cast<double>(data.trajectories.size());
}

double iq_objective(const PolicyTable& q, const Dataset& data) {
  if (data.trajectories.empty()) throw std::invalid_argument("empty dataset");
  const auto& tree = *q.tree();
  double sum_terms = 0.0;
  double sum_v0 = 0.0;
  for (const auto& traj : data.trajectories) {
    const auto nodes = tree.nodes_on(traj);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      const std::int32_t c = tree.child(nodes[t], traj.actions[t]);
      const double v_next = c < 0 ? 0.0 : q.row_value(c);
      sum_terms += q.logit(nodes[t], traj.actions[t]) - v_next;
    }
    sum_v0 += q.row_value(nodes[0]);
  }
  const double inv = 1.0 / static_cast<double>(data.trajectories.size());
  return sum_terms * inv - sum_v0 * inv;
}

double equivalence_gap(const PolicyTable& q, const Dataset& data) {
  return std::abs(iq_objective(q, data) + sft_loss(q, data));
}

std::vector<std::size_t> batch_indices(std::size_t data_size, int batch_size, std::uint64_t seed,
                                       int step) {
  if (step < 1) throw std::invalid_argument("step is 1-based");
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  const std::size_t steps_per_epoch = (data_size + bs - 1) / bs;
  const std::int64_t idx = step - 1;
  const std::int64_t epoch = idx / static_cast<std::int64_t>(steps_per_epoch);
  const std::size_t within = static_cast<std::size_t>(idx % static_cast<std::int64_t>(steps_per_epoch));
  const auto perm = epoch_permutation(data_size, seed, epoch);
  const std::size_t lo = within * bs;
  const std::size_t hi = std::min(data_size, lo + bs);
  return std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                  perm.begin() + static_cast<std::ptrdiff_t>(hi));
}

namespace {

/// Shared trainer core: runs steps (from_step, to_step], recording the full
/// dataset loss after each step when `curve` is non-null and snapshotting
/// whenever the step count hits an entry of `snap_steps`.
void run_steps(PolicyTable& pi, const Dataset& data, const SftConfig& cfg, std::uint64_t seed,
               int from_step, int to_step, std::vector<std::pair<int, double>>* curve,
               const std::vector<int>* snap_steps, std::vector<PolicyTable>* snaps) {
  OptState opt;
  opt.kind = cfg.optimizer;
  opt.step = from_step;

  const std::size_t n = data.trajectories.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> perm;
  std::vector<Trajectory> batch;

  for (int step = from_step + 1; step <= to_step; ++step) {
    const std::int64_t idx = step - 1;
    const std::int64_t epoch = idx / static_cast<std::int64_t>(steps_per_epoch);
    if (epoch != cached_epoch) {
      perm = epoch_permutation(n, seed, epoch);
      cached_epoch = epoch;
    }
    const std::size_t within = static_cast<std::size_t>(idx % static_cast<std::int64_t>(steps_per_epoch));
    const std::size_t lo = within * bs;
    const std::size_t hi = std::min(n, lo + bs);
    batch.clear();
    for (std::size_t i = lo; i < hi; ++i) batch.push_back(data.trajectories[perm[i]]);

    const GradTable g = ce_gradient(pi, batch);
    opt.lr = cfg.learning_rate * warmup_scale(cfg, step);
    opt_step(pi, g, opt);

    if (curve) curve->emplace_back(step, sft_loss(pi, data));
    if (snap_steps) {
      for (std::size_t k = 0; k < snap_steps->size(); ++k) {
        if ((*snap_steps)[k] == step) (*snaps)[k] = pi;
      }
    }
  }
}

}  // namespace

SftMultiArtifacts train_sft_multi(TreePtr tree, const Dataset& data, const SftConfig& cfg,
                                  std::uint64_t seed, const std::vector<double>& fractions) {
  cfg.validate();
  if (data.trajectories.empty()) throw std::invalid_argument("empty dataset");

  std::vector<int> snap_steps;
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("snapshot fractions must be in (0, 1)");
    const int s = static_cast<int>(f * cfg.total_steps);
    if (s < 1) throw ConfigError("snapshot fraction maps to step 0");
    snap_steps.push_back(s);
  }

  PolicyTable pi(tree);
  std::vector<PolicyTable> snaps(fractions.size(), pi);
  std::vector<std::pair<int, double>> curve;
  curve.emplace_back(0, sft_loss(pi, data));
  run_steps(pi, data, cfg, seed, 0, cfg.total_steps, &curve, &snap_steps, &snaps);

  SftMultiArtifacts out{std::move(pi), {}, std::move(curve)};
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    out.snapshots.push_back(SftSnapshot{fractions[k], snap_steps[k], std::move(snaps[k])});
  }
  return out;
}

SftArtifacts train_sft(TreePtr tree, const Dataset& data, const SftConfig& cfg, std::uint64_t seed) {
  auto multi = train_sft_multi(std::move(tree), data, cfg, seed, {cfg.baseline_fraction});
  return SftArtifacts{std::move(multi.pi_sft), std::move(multi.snapshots[0].policy),
                      std::move(multi.loss_curve), multi.snapshots[0].step};
}

PolicyTable sft_continue(const PolicyTable& start, const Dataset& data, const SftConfig& cfg,
                         std::uint64_t seed, int from_step) {
  cfg.validate();
  if (from_step < 0 || from_step > cfg.total_steps) {
    throw std::invalid_argument("from_step out of range");
  }
  PolicyTable pi = start;
  run_steps(pi, data, cfg, seed, from_step, cfg.total_steps, nullptr, nullptr, nullptr);
  return pi;
}

}  // namespace densepath

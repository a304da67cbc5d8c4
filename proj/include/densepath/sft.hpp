#pragma once

/**
 * Teacher-forced SFT with mid-training snapshots, and the reduced inverse-RL
 * objective whose negation equals the SFT loss for every Q table.
 */

#include <cstdint>
#include <utility>
#include <vector>

#include "densepath/policy.hpp"

namespace densepath {

struct SftConfig {
  int total_steps = 0;
  double baseline_fraction = 0.5;
  int batch_size = 1;
  double learning_rate = 0.05;
  OptKind optimizer = OptKind::SGD;
  /// Linear learning-rate warmup over the first fraction of steps; 0 disables.
  double warmup_fraction = 0.0;

  void validate() const;
};

struct SftArtifacts {
  PolicyTable pi_sft;
  PolicyTable pi_ref;
  /// (step, full-dataset loss); entry 0 is the loss before training.
  std::vector<std::pair<int, double>> loss_curve;
  int ref_step = 0;
};

/// A mid-training snapshot captured after step floor(fraction * N).
struct SftSnapshot {
  double fraction = 0.0;
  int step = 0;
  PolicyTable policy;
};

struct SftMultiArtifacts {
  PolicyTable pi_sft;
  std::vector<SftSnapshot> snapshots;
  std::vector<std::pair<int, double>> loss_curve;
};

/// Mean over trajectories of the per-trajectory token log-likelihood sum,
/// negated: (1/|D|) sum_tau -sum_t log pi(a_t|s_t).
double sft_loss(const PolicyTable& pi, const Dataset& data);

/// Reading the logits as Q with V = logsumexp and V(terminal) = 0:
/// mean_tau sum_t [Q(s_t,a_t) - V(s_{t+1})] - mean_tau V(s_0).
double iq_objective(const PolicyTable& q, const Dataset& data);

/// |iq_objective + sft_loss|; zero in exact arithmetic for every Q table.
double equivalence_gap(const PolicyTable& q, const Dataset& data);

/// Minibatch indices of one training step (1-based): epochs are seeded
/// shuffles, batches are consecutive chunks, the last chunk of an epoch may
/// be short. A pure function of (data size, batch size, seed, step).
std::vector<std::size_t> batch_indices(std::size_t data_size, int batch_size, std::uint64_t seed,
                                       int step);

/// N optimizer steps on minibatched ce_gradient from the uniform policy;
/// snapshots pi_ref after step floor(alpha * N). Deterministic given seed.
SftArtifacts train_sft(TreePtr tree, const Dataset& data, const SftConfig& cfg, std::uint64_t seed);

/// One pass capturing a snapshot per fraction (all in (0,1), floor(f*N) >= 1).
SftMultiArtifacts train_sft_multi(TreePtr tree, const Dataset& data, const SftConfig& cfg,
                                  std::uint64_t seed, const std::vector<double>& fractions);

/// Resume training from `start` after `from_step` completed steps and run to
/// cfg.total_steps. Exact continuation for SGD (no optimizer moments).
PolicyTable sft_continue(const PolicyTable& start, const Dataset& data, const SftConfig& cfg,
                         std::uint64_t seed, int from_step);

}  // namespace densepath

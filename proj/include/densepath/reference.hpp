#pragma once

/**
 * Slow, independent reference implementations used as test oracles and by
 * the kernel benchmark: naive single-pass folds (versus the chunked
 * kernels) and exhaustive trajectory enumeration (versus the dynamic
 * programs). Nothing here is called by the production paths.
 */

#include <span>

#include "densepath/policy.hpp"
#include "densepath/token_mdp.hpp"

namespace densepath::reference {

double sum(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double max_abs_diff(std::span<const double> x, std::span<const double> y);

/// Occupancy by complete trajectory enumeration: every trajectory's
/// probability is accumulated onto each edge it crosses.
Occupancy occupancy_by_enumeration(const PolicyTable& pi);

/// J_r by complete trajectory enumeration.
double expected_return_by_enumeration(const PolicyTable& pi, const RewardFn& r);

/// E[sum_t grad log pi(a_t|s_t) G_t] by complete trajectory enumeration with
/// discounted suffix returns; oracle for the dynamic-programming gradient.
GradTable policy_gradient_by_enumeration(const PolicyTable& pi, const RewardFn& r, double gamma);

}  // namespace densepath::reference

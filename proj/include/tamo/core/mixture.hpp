#pragma once

#include <span>

namespace tamo::core {

/// log sum_l w_l N(y; mu_l, s_l^2) via log-sum-exp. Weights must be
/// nonnegative and sum to 1 within 1e-6; scales strictly positive.
double gmm_log_prob(double y, std::span<const double> weights, std::span<const double> means,
                    std::span<const double> scales);

}  // namespace tamo::core

// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objective: mean-squared task loss plus load-balancing penalties
// of the form N * sum_j t_j * R_j per layer, applied at the expert level
// and (for multi-router layers) at the sub-router level. Gradients flow
// through the mean probabilities R only; the assignment fractions t are
// treated as constants.

#pragma once

#include "mor/stats.hpp"

namespace mor {

struct LossBreakdown {
  double task = 0.0;
  double balance_expert = 0.0;
  double balance_router = 0.0;
  double total = 0.0;
  double lambda_expert = 0.0;
  double lambda_router = 0.0;
};

/// Sum over layers of n_experts * sum_j t_j * R_j. Uniform assignment gives
/// exactly 1 per layer; all mass on one expert gives n_experts.
/// Throws std::invalid_argument on empty stats or zero token counts.
double balance_loss(const ActivationStats& stats);

/// Same form over sub-router assignments and mean main-router weights.
/// Single-router-mode layers contribute 0.
double router_balance_loss(const ActivationStats& stats);

struct TaskLoss {
  double value = 0.0;
  Vector grad;  // d value / d pred
};

/// 0.5 * |pred - target|^2 / len, gradient (pred - target) / len.
TaskLoss task_loss(const Vector& pred, const Vector& target);

/// task + lambda_e * balance + lambda_r * router balance.
LossBreakdown total_loss(double task, const ActivationStats& stats, double lambda_expert,
                         double lambda_router);

}  // namespace mor

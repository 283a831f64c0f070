// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/objective.hpp"

#include <stdexcept>
#include <string>

#include "mor/kernels.hpp"

namespace mor {

namespace {

void check_nonempty(const ActivationStats& stats) {
  if (stats.layers.empty()) throw std::invalid_argument("balance loss: empty stats");
  for (const LayerStats& ls : stats.layers) {
    if (ls.token_count == 0) {
      throw std::invalid_argument("balance loss: layer with zero tokens");
    }
  }
}

}  // namespace

double balance_loss(const ActivationStats& stats) {
  check_nonempty(stats);
  double total = 0.0;
  for (const LayerStats& ls : stats.layers) {
    Vector t = ls.assign_fractions();
    Vector r = ls.mean_probs();
    total += double(ls.n_experts) * kernels::dot(t.data(), r.data(), ls.n_experts);
  }
  return total;
}

double router_balance_loss(const ActivationStats& stats) {
  check_nonempty(stats);
  double total = 0.0;
  for (const LayerStats& ls : stats.layers) {
    if (!ls.mor_mode) continue;
    Vector t = ls.router_assign_fractions();
    Vector r = ls.router_mean_weights();
    total += double(ls.n_routers) * kernels::dot(t.data(), r.data(), ls.n_routers);
  }
  return total;
}

TaskLoss task_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw std::invalid_argument("task loss: prediction length " +
                                std::to_string(pred.size()) + " vs target length " +
                                std::to_string(target.size()));
  }
  TaskLoss out;
  out.grad.resize(pred.size());
  double inv = 1.0 / double(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double diff = pred[i] - target[i];
    out.grad[i] = diff * inv;
    acc += diff * diff;
  }
  out.value = 0.5 * acc * inv;
  return out;
}

LossBreakdown total_loss(double task, const ActivationStats& stats, double lambda_expert,
                         double lambda_router) {
  if (lambda_expert < 0.0 || lambda_router < 0.0) {
    throw std::invalid_argument("total loss: lambda coefficients must be >= 0");
  }
  LossBreakdown out;
  out.task = task;
  out.lambda_expert = lambda_expert;
  out.lambda_router = lambda_router;
  out.balance_expert = balance_loss(stats);
  out.balance_router = router_balance_loss(stats);
  out.total = task + lambda_expert * out.balance_expert + lambda_router * out.balance_router;
  return out;
}

}  // namespace mor

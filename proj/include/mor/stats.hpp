// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-layer routing telemetry: how often each expert lands in a top-k set,
// the running mean of the pre-top-k distributions, and the same pair at
// the sub-router level. Assignment counting rules: an expert is assigned
// a token when it is in the token's top-k selection; a sub-router is
// assigned a token when it carries the largest main-router weight.

#pragma once

#include <cstdint>
#include <vector>

#include "mor/routing.hpp"

namespace mor {

struct LayerStats {
  std::size_t n_experts = 0;
  std::size_t n_routers = 1;
  std::size_t k_experts = 1;
  bool mor_mode = false;
  std::uint64_t token_count = 0;
  std::vector<std::uint64_t> assign_counts;         // expert top-k membership
  Vector prob_sums;                                 // sum of full_dist
  std::vector<std::uint64_t> router_assign_counts;  // main-router argmax
  Vector router_weight_sums;                        // sum of router_weights

  /// t_j: assign_counts / (token_count * k); sums to 1.
  Vector assign_fractions() const;
  /// R_j: mean full_dist.
  Vector mean_probs() const;
  Vector router_assign_fractions() const;
  Vector router_mean_weights() const;
};

/// Record one token's routing decision.
void accumulate(LayerStats& stats, const RoutingDecision& decision);

struct ActivationStats {
  std::vector<LayerStats> layers;

  void accumulate(std::size_t layer, const RoutingDecision& decision);
  /// Commutative sum-merge of per-worker partials.
  void merge(const ActivationStats& other);
};

}  // namespace mor

// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/stats.hpp"

#include <stdexcept>

#include "mor/kernels.hpp"

namespace mor {

Vector LayerStats::assign_fractions() const {
  Vector t(n_experts, 0.0);
  double denom = double(token_count) * double(k_experts);
  for (std::size_t j = 0; j < n_experts; ++j) t[j] = double(assign_counts[j]) / denom;
  return t;
}

Vector LayerStats::mean_probs() const {
  Vector r = prob_sums;
  kernels::scale(r.data(), r.size(), 1.0 / double(token_count));
  return r;
}

Vector LayerStats::router_assign_fractions() const {
  Vector t(n_routers, 0.0);
  for (std::size_t s = 0; s < n_routers; ++s) {
    t[s] = double(router_assign_counts[s]) / double(token_count);
  }
  return t;
}

Vector LayerStats::router_mean_weights() const {
  Vector r = router_weight_sums;
  kernels::scale(r.data(), r.size(), 1.0 / double(token_count));
  return r;
}

void accumulate(LayerStats& ls, const RoutingDecision& decision) {
  if (decision.full_dist.size() != ls.n_experts ||
      decision.router_weights.size() != ls.n_routers) {
    throw std::invalid_argument("activation stats: decision shape mismatch");
  }
  ls.token_count += 1;
  for (std::size_t id : decision.selected) ls.assign_counts[id] += 1;
  kernels::axpy(1.0, decision.full_dist.data(), ls.prob_sums.data(), ls.n_experts);

  std::size_t best = 0;
  for (std::size_t s = 1; s < ls.n_routers; ++s) {
    if (decision.router_weights[s] > decision.router_weights[best]) best = s;
  }
  ls.router_assign_counts[best] += 1;
  kernels::axpy(1.0, decision.router_weights.data(), ls.router_weight_sums.data(),
                ls.n_routers);
}

void ActivationStats::accumulate(std::size_t layer, const RoutingDecision& decision) {
  if (layer >= layers.size()) {
    throw std::invalid_argument("activation stats: layer index out of range");
  }
  mor::accumulate(layers[layer], decision);
}

void ActivationStats::merge(const ActivationStats& other) {
  if (layers.size() != other.layers.size()) {
    throw std::invalid_argument("activation stats: layer count mismatch in merge");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerStats& a = layers[i];
    const LayerStats& b = other.layers[i];
    if (a.n_experts != b.n_experts || a.n_routers != b.n_routers ||
        a.k_experts != b.k_experts) {
      throw std::invalid_argument("activation stats: layer shape mismatch in merge");
    }
    a.token_count += b.token_count;
    for (std::size_t j = 0; j < a.n_experts; ++j) a.assign_counts[j] += b.assign_counts[j];
    kernels::axpy(1.0, b.prob_sums.data(), a.prob_sums.data(), a.n_experts);
    for (std::size_t s = 0; s < a.n_routers; ++s) {
      a.router_assign_counts[s] += b.router_assign_counts[s];
    }
    kernels::axpy(1.0, b.router_weight_sums.data(), a.router_weight_sums.data(),
                  a.n_routers);
  }
}

}  // namespace mor

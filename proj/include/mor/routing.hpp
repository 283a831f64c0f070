// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gating: single-router top-k softmax routing and the multi-router variant
// where a main router blends the expert distributions of several
// sub-routers before the expert top-k is applied. Backward passes
// differentiate the softmaxes and the renormalization of the retained
// entries; the discrete selection itself is treated as constant, so
// gradient checks must freeze the selection (SelectionOverride).

#pragma once

#include <cstdint>
#include <vector>

#include "mor/numeric.hpp"

namespace mor {

/// Weights of one main router over sub-routers plus one gating matrix per
/// sub-router. A single-router layer uses subs[0] and ignores main.
struct RouterParams {
  Matrix main;               // n_routers x d_in
  std::vector<Matrix> subs;  // each n_experts x d_in

  std::size_t n_routers() const { return subs.size(); }
  std::size_t n_experts() const { return subs.empty() ? 0 : subs[0].rows; }
};

/// Throws std::invalid_argument if shapes are inconsistent.
void validate(const RouterParams& params);

struct RoutingDecision {
  std::vector<std::size_t> selected;  // k expert ids, best first
  Vector weights;                     // renormalized over the selected ids
  Vector full_dist;                   // pre-top-k distribution over all experts
  Vector router_weights;              // dense over sub-routers ([1] when single)
};

/// Forces the discrete top-k sets instead of recomputing them. Used by the
/// finite-difference oracle to stay on the smooth retained path.
struct SelectionOverride {
  std::vector<std::size_t> expert_ids;
  std::vector<std::size_t> router_ids;  // ignored by single-router routing
};

/// Intermediate values a backward pass needs. params_revision guards
/// against parameter updates between forward and backward.
struct RoutingCache {
  Vector input;
  Vector main_probs;                        // softmax over routers, dense
  std::vector<std::size_t> router_selected;
  std::vector<Vector> sub_probs;            // softmax per sub-router, dense
  RoutingDecision decision;
  double temperature = 1.0;
  std::uint64_t params_revision = 0;
};

struct TopkResult {
  std::vector<std::size_t> ids;
  Vector weights;
};

/// Keep the k largest entries of a probability vector and rescale them to
/// sum to one. Throws if k is out of range or p does not sum to 1 +- 1e-6.
TopkResult topk_renormalize(const Vector& p, std::size_t k);

/// softmax(w_r x) followed by top-k renormalization; router_weights = [1].
RoutingDecision single_route(const Matrix& w_r, const Vector& x, std::size_t k,
                             double temperature = 1.0);

/// Main-router distribution over sub-routers after top-k_routers
/// renormalization; dropped sub-routers hold exact zeros.
Vector main_router_weights(const Matrix& main, const Vector& x, std::size_t k_routers,
                           double temperature = 1.0);

/// Each sub-router emits a full expert distribution; the main-router
/// weights blend them; expert top-k applies to the blend.
RoutingDecision mor_route(const RouterParams& params, const Vector& x,
                          std::size_t k_experts, std::size_t k_routers,
                          double temperature = 1.0);

RoutingCache single_route_cached(const Matrix& w_r, const Vector& x, std::size_t k,
                                 double temperature, std::uint64_t params_revision,
                                 const SelectionOverride* force = nullptr);

RoutingCache mor_route_cached(const RouterParams& params, const Vector& x,
                              std::size_t k_experts, std::size_t k_routers,
                              double temperature, std::uint64_t params_revision,
                              const SelectionOverride* force = nullptr);

/// Loss gradients flowing into a routing decision. Empty vectors mean zero.
struct RoutingUpstream {
  Vector on_weights;         // length k
  Vector on_full_dist;       // length n_experts
  Vector on_router_weights;  // length n_routers
};

struct RoutingGrads {
  Matrix d_main;
  std::vector<Matrix> d_subs;
  Vector d_x;
};

/// Backward through the routing computation the cache captured. The cache
/// must come from the same parameters at the same revision; a mismatch
/// throws std::runtime_error (stale cache).
RoutingGrads routing_grads(const RouterParams& params, const RoutingCache& cache,
                           const RoutingUpstream& upstream,
                           std::uint64_t current_revision);

}  // namespace mor

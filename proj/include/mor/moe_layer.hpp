// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// One adapter layer: frozen base matrix plus a routed weighted sum of
// LoRA experts, y = w0 x + sum_selected weight_i * expert_i(x). The
// revision counter is bumped on every parameter update so cached traces
// cannot be replayed against newer parameters.

#pragma once

#include <cstdint>
#include <string>

#include "mor/lora.hpp"
#include "mor/routing.hpp"
#include "mor/stats.hpp"

namespace mor {

enum class RoutingMode { single, mor };

const char* to_string(RoutingMode mode);

/// Throws std::invalid_argument on anything but "single" or "mor".
RoutingMode parse_routing_mode(const std::string& text);

struct MoeLoraLayer {
  Matrix w0;             // d_out x d_in, never trained
  LoraExpertBank bank;
  RouterParams routers;  // single mode uses subs[0]; main is an unused 1 x d_in
  RoutingMode mode = RoutingMode::single;
  std::size_t k_experts = 1;
  std::size_t k_routers = 1;
  double temperature = 1.0;
  std::uint64_t revision = 0;

  std::size_t d_in() const { return w0.cols; }
  std::size_t d_out() const { return w0.rows; }
};

MoeLoraLayer make_layer(RoutingMode mode, std::size_t d_in, std::size_t d_out,
                        std::size_t n_experts, std::size_t n_routers,
                        std::size_t k_experts, std::size_t k_routers, std::size_t rank,
                        double alpha, double temperature, Rng& rng);

void validate(const MoeLoraLayer& layer);

struct LayerTrace {
  RoutingCache cache;                  // holds the input and the decision
  std::vector<Vector> expert_outputs;  // scaled outputs of the selected experts
  Vector output;
};

/// Forward pass; stats (optional) receives assignment counts and
/// distributions, force (optional) pins the discrete selections.
LayerTrace layer_forward(const MoeLoraLayer& layer, const Vector& x, LayerStats* stats,
                         const SelectionOverride* force = nullptr);

struct LayerGrads {
  std::vector<Matrix> d_a;     // per expert, zero unless selected
  std::vector<Matrix> d_b;
  std::vector<Matrix> d_subs;
  Matrix d_main;
  Vector d_x;

  void add(const LayerGrads& other);
};

LayerGrads zero_grads(const MoeLoraLayer& layer);

/// Backward through the trace. upstream is dL/dy; balance_upstream carries
/// dL/d full_dist and dL/d router_weights from the balancing penalties
/// (empty vectors mean zero). w0 receives no gradient.
LayerGrads layer_backward(const MoeLoraLayer& layer, const LayerTrace& trace,
                          const Vector& upstream, const RoutingUpstream& balance_upstream);

}  // namespace mor

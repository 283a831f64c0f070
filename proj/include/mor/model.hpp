// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// A stack of adapter layers with tanh between them (none after the last).
// Hidden layers map d_in -> d_in; the last layer maps d_in -> d_out.

#pragma once

#include <string>

#include "mor/moe_layer.hpp"

namespace mor {

struct ModelSpec {
  std::size_t layers = 2;
  std::size_t d_in = 16;
  std::size_t d_out = 16;
  std::size_t n_experts = 8;
  std::size_t n_routers = 2;
  std::size_t k_experts = 2;
  std::size_t k_routers = 2;
  std::size_t rank = 8;
  double alpha = 16.0;
  double temperature = 1.0;
  RoutingMode mode = RoutingMode::mor;
};

struct Model {
  std::vector<MoeLoraLayer> layers;

  std::size_t d_in() const { return layers.front().d_in(); }
  std::size_t d_out() const { return layers.back().d_out(); }
};

Model make_model(const ModelSpec& spec, Rng& rng);

/// Stats accumulator shaped for every layer of the model.
ActivationStats make_stats(const Model& model);

struct ModelTrace {
  std::vector<LayerTrace> layer_traces;  // each cache holds the layer's input
};

/// Forward pass. stats, trace, and force are each optional; force pins the
/// discrete selections of every layer (one override per layer).
Vector model_forward(const Model& model, const Vector& x, ActivationStats* stats,
                     ModelTrace* trace,
                     const std::vector<SelectionOverride>* force = nullptr);

using ModelGrads = std::vector<LayerGrads>;

ModelGrads zero_grads(const Model& model);

/// Backward from dL/d output. balance_upstream supplies per-layer gradients
/// on full_dist / router_weights (may be empty). Accumulates into grads.
void model_backward(const Model& model, const ModelTrace& trace, const Vector& upstream,
                    const std::vector<RoutingUpstream>& balance_upstream,
                    ModelGrads& grads);

/// Bump every layer revision; call after mutating trainable parameters.
void mark_updated(Model& model);

/// One contiguous trainable block (matrix storage) with a diagnostic name.
struct ParamBlock {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

/// All trainable parameters in a fixed order: per layer, expert A and B
/// pairs, then sub-routers, then (multi-router layers only) the main
/// router. w0 is frozen and never appears.
std::vector<ParamBlock> trainable_params(Model& model);

std::size_t param_count(const std::vector<ParamBlock>& blocks);

/// Gradients flattened in exactly the trainable_params order.
Vector flatten_grads(const Model& model, const ModelGrads& grads);

/// Reusable buffers for the allocation-free inference path.
struct ForwardWorkspace {
  Vector act;
  Vector next;
  Vector router_logits;
  Vector probs;
  Vector full;
  Vector lora_mid;
  Vector expert_out;
  std::vector<std::size_t> order;
  std::vector<std::size_t> picked;
};

/// Forward pass without routing caches, stats, or heap churn after the
/// first call. Produces bit-identical outputs to model_forward.
void inference_forward(const Model& model, const Vector& x, ForwardWorkspace& ws,
                       Vector& out);

}  // namespace mor

// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/moe_layer.hpp"

#include <stdexcept>
#include <string>

#include "mor/kernels.hpp"

namespace mor {

const char* to_string(RoutingMode mode) {
  return mode == RoutingMode::single ? "single" : "mor";
}

RoutingMode parse_routing_mode(const std::string& text) {
  if (text == "single") return RoutingMode::single;
  if (text == "mor") return RoutingMode::mor;
  throw std::invalid_argument("routing mode must be \"single\" or \"mor\", got \"" + text +
                              "\"");
}

MoeLoraLayer make_layer(RoutingMode mode, std::size_t d_in, std::size_t d_out,
                        std::size_t n_experts, std::size_t n_routers,
                        std::size_t k_experts, std::size_t k_routers, std::size_t rank,
                        double alpha, double temperature, Rng& rng) {
  MoeLoraLayer layer;
  layer.mode = mode;
  layer.k_experts = k_experts;
  layer.k_routers = mode == RoutingMode::single ? 1 : k_routers;
  layer.temperature = temperature;
  layer.w0 = init_kaiming(d_out, d_in, rng);
  layer.bank = make_bank(n_experts, d_in, d_out, rank, alpha, rng);

  std::size_t routers = mode == RoutingMode::single ? 1 : n_routers;
  layer.routers.subs.reserve(routers);
  for (std::size_t s = 0; s < routers; ++s) {
    layer.routers.subs.push_back(init_kaiming(n_experts, d_in, rng));
  }
  // single mode never reads or trains the main router; keep a placeholder
  layer.routers.main = mode == RoutingMode::single ? init_zeros(1, d_in)
                                                   : init_kaiming(routers, d_in, rng);
  validate(layer);
  return layer;
}

void validate(const MoeLoraLayer& layer) {
  validate(layer.bank);
  validate(layer.routers);
  if (layer.bank.d_in != layer.w0.cols || layer.bank.d_out != layer.w0.rows) {
    throw std::invalid_argument("layer: bank dims do not match base matrix");
  }
  if (layer.routers.n_experts() != layer.bank.n()) {
    throw std::invalid_argument("layer: router output dim " +
                                std::to_string(layer.routers.n_experts()) + " != " +
                                std::to_string(layer.bank.n()) + " experts");
  }
  if (layer.routers.subs[0].cols != layer.bank.d_in) {
    throw std::invalid_argument("layer: router input dim mismatch");
  }
  if (layer.mode == RoutingMode::single && layer.routers.n_routers() != 1) {
    throw std::invalid_argument("layer: single mode requires exactly one sub-router");
  }
  if (layer.k_experts < 1 || layer.k_experts > layer.bank.n()) {
    throw std::invalid_argument("layer: k_experts out of range");
  }
  if (layer.k_routers < 1 || layer.k_routers > layer.routers.n_routers()) {
    throw std::invalid_argument("layer: k_routers out of range");
  }
  if (!(layer.temperature > 0.0)) {
    throw std::invalid_argument("layer: temperature must be > 0");
  }
}

LayerTrace layer_forward(const MoeLoraLayer& layer, const Vector& x, LayerStats* stats,
                         const SelectionOverride* force) {
  if (x.size() != layer.d_in()) {
    throw std::invalid_argument("layer forward: input length " + std::to_string(x.size()) +
                                " != d_in " + std::to_string(layer.d_in()));
  }
  LayerTrace trace;
  trace.cache = layer.mode == RoutingMode::single
                    ? single_route_cached(layer.routers.subs[0], x, layer.k_experts,
                                          layer.temperature, layer.revision, force)
                    : mor_route_cached(layer.routers, x, layer.k_experts, layer.k_routers,
                                       layer.temperature, layer.revision, force);

  trace.output.resize(layer.d_out());
  kernels::matvec(layer.w0.data.data(), layer.d_out(), layer.d_in(), x.data(),
                  trace.output.data());

  const RoutingDecision& dec = trace.cache.decision;
  trace.expert_outputs.reserve(dec.selected.size());
  for (std::size_t j = 0; j < dec.selected.size(); ++j) {
    trace.expert_outputs.push_back(expert_forward(layer.bank, dec.selected[j], x));
    kernels::axpy(dec.weights[j], trace.expert_outputs[j].data(), trace.output.data(),
                  layer.d_out());
  }

  if (stats) accumulate(*stats, dec);
  return trace;
}

LayerGrads zero_grads(const MoeLoraLayer& layer) {
  LayerGrads g;
  g.d_a.reserve(layer.bank.n());
  g.d_b.reserve(layer.bank.n());
  for (std::size_t i = 0; i < layer.bank.n(); ++i) {
    g.d_a.emplace_back(layer.bank.rank, layer.bank.d_in);
    g.d_b.emplace_back(layer.bank.d_out, layer.bank.rank);
  }
  g.d_subs.reserve(layer.routers.n_routers());
  for (const Matrix& sub : layer.routers.subs) g.d_subs.emplace_back(sub.rows, sub.cols);
  g.d_main = Matrix(layer.routers.main.rows, layer.routers.main.cols);
  g.d_x.assign(layer.d_in(), 0.0);
  return g;
}

void LayerGrads::add(const LayerGrads& other) {
  auto add_mat = [](Matrix& a, const Matrix& b) {
    kernels::axpy(1.0, b.data.data(), a.data.data(), a.size());
  };
  for (std::size_t i = 0; i < d_a.size(); ++i) add_mat(d_a[i], other.d_a[i]);
  for (std::size_t i = 0; i < d_b.size(); ++i) add_mat(d_b[i], other.d_b[i]);
  for (std::size_t s = 0; s < d_subs.size(); ++s) add_mat(d_subs[s], other.d_subs[s]);
  add_mat(d_main, other.d_main);
  kernels::axpy(1.0, other.d_x.data(), d_x.data(), d_x.size());
}

LayerGrads layer_backward(const MoeLoraLayer& layer, const LayerTrace& trace,
                          const Vector& upstream, const RoutingUpstream& balance_upstream) {
  if (upstream.size() != layer.d_out()) {
    throw std::invalid_argument("layer backward: upstream length mismatch");
  }
  if (trace.cache.input.size() != layer.d_in() ||
      trace.expert_outputs.size() != trace.cache.decision.selected.size()) {
    throw std::invalid_argument("layer backward: trace does not match layer");
  }
  LayerGrads g = zero_grads(layer);

  // base path
  kernels::matvec_t_accum(layer.w0.data.data(), layer.d_out(), layer.d_in(),
                          upstream.data(), g.d_x.data());

  const RoutingDecision& dec = trace.cache.decision;
  const Vector& x = trace.cache.input;
  RoutingUpstream ru = balance_upstream;
  ru.on_weights.assign(dec.selected.size(), 0.0);

  Vector scaled_up(layer.d_out());
  for (std::size_t j = 0; j < dec.selected.size(); ++j) {
    std::size_t id = dec.selected[j];
    ru.on_weights[j] = kernels::dot(upstream.data(), trace.expert_outputs[j].data(),
                                    layer.d_out());
    scaled_up.assign(layer.d_out(), 0.0);
    kernels::axpy(dec.weights[j], upstream.data(), scaled_up.data(), layer.d_out());
    ExpertGrads eg = expert_param_grads(layer.bank, id, x, scaled_up);
    g.d_a[id] = std::move(eg.d_a);
    g.d_b[id] = std::move(eg.d_b);
    expert_input_grad_accum(layer.bank, id, scaled_up, g.d_x);
  }

  RoutingGrads rg = routing_grads(layer.routers, trace.cache, ru, layer.revision);
  g.d_main = std::move(rg.d_main);
  g.d_subs = std::move(rg.d_subs);
  kernels::axpy(1.0, rg.d_x.data(), g.d_x.data(), layer.d_in());
  return g;
}

}  // namespace mor

// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mor/kernels.hpp"

namespace mor {

Model make_model(const ModelSpec& spec, Rng& rng) {
  if (spec.layers < 1) throw std::invalid_argument("model: need at least one layer");
  Model model;
  model.layers.reserve(spec.layers);
  for (std::size_t l = 0; l < spec.layers; ++l) {
    std::size_t out = l + 1 == spec.layers ? spec.d_out : spec.d_in;
    model.layers.push_back(make_layer(spec.mode, spec.d_in, out, spec.n_experts,
                                      spec.n_routers, spec.k_experts, spec.k_routers,
                                      spec.rank, spec.alpha, spec.temperature, rng));
  }
  return model;
}

ActivationStats make_stats(const Model& model) {
  ActivationStats stats;
  stats.layers.reserve(model.layers.size());
  for (const MoeLoraLayer& layer : model.layers) {
    LayerStats ls;
    ls.n_experts = layer.bank.n();
    ls.n_routers = layer.routers.n_routers();
    ls.k_experts = layer.k_experts;
    ls.mor_mode = layer.mode == RoutingMode::mor;
    ls.assign_counts.assign(ls.n_experts, 0);
    ls.prob_sums.assign(ls.n_experts, 0.0);
    ls.router_assign_counts.assign(ls.n_routers, 0);
    ls.router_weight_sums.assign(ls.n_routers, 0.0);
    stats.layers.push_back(std::move(ls));
  }
  return stats;
}

Vector model_forward(const Model& model, const Vector& x, ActivationStats* stats,
                     ModelTrace* trace, const std::vector<SelectionOverride>* force) {
  if (stats && stats->layers.size() != model.layers.size()) {
    throw std::invalid_argument("model forward: stats shape mismatch");
  }
  if (force && force->size() != model.layers.size()) {
    throw std::invalid_argument("model forward: need one override per layer");
  }
  Vector act = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    LayerStats* ls = stats ? &stats->layers[l] : nullptr;
    const SelectionOverride* f = force ? &(*force)[l] : nullptr;
    LayerTrace t = layer_forward(model.layers[l], act, ls, f);
    act = t.output;
    if (l + 1 < model.layers.size()) {
      for (double& v : act) v = std::tanh(v);
    }
    if (trace) trace->layer_traces.push_back(std::move(t));
  }
  return act;
}

ModelGrads zero_grads(const Model& model) {
  ModelGrads grads;
  grads.reserve(model.layers.size());
  for (const MoeLoraLayer& layer : model.layers) grads.push_back(zero_grads(layer));
  return grads;
}

void model_backward(const Model& model, const ModelTrace& trace, const Vector& upstream,
                    const std::vector<RoutingUpstream>& balance_upstream,
                    ModelGrads& grads) {
  const std::size_t n_layers = model.layers.size();
  if (trace.layer_traces.size() != n_layers || grads.size() != n_layers) {
    throw std::invalid_argument("model backward: trace/grads shape mismatch");
  }
  if (!balance_upstream.empty() && balance_upstream.size() != n_layers) {
    throw std::invalid_argument("model backward: need one balance upstream per layer");
  }
  static const RoutingUpstream kNoBalance;

  Vector up = upstream;
  for (std::size_t l = n_layers; l-- > 0;) {
    const RoutingUpstream& bal = balance_upstream.empty() ? kNoBalance : balance_upstream[l];
    LayerGrads g = layer_backward(model.layers[l], trace.layer_traces[l], up, bal);
    if (l > 0) {
      // undo the tanh between layer l-1 and l; its output is this layer's input
      const Vector& a = trace.layer_traces[l].cache.input;
      up.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        up[i] = g.d_x[i] * (1.0 - a[i] * a[i]);
      }
    }
    grads[l].add(g);
  }
}

void mark_updated(Model& model) {
  for (MoeLoraLayer& layer : model.layers) layer.revision += 1;
}

std::vector<ParamBlock> trainable_params(Model& model) {
  std::vector<ParamBlock> blocks;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    MoeLoraLayer& layer = model.layers[l];
    std::string prefix = "layer" + std::to_string(l) + ".";
    for (std::size_t i = 0; i < layer.bank.n(); ++i) {
      Matrix& a = layer.bank.experts[i].a;
      Matrix& b = layer.bank.experts[i].b;
      blocks.push_back({prefix + "expert" + std::to_string(i) + ".a", a.data.data(), a.size()});
      blocks.push_back({prefix + "expert" + std::to_string(i) + ".b", b.data.data(), b.size()});
    }
    for (std::size_t s = 0; s < layer.routers.n_routers(); ++s) {
      Matrix& sub = layer.routers.subs[s];
      blocks.push_back({prefix + "sub" + std::to_string(s), sub.data.data(), sub.size()});
    }
    if (layer.mode == RoutingMode::mor) {
      Matrix& main = layer.routers.main;
      blocks.push_back({prefix + "main", main.data.data(), main.size()});
    }
  }
  return blocks;
}

std::size_t param_count(const std::vector<ParamBlock>& blocks) {
  std::size_t n = 0;
  for (const ParamBlock& b : blocks) n += b.size;
  return n;
}

Vector flatten_grads(const Model& model, const ModelGrads& grads) {
  Vector flat;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const MoeLoraLayer& layer = model.layers[l];
    const LayerGrads& g = grads[l];
    for (std::size_t i = 0; i < layer.bank.n(); ++i) {
      flat.insert(flat.end(), g.d_a[i].data.begin(), g.d_a[i].data.end());
      flat.insert(flat.end(), g.d_b[i].data.begin(), g.d_b[i].data.end());
    }
    for (std::size_t s = 0; s < layer.routers.n_routers(); ++s) {
      flat.insert(flat.end(), g.d_subs[s].data.begin(), g.d_subs[s].data.end());
    }
    if (layer.mode == RoutingMode::mor) {
      flat.insert(flat.end(), g.d_main.data.begin(), g.d_main.data.end());
    }
  }
  return flat;
}

namespace {

// same ordering rule as top_k_indices, but into reusable buffers
void select_topk_ws(const double* p, std::size_t n, std::size_t k,
                    std::vector<std::size_t>& order, std::vector<std::size_t>& picked) {
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [p](std::size_t a, std::size_t b) {
    if (p[a] != p[b]) return p[a] > p[b];
    return a < b;
  };
  if (n <= 4) {
    // insertion sort; router distributions are this short
    for (std::size_t i = 1; i < n; ++i) {
      std::size_t v = order[i];
      std::size_t j = i;
      while (j > 0 && better(v, order[j - 1])) {
        order[j] = order[j - 1];
        --j;
      }
      order[j] = v;
    }
  } else {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end(), better);
  }
  picked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
}

}  // namespace

void inference_forward(const Model& model, const Vector& x, ForwardWorkspace& ws,
                       Vector& out) {
  const kernels::Backend& kb = kernels::active_backend();
  ws.act = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const MoeLoraLayer& layer = model.layers[l];
    const std::size_t n = layer.bank.n();
    const Vector& in = ws.act;

    // routing: full distribution into ws.full
    if (layer.mode == RoutingMode::single) {
      ws.full.resize(n);
      kb.matvec(layer.routers.subs[0].data.data(), n, layer.d_in(), in.data(),
                ws.full.data());
      kb.softmax(ws.full.data(), n, layer.temperature);
    } else {
      const std::size_t r = layer.routers.n_routers();
      const bool all_active = layer.k_routers == r;
      ws.router_logits.resize(r);
      kb.matvec(layer.routers.main.data.data(), r, layer.d_in(), in.data(),
                ws.router_logits.data());
      kb.softmax(ws.router_logits.data(), r, layer.temperature);
      ws.probs.resize(r * n);
      if (all_active) {
        // every sub-router is selected: evaluate them ahead of the ranking
        for (std::size_t s = 0; s < r; ++s) {
          double* p = ws.probs.data() + s * n;
          kb.matvec(layer.routers.subs[s].data.data(), n, layer.d_in(), in.data(), p);
          kb.softmax(p, n, layer.temperature);
        }
      }
      if (all_active && r == 2) {
        // ranking a pair is one comparison; ties keep the lower index first,
        // and aggregation stays in rank order, like the general path
        const bool flip = ws.router_logits[1] > ws.router_logits[0];
        const std::size_t hi = flip ? 1 : 0;
        const double mass = ws.router_logits[hi] + ws.router_logits[1 - hi];
        ws.full.assign(n, 0.0);
        kb.axpy(ws.router_logits[hi] / mass, ws.probs.data() + hi * n, ws.full.data(), n);
        kb.axpy(ws.router_logits[1 - hi] / mass, ws.probs.data() + (1 - hi) * n,
                ws.full.data(), n);
      } else {
        select_topk_ws(ws.router_logits.data(), r, layer.k_routers, ws.order, ws.picked);
        double mass = 0.0;
        for (std::size_t s : ws.picked) mass += ws.router_logits[s];
        if (!all_active) {
          for (std::size_t s : ws.picked) {
            double* p = ws.probs.data() + s * n;
            kb.matvec(layer.routers.subs[s].data.data(), n, layer.d_in(), in.data(), p);
            kb.softmax(p, n, layer.temperature);
          }
        }
        ws.full.assign(n, 0.0);
        for (std::size_t s : ws.picked) {
          kb.axpy(ws.router_logits[s] / mass, ws.probs.data() + s * n, ws.full.data(), n);
        }
      }
    }
    select_topk_ws(ws.full.data(), n, layer.k_experts, ws.order, ws.picked);
    double mass = 0.0;
    for (std::size_t id : ws.picked) mass += ws.full[id];

    // y = w0 in + sum over picked of weight * scaled expert output
    ws.next.resize(layer.d_out());
    kb.matvec(layer.w0.data.data(), layer.d_out(), layer.d_in(), in.data(),
              ws.next.data());
    for (std::size_t id : ws.picked) {
      const LoraExpert& e = layer.bank.experts[id];
      ws.lora_mid.resize(layer.bank.rank);
      kb.matvec(e.a.data.data(), layer.bank.rank, layer.d_in(), in.data(),
                ws.lora_mid.data());
      ws.expert_out.resize(layer.d_out());
      kb.matvec(e.b.data.data(), layer.d_out(), layer.bank.rank, ws.lora_mid.data(),
                ws.expert_out.data());
      kb.scale(ws.expert_out.data(), layer.d_out(), e.scaling);
      kb.axpy(ws.full[id] / mass, ws.expert_out.data(), ws.next.data(),
              layer.d_out());
    }

    if (l + 1 < model.layers.size()) {
      for (double& v : ws.next) v = std::tanh(v);
    }
    std::swap(ws.act, ws.next);
  }
  out = ws.act;
}

}  // namespace mor

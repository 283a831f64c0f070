// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/routing.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mor/kernels.hpp"

namespace mor {

namespace {

TopkResult renormalize_over(const double* p, const std::vector<std::size_t>& ids) {
  double s = 0.0;
  for (std::size_t id : ids) s += p[id];
  if (!(s > 0.0)) {
    throw std::runtime_error("topk_renormalize: selected entries have no mass");
  }
  TopkResult out;
  out.ids = ids;
  out.weights.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.weights[i] = p[ids[i]] / s;
  return out;
}

TopkResult select_topk(const Vector& p, std::size_t k, const std::vector<std::size_t>* forced) {
  if (forced) return renormalize_over(p.data(), *forced);
  return renormalize_over(p.data(), top_k_indices(p, k));
}

const Vector* nonempty_or_null(const Vector& v, std::size_t want, const char* what) {
  if (v.empty()) return nullptr;
  if (v.size() != want) {
    throw std::invalid_argument(std::string("routing_grads: upstream ") + what +
                                " has length " + std::to_string(v.size()) + ", expected " +
                                std::to_string(want));
  }
  return &v;
}

// dL/dz for p = softmax(z / T), given dL/dp.
void softmax_backward(const Vector& p, const Vector& dp, double temperature, Vector& dz) {
  double inner = kernels::dot(dp.data(), p.data(), p.size());
  dz.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    dz[i] = p[i] * (dp[i] - inner) / temperature;
  }
}

}  // namespace

void validate(const RouterParams& params) {
  if (params.subs.empty()) {
    throw std::invalid_argument("router params: need at least one sub-router");
  }
  for (const Matrix& sub : params.subs) {
    if (sub.rows != params.subs[0].rows || sub.cols != params.subs[0].cols) {
      throw std::invalid_argument("router params: sub-router shapes differ");
    }
  }
  if (params.main.rows != params.subs.size()) {
    throw std::invalid_argument("router params: main router has " +
                                std::to_string(params.main.rows) + " rows for " +
                                std::to_string(params.subs.size()) + " sub-routers");
  }
  if (params.main.cols != params.subs[0].cols) {
    throw std::invalid_argument("router params: main router input dim " +
                                std::to_string(params.main.cols) + " != sub-router input dim " +
                                std::to_string(params.subs[0].cols));
  }
}

TopkResult topk_renormalize(const Vector& p, std::size_t k) {
  if (k < 1 || k > p.size()) {
    throw std::invalid_argument("topk_renormalize: k=" + std::to_string(k) +
                                " out of range for " + std::to_string(p.size()) + " entries");
  }
  double s = kernels::sum(p.data(), p.size());
  if (std::abs(s - 1.0) > 1e-6) {
    throw std::invalid_argument("topk_renormalize: input sums to " + std::to_string(s) +
                                ", not a probability vector");
  }
  return renormalize_over(p.data(), top_k_indices(p, k));
}

RoutingCache single_route_cached(const Matrix& w_r, const Vector& x, std::size_t k,
                                 double temperature, std::uint64_t params_revision,
                                 const SelectionOverride* force) {
  RoutingCache cache;
  cache.input = x;
  cache.temperature = temperature;
  cache.params_revision = params_revision;

  Vector p = matvec(w_r, x);
  softmax_inplace(p.data(), p.size(), temperature);
  if (k < 1 || k > p.size()) {
    throw std::invalid_argument("single_route: k=" + std::to_string(k) + " out of range for " +
                                std::to_string(p.size()) + " experts");
  }
  TopkResult tk = select_topk(p, k, force ? &force->expert_ids : nullptr);

  cache.main_probs = {1.0};
  cache.router_selected = {0};
  cache.decision.full_dist = p;
  cache.decision.selected = std::move(tk.ids);
  cache.decision.weights = std::move(tk.weights);
  cache.decision.router_weights = {1.0};
  cache.sub_probs.push_back(std::move(p));
  return cache;
}

RoutingDecision single_route(const Matrix& w_r, const Vector& x, std::size_t k,
                             double temperature) {
  return single_route_cached(w_r, x, k, temperature, 0).decision;
}

Vector main_router_weights(const Matrix& main, const Vector& x, std::size_t k_routers,
                           double temperature) {
  Vector q = matvec(main, x);
  softmax_inplace(q.data(), q.size(), temperature);
  if (k_routers < 1 || k_routers > q.size()) {
    throw std::invalid_argument("main_router_weights: k_routers=" + std::to_string(k_routers) +
                                " out of range for " + std::to_string(q.size()) + " sub-routers");
  }
  TopkResult tk = renormalize_over(q.data(), top_k_indices(q, k_routers));
  Vector dense(q.size(), 0.0);
  for (std::size_t i = 0; i < tk.ids.size(); ++i) dense[tk.ids[i]] = tk.weights[i];
  return dense;
}

RoutingCache mor_route_cached(const RouterParams& params, const Vector& x,
                              std::size_t k_experts, std::size_t k_routers,
                              double temperature, std::uint64_t params_revision,
                              const SelectionOverride* force) {
  validate(params);
  const std::size_t n_routers = params.n_routers();
  const std::size_t n_experts = params.n_experts();
  if (k_experts < 1 || k_experts > n_experts) {
    throw std::invalid_argument("mor_route: k_experts=" + std::to_string(k_experts) +
                                " out of range for " + std::to_string(n_experts) + " experts");
  }
  if (k_routers < 1 || k_routers > n_routers) {
    throw std::invalid_argument("mor_route: k_routers=" + std::to_string(k_routers) +
                                " out of range for " + std::to_string(n_routers) +
                                " sub-routers");
  }

  RoutingCache cache;
  cache.input = x;
  cache.temperature = temperature;
  cache.params_revision = params_revision;

  Vector q = matvec(params.main, x);
  softmax_inplace(q.data(), q.size(), temperature);
  TopkResult rsel = select_topk(q, k_routers, force ? &force->router_ids : nullptr);
  cache.main_probs = std::move(q);
  cache.router_selected = rsel.ids;

  Vector rho(n_routers, 0.0);
  for (std::size_t i = 0; i < rsel.ids.size(); ++i) rho[rsel.ids[i]] = rsel.weights[i];

  // only retained sub-routers are evaluated; dropped ones stay empty
  cache.sub_probs.assign(n_routers, Vector{});
  Vector full(n_experts, 0.0);
  for (std::size_t s : cache.router_selected) {
    Vector p = matvec(params.subs[s], x);
    softmax_inplace(p.data(), p.size(), temperature);
    kernels::axpy(rho[s], p.data(), full.data(), n_experts);
    cache.sub_probs[s] = std::move(p);
  }

  TopkResult tk = select_topk(full, k_experts, force ? &force->expert_ids : nullptr);
  cache.decision.selected = std::move(tk.ids);
  cache.decision.weights = std::move(tk.weights);
  cache.decision.full_dist = std::move(full);
  cache.decision.router_weights = std::move(rho);
  return cache;
}

RoutingDecision mor_route(const RouterParams& params, const Vector& x,
                          std::size_t k_experts, std::size_t k_routers,
                          double temperature) {
  return mor_route_cached(params, x, k_experts, k_routers, temperature, 0).decision;
}

RoutingGrads routing_grads(const RouterParams& params, const RoutingCache& cache,
                           const RoutingUpstream& upstream,
                           std::uint64_t current_revision) {
  if (cache.params_revision != current_revision) {
    throw std::runtime_error("routing_grads: stale cache (captured revision " +
                             std::to_string(cache.params_revision) + ", parameters at " +
                             std::to_string(current_revision) + ")");
  }
  validate(params);
  const std::size_t n_routers = params.n_routers();
  const std::size_t n_experts = params.n_experts();
  const std::size_t d_in = params.subs[0].cols;
  if (cache.main_probs.size() != n_routers ||
      cache.decision.full_dist.size() != n_experts || cache.input.size() != d_in) {
    throw std::runtime_error("routing_grads: cache does not match these parameters");
  }

  const std::size_t k = cache.decision.selected.size();
  const Vector* gw = nonempty_or_null(upstream.on_weights, k, "on_weights");
  const Vector* gf = nonempty_or_null(upstream.on_full_dist, n_experts, "on_full_dist");
  const Vector* gr = nonempty_or_null(upstream.on_router_weights, n_routers,
                                      "on_router_weights");

  RoutingGrads grads;
  grads.d_main = Matrix(params.main.rows, params.main.cols);
  grads.d_subs.reserve(n_routers);
  for (const Matrix& sub : params.subs) grads.d_subs.emplace_back(sub.rows, sub.cols);
  grads.d_x.assign(d_in, 0.0);

  // weights = full_dist[selected] / sum(full_dist[selected])
  Vector d_full(n_experts, 0.0);
  if (gw) {
    double mass = 0.0;
    for (std::size_t id : cache.decision.selected) mass += cache.decision.full_dist[id];
    double mixed = kernels::dot(gw->data(), cache.decision.weights.data(), k);
    for (std::size_t i = 0; i < k; ++i) {
      d_full[cache.decision.selected[i]] += ((*gw)[i] - mixed) / mass;
    }
  }
  if (gf) kernels::axpy(1.0, gf->data(), d_full.data(), n_experts);

  // full_dist = sum over retained s of rho_s * sub_probs[s]
  Vector d_rho(n_routers, 0.0);
  if (gr) {
    for (std::size_t s : cache.router_selected) d_rho[s] += (*gr)[s];
  }
  Vector dp, dz;
  for (std::size_t s : cache.router_selected) {
    const Vector& ps = cache.sub_probs[s];
    double rho_s = cache.decision.router_weights[s];
    d_rho[s] += kernels::dot(d_full.data(), ps.data(), n_experts);
    dp.assign(n_experts, 0.0);
    kernels::axpy(rho_s, d_full.data(), dp.data(), n_experts);
    softmax_backward(ps, dp, cache.temperature, dz);
    kernels::outer_accum(1.0, dz.data(), n_experts, cache.input.data(), d_in,
                         grads.d_subs[s].data.data());
    kernels::matvec_t_accum(params.subs[s].data.data(), n_experts, d_in, dz.data(),
                            grads.d_x.data());
  }

  // rho = topk-renormalized main_probs; dropped routers are frozen zeros
  double mass_q = 0.0;
  double mixed_r = 0.0;
  for (std::size_t s : cache.router_selected) {
    mass_q += cache.main_probs[s];
    mixed_r += d_rho[s] * cache.decision.router_weights[s];
  }
  Vector d_q(n_routers, 0.0);
  for (std::size_t s : cache.router_selected) {
    d_q[s] = (d_rho[s] - mixed_r) / mass_q;
  }
  softmax_backward(cache.main_probs, d_q, cache.temperature, dz);
  kernels::outer_accum(1.0, dz.data(), n_routers, cache.input.data(), d_in,
                       grads.d_main.data.data());
  kernels::matvec_t_accum(params.main.data.data(), n_routers, d_in, dz.data(),
                          grads.d_x.data());
  return grads;
}

}  // namespace mor

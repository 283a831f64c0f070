// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "doctest.h"

using mor::Matrix;
using mor::RouterParams;
using mor::RoutingCache;
using mor::RoutingDecision;
using mor::RoutingUpstream;
using mor::Rng;
using mor::SelectionOverride;
using mor::Vector;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = scale * rng.gaussian();
  return m;
}

Vector random_vec(Rng& rng, std::size_t n) {
  Vector v(n);
  for (double& x : v) x = rng.gaussian();
  return v;
}

RouterParams random_params(Rng& rng, std::size_t n_routers, std::size_t n_experts,
                           std::size_t d_in) {
  RouterParams p;
  p.main = random_matrix(rng, n_routers, d_in);
  for (std::size_t s = 0; s < n_routers; ++s) {
    p.subs.push_back(random_matrix(rng, n_experts, d_in));
  }
  return p;
}

double vec_max_diff(const Vector& a, const Vector& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// gradient-check ratio with a floor so near-zero coordinates stay meaningful
double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

// linear probe of the routing outputs; its gradient w.r.t. each output block
// is exactly the coefficient vector, which doubles as the upstream signal
double probe_loss(const RoutingDecision& d, const Vector& cw, const Vector& cf,
                  const Vector& cr) {
  double loss = 0.0;
  for (std::size_t i = 0; i < d.weights.size(); ++i) loss += cw[i] * d.weights[i];
  for (std::size_t j = 0; j < d.full_dist.size(); ++j) loss += cf[j] * d.full_dist[j];
  for (std::size_t s = 0; s < d.router_weights.size(); ++s) loss += cr[s] * d.router_weights[s];
  return loss;
}

}  // namespace

TEST_CASE("topk_renormalize fixed points and validation") {
  auto r = mor::topk_renormalize({0.5, 0.3, 0.2}, 2);
  CHECK(r.ids == std::vector<std::size_t>{0, 1});
  CHECK(r.weights[0] == doctest::Approx(0.625).epsilon(1e-14));
  CHECK(r.weights[1] == doctest::Approx(0.375).epsilon(1e-14));

  Vector p = {0.4, 0.1, 0.25, 0.25};
  auto full = mor::topk_renormalize(p, 4);
  for (std::size_t i = 0; i < full.ids.size(); ++i) {
    CHECK(full.weights[i] == doctest::Approx(p[full.ids[i]]).epsilon(1e-15));
  }

  auto hot = mor::topk_renormalize({0.0, 1.0, 0.0}, 1);
  CHECK(hot.ids == std::vector<std::size_t>{1});
  CHECK(hot.weights[0] == 1.0);

  CHECK_THROWS_AS(mor::topk_renormalize(p, 0), std::invalid_argument);
  CHECK_THROWS_AS(mor::topk_renormalize(p, 5), std::invalid_argument);
  CHECK_THROWS_AS(mor::topk_renormalize({0.5, 0.6}, 1), std::invalid_argument);
}

TEST_CASE("topk_renormalize is idempotent in dense form") {
  Rng rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    std::size_t n = 2 + rng.next_below(8);
    std::size_t k = 1 + rng.next_below(n);
    Vector p = mor::softmax(random_vec(rng, n));
    auto once = mor::topk_renormalize(p, k);
    Vector dense(n, 0.0);
    for (std::size_t i = 0; i < k; ++i) dense[once.ids[i]] = once.weights[i];
    auto twice = mor::topk_renormalize(dense, k);
    CHECK(twice.ids == once.ids);
    CHECK(vec_max_diff(twice.weights, once.weights) <= 1e-15);
  }
}

TEST_CASE("single_route on zero logits follows the uniform tie-break") {
  Matrix w(4, 3);
  Vector x = {1.0, -2.0, 0.5};

  RoutingDecision full = mor::single_route(w, x, 4);
  CHECK(full.selected == std::vector<std::size_t>{0, 1, 2, 3});
  for (double wi : full.weights) CHECK(wi == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(full.router_weights == Vector{1.0});

  RoutingDecision two = mor::single_route(w, x, 2);
  CHECK(two.selected == std::vector<std::size_t>{0, 1});
  CHECK(two.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(two.weights[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("single_route equals the composed softmax and top-k oracle") {
  Rng rng(22);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t n = 2 + rng.next_below(8);
    std::size_t d = 1 + rng.next_below(8);
    std::size_t k = 1 + rng.next_below(n);
    Matrix w = random_matrix(rng, n, d);
    Vector x = random_vec(rng, d);

    RoutingDecision got = mor::single_route(w, x, k);

    Vector p = mor::softmax(mor::matvec(w, x));
    auto ids = mor::top_k_indices(p, k);
    double s = 0.0;
    for (std::size_t id : ids) s += p[id];
    CHECK(got.selected == ids);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(got.weights[i] - p[ids[i]] / s) <= 1e-15);
    }
    CHECK(vec_max_diff(got.full_dist, p) == 0.0);
  }
}

TEST_CASE("main_router_weights matches the renormalized softmax oracle") {
  Rng rng(23);

  Matrix solo = random_matrix(rng, 1, 5);
  for (int rep = 0; rep < 20; ++rep) {
    Vector w = mor::main_router_weights(solo, random_vec(rng, 5), 1);
    CHECK(w == Vector{1.0});
  }

  Matrix zero(2, 4);
  Vector w2 = mor::main_router_weights(zero, random_vec(rng, 4), 2);
  CHECK(w2[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w2[1] == doctest::Approx(0.5).epsilon(1e-15));

  for (int rep = 0; rep < 200; ++rep) {
    std::size_t r = 2 + rng.next_below(4);
    std::size_t d = 1 + rng.next_below(6);
    std::size_t k = 1 + rng.next_below(r);
    Matrix main = random_matrix(rng, r, d);
    Vector x = random_vec(rng, d);

    Vector got = mor::main_router_weights(main, x, k);

    Vector q = mor::softmax(mor::matvec(main, x));
    auto ids = mor::top_k_indices(q, k);
    double s = 0.0;
    for (std::size_t id : ids) s += q[id];
    Vector want(r, 0.0);
    for (std::size_t id : ids) want[id] = q[id] / s;
    CHECK(vec_max_diff(got, want) <= 1e-12);
    double total = std::accumulate(got.begin(), got.end(), 0.0);
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("mor_route with one sub-router reduces to single_route") {
  Rng rng(24);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t n = 2 + rng.next_below(8);
    std::size_t d = 1 + rng.next_below(8);
    std::size_t k = 1 + rng.next_below(n);
    RouterParams params = random_params(rng, 1, n, d);
    Vector x = random_vec(rng, d);

    RoutingDecision a = mor::mor_route(params, x, k, 1);
    RoutingDecision b = mor::single_route(params.subs[0], x, k);
    CHECK(a.selected == b.selected);
    CHECK(vec_max_diff(a.weights, b.weights) <= 1e-12);
    CHECK(vec_max_diff(a.full_dist, b.full_dist) <= 1e-12);
    CHECK(a.router_weights == Vector{1.0});
  }
}

TEST_CASE("mor_route blends opposing sub-routers into the expected mixture") {
  // main router is indifferent; sub-routers put ~all mass on experts 0 and 1
  std::size_t d = 3;
  RouterParams params;
  params.main = Matrix(2, d);
  Matrix sub0(2, d), sub1(2, d);
  Vector x = {1.0, 0.0, 0.0};
  sub0.at(0, 0) = 40.0;   // logits [40, 0] -> p ~ [1, 0]
  sub1.at(1, 0) = 40.0;   // logits [0, 40] -> p ~ [0, 1]
  params.subs = {sub0, sub1};

  RoutingDecision got = mor::mor_route(params, x, 2, 2);
  CHECK(std::abs(got.router_weights[0] - 0.5) <= 1e-15);
  CHECK(std::abs(got.router_weights[1] - 0.5) <= 1e-15);
  CHECK(std::abs(got.full_dist[0] - 0.5) <= 1e-12);
  CHECK(std::abs(got.full_dist[1] - 0.5) <= 1e-12);
}

TEST_CASE("mor_route matches the dense aggregation oracle") {
  Rng rng(25);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t n = 2 + rng.next_below(8);
    std::size_t d = 1 + rng.next_below(8);
    std::size_t r = 2 + rng.next_below(3);
    std::size_t k = 1 + rng.next_below(n);
    std::size_t kr = 1 + rng.next_below(r);
    RouterParams params = random_params(rng, r, n, d);
    Vector x = random_vec(rng, d);

    RoutingDecision got = mor::mor_route(params, x, k, kr);

    Vector rho = mor::main_router_weights(params.main, x, kr);
    Vector f(n, 0.0);
    for (std::size_t s = 0; s < r; ++s) {
      if (rho[s] == 0.0) continue;
      Vector p = mor::softmax(mor::matvec(params.subs[s], x));
      for (std::size_t j = 0; j < n; ++j) f[j] += rho[s] * p[j];
    }
    auto ids = mor::top_k_indices(f, k);
    double s_sel = 0.0;
    for (std::size_t id : ids) s_sel += f[id];

    CHECK(got.selected == ids);
    CHECK(vec_max_diff(got.full_dist, f) <= 1e-12);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(got.weights[i] - f[ids[i]] / s_sel) <= 1e-12);
    }
  }
}

TEST_CASE("routing decisions satisfy the normalization invariants") {
  Rng rng(26);
  for (int rep = 0; rep < 500; ++rep) {
    std::size_t n = 1 + rng.next_below(12);
    std::size_t d = 1 + rng.next_below(10);
    std::size_t r = 1 + rng.next_below(5);
    std::size_t k = 1 + rng.next_below(n);
    std::size_t kr = 1 + rng.next_below(r);
    RouterParams params = random_params(rng, r, n, d);
    Vector x = random_vec(rng, d);

    RoutingDecision dec = (rep % 2 == 0)
                              ? mor::mor_route(params, x, k, kr)
                              : mor::single_route(params.subs[0], x, k);

    CHECK(dec.selected.size() == k);
    CHECK(dec.weights.size() == k);
    double wsum = std::accumulate(dec.weights.begin(), dec.weights.end(), 0.0);
    CHECK(std::abs(wsum - 1.0) <= 1e-9);
    for (double w : dec.weights) CHECK(w > 0.0);

    std::vector<std::size_t> sorted = dec.selected;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK(sorted.back() < n);

    double fsum = std::accumulate(dec.full_dist.begin(), dec.full_dist.end(), 0.0);
    CHECK(std::abs(fsum - 1.0) <= 1e-10);
    for (double p : dec.full_dist) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("permuting sub-routers with main rows leaves the decision unchanged") {
  Rng rng(27);
  for (int rep = 0; rep < 100; ++rep) {
    std::size_t n = 2 + rng.next_below(6);
    std::size_t d = 1 + rng.next_below(6);
    std::size_t r = 2 + rng.next_below(3);
    std::size_t k = 1 + rng.next_below(n);
    RouterParams params = random_params(rng, r, n, d);
    Vector x = random_vec(rng, d);

    std::vector<std::size_t> perm(r);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = r; i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.next_below(i)]);
    }

    RouterParams shuffled;
    shuffled.main = Matrix(r, d);
    shuffled.subs.resize(r);
    for (std::size_t s = 0; s < r; ++s) {
      shuffled.subs[s] = params.subs[perm[s]];
      for (std::size_t c = 0; c < d; ++c) {
        shuffled.main.at(s, c) = params.main.at(perm[s], c);
      }
    }

    RoutingDecision a = mor::mor_route(params, x, k, r);
    RoutingDecision b = mor::mor_route(shuffled, x, k, r);
    CHECK(a.selected == b.selected);
    CHECK(vec_max_diff(a.weights, b.weights) <= 1e-12);
    CHECK(vec_max_diff(a.full_dist, b.full_dist) <= 1e-12);
    for (std::size_t s = 0; s < r; ++s) {
      CHECK(std::abs(a.router_weights[perm[s]] - b.router_weights[s]) <= 1e-12);
    }
  }
}

TEST_CASE("zero routers ignore the input scale") {
  RouterParams params;
  params.main = Matrix(2, 4);
  params.subs = {Matrix(5, 4), Matrix(5, 4)};
  Rng rng(28);
  for (int rep = 0; rep < 50; ++rep) {
    Vector x = random_vec(rng, 4);
    Vector big = x;
    for (double& v : big) v *= 10.0;
    RoutingDecision a = mor::mor_route(params, x, 2, 2);
    RoutingDecision b = mor::mor_route(params, big, 2, 2);
    CHECK(a.selected == b.selected);
    CHECK(a.selected == std::vector<std::size_t>{0, 1});
    CHECK(a.weights == b.weights);
  }
}

TEST_CASE("routing_grads: zero upstream gives zero gradients") {
  Rng rng(29);
  RouterParams params = random_params(rng, 3, 5, 4);
  Vector x = random_vec(rng, 4);
  RoutingCache cache = mor::mor_route_cached(params, x, 2, 2, 1.0, 7);

  RoutingUpstream up;  // all empty = zero
  auto g = mor::routing_grads(params, cache, up, 7);
  for (double v : g.d_main.data) CHECK(v == 0.0);
  for (const Matrix& m : g.d_subs) {
    for (double v : m.data) CHECK(v == 0.0);
  }
  for (double v : g.d_x) CHECK(v == 0.0);
}

TEST_CASE("routing_grads: single-router main gradient is exactly zero") {
  Rng rng(30);
  RouterParams params = random_params(rng, 1, 6, 5);
  Vector x = random_vec(rng, 5);
  RoutingCache cache = mor::single_route_cached(params.subs[0], x, 2, 1.0, 0);

  RoutingUpstream up;
  up.on_weights = random_vec(rng, 2);
  up.on_full_dist = random_vec(rng, 6);
  up.on_router_weights = random_vec(rng, 1);
  auto g = mor::routing_grads(params, cache, up, 0);
  for (double v : g.d_main.data) CHECK(v == 0.0);
  bool any = false;
  for (double v : g.d_subs[0].data) any = any || v != 0.0;
  CHECK(any);
}

TEST_CASE("routing_grads rejects stale caches and mismatched shapes") {
  Rng rng(31);
  RouterParams params = random_params(rng, 2, 4, 3);
  Vector x = random_vec(rng, 3);
  RoutingCache cache = mor::mor_route_cached(params, x, 2, 2, 1.0, 5);

  RoutingUpstream up;
  up.on_weights = {1.0, -1.0};
  CHECK_NOTHROW(mor::routing_grads(params, cache, up, 5));
  CHECK_THROWS_AS(mor::routing_grads(params, cache, up, 6), std::runtime_error);

  RouterParams other = random_params(rng, 3, 4, 3);
  CHECK_THROWS_AS(mor::routing_grads(other, cache, up, 5), std::runtime_error);
}

TEST_CASE("routing_grads matches finite differences on the retained path") {
  Rng rng(32);
  const double eps = 1e-5;
  int checked = 0;
  for (int rep = 0; rep < 25; ++rep) {
    std::size_t n = 2 + rng.next_below(5);
    std::size_t d = 1 + rng.next_below(7);
    std::size_t r = 1 + rng.next_below(3);
    std::size_t k = 1 + rng.next_below(n);
    std::size_t kr = 1 + rng.next_below(r);
    RouterParams params = random_params(rng, r, n, d);
    Vector x = random_vec(rng, d);

    RoutingCache base = mor::mor_route_cached(params, x, k, kr, 1.0, 0);
    SelectionOverride frozen{base.decision.selected, base.router_selected};

    Vector cw = random_vec(rng, k);
    Vector cf = random_vec(rng, n);
    Vector cr = random_vec(rng, r);
    RoutingUpstream up{cw, cf, cr};
    auto analytic = mor::routing_grads(params, base, up, 0);

    auto loss_at = [&]() {
      RoutingDecision dec =
          mor::mor_route_cached(params, x, k, kr, 1.0, 0, &frozen).decision;
      return probe_loss(dec, cw, cf, cr);
    };

    auto check_matrix = [&](Matrix& m, const Matrix& dm) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        double saved = m.data[i];
        m.data[i] = saved + eps;
        double up_val = loss_at();
        m.data[i] = saved - eps;
        double down = loss_at();
        m.data[i] = saved;
        double numeric = (up_val - down) / (2.0 * eps);
        CHECK(rel_err(dm.data[i], numeric) <= 1e-6);
        ++checked;
      }
    };

    check_matrix(params.main, analytic.d_main);
    for (std::size_t s = 0; s < r; ++s) check_matrix(params.subs[s], analytic.d_subs[s]);

    for (std::size_t i = 0; i < d; ++i) {
      double saved = x[i];
      x[i] = saved + eps;
      double up_val = loss_at();
      x[i] = saved - eps;
      double down = loss_at();
      x[i] = saved;
      double numeric = (up_val - down) / (2.0 * eps);
      CHECK(rel_err(analytic.d_x[i], numeric) <= 1e-6);
      ++checked;
    }
  }
  CHECK(checked > 500);
}

// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/lora.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"

using mor::LoraExpert;
using mor::LoraExpertBank;
using mor::Matrix;
using mor::RoutingDecision;
using mor::Rng;
using mor::Vector;

namespace {

Vector random_vec(Rng& rng, std::size_t n) {
  Vector v(n);
  for (double& x : v) x = rng.gaussian();
  return v;
}

void randomize(Matrix& m, Rng& rng) {
  for (double& v : m.data) v = rng.gaussian();
}

// dense (B*A)x product, triple loops only
Vector naive_expert(const LoraExpert& e, const Vector& x) {
  std::size_t rank = e.a.rows, d_in = e.a.cols, d_out = e.b.rows;
  Matrix ba(d_out, d_in);
  for (std::size_t i = 0; i < d_out; ++i) {
    for (std::size_t j = 0; j < d_in; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < rank; ++r) s += e.b.at(i, r) * e.a.at(r, j);
      ba.at(i, j) = s;
    }
  }
  Vector y(d_out, 0.0);
  for (std::size_t i = 0; i < d_out; ++i) {
    for (std::size_t j = 0; j < d_in; ++j) y[i] += ba.at(i, j) * x[j];
    y[i] *= e.scaling;
  }
  return y;
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

double max_abs_diff(const Vector& a, const Vector& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("fresh bank is inert and construction is validated") {
  Rng rng(41);
  LoraExpertBank bank = mor::make_bank(3, 5, 4, 2, 16.0, rng);
  CHECK(bank.n() == 3);
  CHECK(bank.experts[0].scaling == 8.0);
  for (int rep = 0; rep < 10; ++rep) {
    Vector y = mor::expert_forward(bank, rng.next_below(3), random_vec(rng, 5));
    for (double v : y) CHECK(v == 0.0);
  }

  CHECK_THROWS_AS(mor::make_bank(0, 5, 4, 2, 16.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(mor::make_bank(2, 5, 4, 0, 16.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(mor::make_bank(2, 5, 4, 5, 16.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(mor::expert_forward(bank, 3, random_vec(rng, 5)), std::invalid_argument);
  CHECK_THROWS_AS(mor::expert_forward(bank, 0, random_vec(rng, 4)), std::invalid_argument);
}

TEST_CASE("identity adapter returns its input") {
  std::size_t d = 4;
  Rng rng(42);
  LoraExpertBank bank = mor::make_bank(1, d, d, d, double(d), rng);
  bank.experts[0].a = mor::identity(d);
  bank.experts[0].b = mor::identity(d);
  bank.experts[0].scaling = 1.0;
  Vector x = random_vec(rng, d);
  CHECK(mor::expert_forward(bank, 0, x) == x);
}

TEST_CASE("expert_forward matches the dense low-rank oracle") {
  Rng rng(43);
  for (int rep = 0; rep < 100; ++rep) {
    LoraExpertBank bank = mor::make_bank(2, 4, 4, 2, 8.0, rng);
    for (auto& e : bank.experts) {
      randomize(e.a, rng);
      randomize(e.b, rng);
    }
    Vector x = random_vec(rng, 4);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(max_abs_diff(mor::expert_forward(bank, i, x),
                         naive_expert(bank.experts[i], x)) <= 1e-12);
    }
  }
}

TEST_CASE("weighted_expert_delta special cases") {
  Rng rng(44);
  LoraExpertBank bank = mor::make_bank(3, 5, 5, 2, 16.0, rng);
  for (auto& e : bank.experts) {
    randomize(e.a, rng);
    randomize(e.b, rng);
  }
  bank.experts[1] = bank.experts[0];  // identical pair
  Vector x = random_vec(rng, 5);

  RoutingDecision solo;
  solo.selected = {2};
  solo.weights = {1.0};
  CHECK(mor::weighted_expert_delta(bank, solo, x) == mor::expert_forward(bank, 2, x));

  RoutingDecision pair;
  pair.selected = {0, 1};
  pair.weights = {0.5, 0.5};
  CHECK(max_abs_diff(mor::weighted_expert_delta(bank, pair, x),
                     mor::expert_forward(bank, 0, x)) <= 1e-15);

  RoutingDecision bad;
  bad.selected = {0, 1};
  bad.weights = {0.6, 0.6};
  CHECK_THROWS_AS(mor::weighted_expert_delta(bank, bad, x), std::invalid_argument);
}

TEST_CASE("weighted_expert_delta matches the dense weighted sum oracle") {
  Rng rng(45);
  for (int rep = 0; rep < 100; ++rep) {
    LoraExpertBank bank = mor::make_bank(3, 6, 4, 3, 6.0, rng);
    for (auto& e : bank.experts) {
      randomize(e.a, rng);
      randomize(e.b, rng);
    }
    Vector x = random_vec(rng, 6);
    RoutingDecision dec;
    dec.selected = {0, 1, 2};
    dec.weights = {0.5, 0.3, 0.2};

    Vector want(4, 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
      Vector y = naive_expert(bank.experts[j], x);
      for (std::size_t i = 0; i < 4; ++i) want[i] += dec.weights[j] * y[i];
    }
    CHECK(max_abs_diff(mor::weighted_expert_delta(bank, dec, x), want) <= 1e-12);
  }
}

TEST_CASE("weighted_expert_delta is linear in the weights") {
  Rng rng(46);
  LoraExpertBank bank = mor::make_bank(4, 5, 5, 2, 16.0, rng);
  for (auto& e : bank.experts) {
    randomize(e.a, rng);
    randomize(e.b, rng);
  }
  for (int rep = 0; rep < 50; ++rep) {
    Vector x = random_vec(rng, 5);
    Vector u = mor::softmax(random_vec(rng, 3));
    Vector v = mor::softmax(random_vec(rng, 3));
    RoutingDecision du{{0, 1, 2}, u, {}, {}};
    RoutingDecision dv{{0, 1, 2}, v, {}, {}};
    Vector mixw(3);
    for (int i = 0; i < 3; ++i) mixw[i] = 0.5 * u[i] + 0.5 * v[i];
    RoutingDecision dm{{0, 1, 2}, mixw, {}, {}};

    Vector lhs = mor::weighted_expert_delta(bank, dm, x);
    Vector a = mor::weighted_expert_delta(bank, du, x);
    Vector b = mor::weighted_expert_delta(bank, dv, x);
    Vector rhs(5);
    for (int i = 0; i < 5; ++i) rhs[i] = 0.5 * a[i] + 0.5 * b[i];
    CHECK(max_abs_diff(lhs, rhs) <= 1e-10);
  }
}

TEST_CASE("sparse evaluation equals dense evaluation with zeroed weights") {
  Rng rng(47);
  LoraExpertBank bank = mor::make_bank(5, 4, 4, 2, 16.0, rng);
  for (auto& e : bank.experts) {
    randomize(e.a, rng);
    randomize(e.b, rng);
  }
  for (int rep = 0; rep < 50; ++rep) {
    Vector x = random_vec(rng, 4);
    RoutingDecision sparse;
    sparse.selected = {1, 3};
    sparse.weights = {0.7, 0.3};
    RoutingDecision dense;
    dense.selected = {0, 1, 2, 3, 4};
    dense.weights = {0.0, 0.7, 0.0, 0.3, 0.0};
    CHECK(mor::weighted_expert_delta(bank, sparse, x) ==
          mor::weighted_expert_delta(bank, dense, x));
  }
}

TEST_CASE("expert gradients: trivial cases") {
  Rng rng(48);
  LoraExpertBank bank = mor::make_bank(1, 4, 3, 2, 4.0, rng);
  Vector x = random_vec(rng, 4);

  auto zero_up = mor::expert_param_grads(bank, 0, x, Vector(3, 0.0));
  for (double v : zero_up.d_a.data) CHECK(v == 0.0);
  for (double v : zero_up.d_b.data) CHECK(v == 0.0);

  // with B still zero: dA = 0 and dB = scaling * upstream (Ax)^T
  Vector up = random_vec(rng, 3);
  auto g = mor::expert_param_grads(bank, 0, x, up);
  for (double v : g.d_a.data) CHECK(v == 0.0);
  const LoraExpert& e = bank.experts[0];
  Vector ax(2, 0.0);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 4; ++j) ax[r] += e.a.at(r, j) * x[j];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(g.d_b.at(i, r) == doctest::Approx(e.scaling * up[i] * ax[r]).epsilon(1e-13));
    }
  }
}

TEST_CASE("expert gradients match central finite differences") {
  Rng rng(49);
  const double eps = 1e-5;
  for (int rep = 0; rep < 100; ++rep) {
    std::size_t d_in = 2 + rng.next_below(5);
    std::size_t d_out = 2 + rng.next_below(5);
    std::size_t rank = 1 + rng.next_below(std::min(d_in, d_out));
    LoraExpertBank bank = mor::make_bank(1, d_in, d_out, rank, 2.0 * double(rank), rng);
    randomize(bank.experts[0].a, rng);
    randomize(bank.experts[0].b, rng);
    Vector x = random_vec(rng, d_in);
    Vector c = random_vec(rng, d_out);  // loss = <c, expert_forward(x)>

    auto loss = [&]() {
      Vector y = mor::expert_forward(bank, 0, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += c[i] * y[i];
      return s;
    };
    auto analytic = mor::expert_param_grads(bank, 0, x, c);

    auto check = [&](Matrix& m, const Matrix& dm) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        double saved = m.data[i];
        m.data[i] = saved + eps;
        double hi = loss();
        m.data[i] = saved - eps;
        double lo = loss();
        m.data[i] = saved;
        CHECK(rel_err(dm.data[i], (hi - lo) / (2.0 * eps)) <= 1e-6);
      }
    };
    check(bank.experts[0].a, analytic.d_a);
    check(bank.experts[0].b, analytic.d_b);

    Vector dx(d_in, 0.0);
    mor::expert_input_grad_accum(bank, 0, c, dx);
    for (std::size_t i = 0; i < d_in; ++i) {
      double saved = x[i];
      x[i] = saved + eps;
      double hi = loss();
      x[i] = saved - eps;
      double lo = loss();
      x[i] = saved;
      CHECK(rel_err(dx[i], (hi - lo) / (2.0 * eps)) <= 1e-6);
    }
  }
}

// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "doctest.h"

using mor::Matrix;
using mor::Rng;
using mor::Vector;

namespace {

// independent triple-loop product, no shared code with the library path
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  }
  return c;
}

std::vector<std::size_t> sorted_prefix_oracle(const Vector& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  idx.resize(k);
  return idx;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(-2.0, 2.0);
  return m;
}

bool matrices_close(const Matrix& a, const Matrix& b, double tol) {
  if (a.rows != b.rows || a.cols != b.cols) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a.data[i] - b.data[i]) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("matmul identity and zero cases") {
  Rng rng(11);
  Matrix m = random_matrix(rng, 3, 3);
  CHECK(mor::matmul(mor::identity(3), m) == m);
  CHECK(mor::matmul(m, mor::identity(3)) == m);

  Matrix z = mor::zeros(2, 3);
  Matrix r = random_matrix(rng, 3, 4);
  Matrix out = mor::matmul(z, r);
  CHECK(out.rows == 2);
  CHECK(out.cols == 4);
  CHECK(std::all_of(out.data.begin(), out.data.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("matmul hand example and oracle agreement on random shapes") {
  Matrix a(2, 2);
  a.data = {1, 2, 3, 4};
  Matrix b(2, 1);
  b.data = {1, 1};
  Matrix c = mor::matmul(a, b);
  CHECK(c.data == std::vector<double>{3, 7});

  Rng rng(12);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t m = 1 + rng.next_below(8);
    std::size_t k = 1 + rng.next_below(8);
    std::size_t n = 1 + rng.next_below(8);
    Matrix x = random_matrix(rng, m, k);
    Matrix y = random_matrix(rng, k, n);
    CHECK(matrices_close(mor::matmul(x, y), naive_matmul(x, y), 1e-12));
  }

  CHECK_THROWS_AS(mor::matmul(random_matrix(rng, 2, 3), random_matrix(rng, 2, 3)),
                  std::invalid_argument);
}

TEST_CASE("softmax fixed points") {
  Vector u = mor::softmax({0, 0, 0, 0});
  for (double v : u) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));

  Vector w = mor::softmax({0.0, std::log(3.0)});
  CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(w[1] == doctest::Approx(0.75).epsilon(1e-13));

  Vector big = mor::softmax({1000.0, 0.0});
  CHECK(mor::all_finite(big));
  CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(big[1] <= 1e-300);

  CHECK_THROWS_AS(mor::softmax({}), std::invalid_argument);
  CHECK_THROWS_AS(mor::softmax({1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mor::softmax({1.0}, -1.0), std::invalid_argument);
}

TEST_CASE("softmax temperature sharpens and flattens") {
  Vector v = {1.0, 2.0, 3.0};
  Vector cold = mor::softmax(v, 0.25);
  Vector base = mor::softmax(v, 1.0);
  Vector hot = mor::softmax(v, 10.0);
  CHECK(cold[2] > base[2]);
  CHECK(hot[2] < base[2]);
  // T scaling equals dividing the logits up front
  Vector scaled = mor::softmax({4.0, 8.0, 12.0}, 1.0);
  Vector viaT = mor::softmax(v, 0.25);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(viaT[i] == doctest::Approx(scaled[i]).epsilon(1e-13));
  }
}

TEST_CASE("softmax sums to one, stays in (0,1], and is shift invariant") {
  Rng rng(13);
  for (int rep = 0; rep < 500; ++rep) {
    std::size_t n = 1 + rng.next_below(12);
    Vector v(n);
    for (double& x : v) x = rng.uniform(-30.0, 30.0);
    double t = rng.uniform(0.25, 4.0);

    Vector p = mor::softmax(v, t);
    double s = std::accumulate(p.begin(), p.end(), 0.0);
    CHECK(std::abs(s - 1.0) <= 1e-12);
    for (double x : p) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
    }

    double c = rng.uniform(-50.0, 50.0);
    Vector shifted = v;
    for (double& x : shifted) x += c;
    Vector q = mor::softmax(shifted, t);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
  }
}

TEST_CASE("top_k_indices matches full-sort oracle and tie-break rules") {
  CHECK(mor::top_k_indices({0.1, 0.5, 0.4}, 2) == std::vector<std::size_t>{1, 2});
  CHECK(mor::top_k_indices({0.3, 0.3, 0.3}, 1) == std::vector<std::size_t>{0});
  CHECK(mor::top_k_indices({0.3, 0.3, 0.3}, 3) == std::vector<std::size_t>{0, 1, 2});

  Rng rng(14);
  for (int rep = 0; rep < 1000; ++rep) {
    std::size_t n = 1 + rng.next_below(16);
    Vector v(n);
    for (double& x : v) {
      // coarse grid forces frequent ties
      x = 0.125 * double(rng.next_below(8));
    }
    std::size_t k = 1 + rng.next_below(n);
    CHECK(mor::top_k_indices(v, k) == sorted_prefix_oracle(v, k));
  }

  // k == len is a permutation of all indices
  Vector v = {5.0, -1.0, 2.0, 2.0};
  auto all = mor::top_k_indices(v, 4);
  auto sorted = all;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3});

  CHECK_THROWS_AS(mor::top_k_indices(v, 0), std::invalid_argument);
  CHECK_THROWS_AS(mor::top_k_indices(v, 5), std::invalid_argument);
}

TEST_CASE("initializers: zeros exact, kaiming variance and determinism") {
  Matrix z = mor::init_zeros(2, 2);
  CHECK(z.data == std::vector<double>{0, 0, 0, 0});

  Rng a(7), b(7);
  CHECK(mor::init_kaiming(4, 4, a) == mor::init_kaiming(4, 4, b));

  Rng rng(15);
  const std::size_t cols = 10;
  Matrix big = mor::init_kaiming(10000, cols, rng);
  double mean = std::accumulate(big.data.begin(), big.data.end(), 0.0) / double(big.size());
  double var = 0.0;
  for (double v : big.data) var += (v - mean) * (v - mean);
  var /= double(big.size() - 1);
  double want = 2.0 / double(cols);
  CHECK(std::abs(var - want) <= 0.05 * want);
}

TEST_CASE("rng streams are deterministic and splits are distinct") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng parent(42);
  Rng child = parent.split();
  Rng fresh(42);
  fresh.next_u64();  // consume the value the split was derived from
  bool any_diff = false;
  for (int i = 0; i < 16; ++i) {
    if (child.next_u64() != fresh.next_u64()) any_diff = true;
  }
  CHECK(any_diff);

  Rng g(99);
  double m = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) m += g.gaussian();
  CHECK(std::abs(m / n) < 0.02);

  Rng u(100);
  std::vector<int> counts(8, 0);
  for (int i = 0; i < 80000; ++i) counts[u.next_below(8)]++;
  for (int cnt : counts) CHECK(std::abs(cnt - 10000) < 500);
}

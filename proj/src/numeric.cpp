// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mor/kernels.hpp"

namespace mor {

Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

bool all_finite(const Matrix& m) {
  for (double v : m.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool all_finite(const Vector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  // reject the low slice so the modulo is exact
  std::uint64_t cut = (0 - n) % n;  // 2^64 mod n
  std::uint64_t v = next_u64();
  while (v < cut) v = next_u64();
  return v % n;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: shapes " + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " and " + std::to_string(b.rows) +
                                "x" + std::to_string(b.cols) + " do not chain");
  }
  Matrix c(a.rows, b.cols);
  kernels::matmul(a.data.data(), a.rows, a.cols, b.data.data(), b.cols, c.data.data());
  return c;
}

Vector matvec(const Matrix& m, const Vector& x) {
  if (m.cols != x.size()) {
    throw std::invalid_argument("matvec: matrix " + std::to_string(m.rows) + "x" +
                                std::to_string(m.cols) + " against vector of length " +
                                std::to_string(x.size()));
  }
  Vector y(m.rows);
  kernels::matvec(m.data.data(), m.rows, m.cols, x.data(), y.data());
  return y;
}

void softmax_inplace(double* x, std::size_t n, double temperature) {
  if (n == 0) throw std::invalid_argument("softmax: empty input");
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be > 0");
  kernels::softmax(x, n, temperature);
}

Vector softmax(const Vector& v, double temperature) {
  Vector out = v;
  softmax_inplace(out.data(), out.size(), temperature);
  return out;
}

std::vector<std::size_t> top_k_indices(const double* v, std::size_t n, std::size_t k) {
  if (k < 1 || k > n) {
    throw std::invalid_argument("top_k_indices: k=" + std::to_string(k) +
                                " out of range for length " + std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto better = [v](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> top_k_indices(const Vector& v, std::size_t k) {
  return top_k_indices(v.data(), v.size(), k);
}

Matrix init_kaiming(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("init_kaiming: zero dimension");
  Matrix m(rows, cols);
  double sd = std::sqrt(2.0 / double(cols));
  for (double& v : m.data) v = sd * rng.gaussian();
  return m;
}

Matrix init_zeros(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("init_zeros: zero dimension");
  return Matrix(rows, cols);
}

}  // namespace mor

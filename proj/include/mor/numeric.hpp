// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices, a splittable counter-based RNG, and the
// stochastic/softmax primitives the routing stack is built on. Double
// precision throughout so analytic gradients can be checked against
// central finite differences with headroom.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mor {

using Vector = std::vector<double>;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows * cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }

  bool operator==(const Matrix& o) const = default;
};

Matrix zeros(std::size_t rows, std::size_t cols);
Matrix identity(std::size_t n);
bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

/// SplitMix64: a counter-based generator. Same seed gives the same stream
/// everywhere; split() derives an independent child stream.
struct Rng {
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  Rng split() { return Rng(next_u64()); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

  /// Standard normal via the Marsaglia polar method (second value cached).
  double gaussian();

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// c = a * b. Throws std::invalid_argument with a shape report on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

/// y = m * x.
Vector matvec(const Matrix& m, const Vector& x);

/// Temperature softmax with max-subtraction. Throws on empty input or
/// temperature <= 0. temperature 1 is the plain softmax.
Vector softmax(const Vector& v, double temperature = 1.0);

/// In-place variant on a raw buffer (hot path, no allocation).
void softmax_inplace(double* x, std::size_t n, double temperature = 1.0);

/// Indices of the k largest entries, sorted by descending value and then
/// ascending index; ties keep the lowest index. Throws if k is out of range.
std::vector<std::size_t> top_k_indices(const Vector& v, std::size_t k);
std::vector<std::size_t> top_k_indices(const double* v, std::size_t n, std::size_t k);

/// Entries i.i.d. normal with variance 2/cols.
Matrix init_kaiming(std::size_t rows, std::size_t cols, Rng& rng);
Matrix init_zeros(std::size_t rows, std::size_t cols);

}  // namespace mor

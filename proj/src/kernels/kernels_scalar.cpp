// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. Plain loops, no intrinsics; the SIMD variants are
// equivalence-tested against these.

#include "mor/kernels.hpp"

#include <cmath>
#include <cstring>

namespace mor::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double* x, std::size_t n, double alpha) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void shift_scale_scalar(double* x, std::size_t n, double shift, double factor) {
  for (std::size_t i = 0; i < n; ++i) x[i] = (x[i] + shift) * factor;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double max_value_scalar(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void exp_inplace_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(x[i]);
}

void softmax_scalar(double* x, std::size_t n, double temperature) {
  double m = max_value_scalar(x, n);
  shift_scale_scalar(x, n, -m, 1.0 / temperature);
  exp_inplace_scalar(x, n);
  double s = sum_scalar(x, n);
  scale_scalar(x, n, 1.0 / s);
}

void matvec_scalar(const double* m, std::size_t rows, std::size_t cols,
                   const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = dot_scalar(m + r * cols, x, cols);
  }
}

void matvec_t_accum_scalar(const double* m, std::size_t rows, std::size_t cols,
                           const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_scalar(x[r], m + r * cols, y, cols);
  }
}

void matmul_scalar(const double* a, std::size_t ra, std::size_t ca,
                   const double* b, std::size_t cb, double* c) {
  std::memset(c, 0, ra * cb * sizeof(double));
  for (std::size_t i = 0; i < ra; ++i) {
    for (std::size_t k = 0; k < ca; ++k) {
      axpy_scalar(a[i * ca + k], b + k * cb, c + i * cb, cb);
    }
  }
}

void outer_accum_scalar(double alpha, const double* u, std::size_t m,
                        const double* v, std::size_t n, double* acc) {
  for (std::size_t i = 0; i < m; ++i) {
    axpy_scalar(alpha * u[i], v, acc + i * n, n);
  }
}

}  // namespace

extern const Backend kScalarBackend = {
    dot_scalar,    axpy_scalar,        scale_scalar,  shift_scale_scalar,
    sum_scalar,    max_value_scalar,   exp_inplace_scalar, softmax_scalar,
    matvec_scalar, matvec_t_accum_scalar, matmul_scalar, outer_accum_scalar,
};

}  // namespace mor::kernels

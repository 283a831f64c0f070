// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision inner loops used by the rest of the library.
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The backend is picked at runtime from CPU features and
// can be forced (tests compare the variants against each other).

#pragma once

#include <cstddef>

namespace mor::kernels {

enum class Isa {
  scalar,
  avx2,
};

/// Best instruction set supported by the running CPU.
Isa detect_isa();

/// Backend currently used by all kernel entry points.
Isa active_isa();

/// Force a backend. Throws std::invalid_argument if the CPU lacks it.
void set_isa(Isa isa);

const char* isa_name(Isa isa);

struct Backend;

/// Dispatch table of one backend, independent of the active selection.
/// Throws std::invalid_argument if the backend is unavailable.
const Backend& backend(Isa isa);

/// Table of the backend currently in use. Hot loops hoist this once instead
/// of paying the per-call dispatch of the free functions below.
const Backend& active_backend();

// --- vector kernels ---------------------------------------------------------

double dot(const double* a, const double* b, std::size_t n);

/// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

/// x *= alpha
void scale(double* x, std::size_t n, double alpha);

/// x = (x + shift) * factor
void shift_scale(double* x, std::size_t n, double shift, double factor);

double sum(const double* x, std::size_t n);

/// Maximum entry; n must be >= 1.
double max_value(const double* x, std::size_t n);

/// x[i] = exp(x[i]). The AVX2 variant uses a polynomial approximation
/// accurate to a couple of ulps over the full double range.
void exp_inplace(double* x, std::size_t n);

/// x[i] = exp((x[i] - max x) / t), normalized to sum 1. Bit-identical to
/// composing max_value, shift_scale, exp_inplace, sum and scale; fused into
/// one call because the distributions it feeds are short.
void softmax(double* x, std::size_t n, double temperature);

// --- matrix kernels (row-major storage) -------------------------------------

/// y = M x, M is rows x cols.
void matvec(const double* m, std::size_t rows, std::size_t cols,
            const double* x, double* y);

/// y += M^T x, M is rows x cols, x has rows entries, y has cols entries.
void matvec_t_accum(const double* m, std::size_t rows, std::size_t cols,
                    const double* x, double* y);

/// c = a b, a is ra x ca, b is ca x cb, c is ra x cb (overwritten).
void matmul(const double* a, std::size_t ra, std::size_t ca,
            const double* b, std::size_t cb, double* c);

/// acc += alpha * u v^T, u has m entries, v has n entries, acc is m x n.
void outer_accum(double alpha, const double* u, std::size_t m,
                 const double* v, std::size_t n, double* acc);

// Dispatch table. One instance per backend; selected at runtime.
struct Backend {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double*, std::size_t, double);
  void (*shift_scale)(double*, std::size_t, double, double);
  double (*sum)(const double*, std::size_t);
  double (*max_value)(const double*, std::size_t);
  void (*exp_inplace)(double*, std::size_t);
  void (*softmax)(double*, std::size_t, double);
  void (*matvec)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*matvec_t_accum)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*matmul)(const double*, std::size_t, std::size_t, const double*, std::size_t, double*);
  void (*outer_accum)(double, const double*, std::size_t, const double*, std::size_t, double*);
};

}  // namespace mor::kernels

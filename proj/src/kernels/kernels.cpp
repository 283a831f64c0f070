// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/kernels.hpp"

#include <stdexcept>

namespace mor::kernels {

extern const Backend kScalarBackend;
#if defined(MOR_KERNELS_HAVE_AVX2)
extern const Backend kAvx2Backend;
#endif

namespace {

bool cpu_has_avx2_fma() {
#if defined(MOR_KERNELS_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Backend* backend_for(Isa isa) {
#if defined(MOR_KERNELS_HAVE_AVX2)
  if (isa == Isa::avx2) return &kAvx2Backend;
#endif
  (void)isa;
  return &kScalarBackend;
}

struct Dispatch {
  Isa isa;
  const Backend* backend;
  Dispatch() : isa(detect_isa()), backend(backend_for(isa)) {}
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Isa detect_isa() {
  return cpu_has_avx2_fma() ? Isa::avx2 : Isa::scalar;
}

Isa active_isa() { return dispatch().isa; }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !cpu_has_avx2_fma()) {
    throw std::invalid_argument("kernels: AVX2 backend not available on this CPU");
  }
  dispatch().isa = isa;
  dispatch().backend = backend_for(isa);
}

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

const Backend& backend(Isa isa) {
  if (isa == Isa::avx2) {
#if defined(MOR_KERNELS_HAVE_AVX2)
    if (cpu_has_avx2_fma()) return kAvx2Backend;
#endif
    throw std::invalid_argument("kernels: AVX2 backend not available");
  }
  return kScalarBackend;
}

const Backend& active_backend() { return *dispatch().backend; }

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().backend->dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().backend->axpy(alpha, x, y, n);
}

void scale(double* x, std::size_t n, double alpha) {
  dispatch().backend->scale(x, n, alpha);
}

void shift_scale(double* x, std::size_t n, double shift, double factor) {
  dispatch().backend->shift_scale(x, n, shift, factor);
}

double sum(const double* x, std::size_t n) {
  return dispatch().backend->sum(x, n);
}

double max_value(const double* x, std::size_t n) {
  return dispatch().backend->max_value(x, n);
}

void exp_inplace(double* x, std::size_t n) {
  dispatch().backend->exp_inplace(x, n);
}

void softmax(double* x, std::size_t n, double temperature) {
  dispatch().backend->softmax(x, n, temperature);
}

void matvec(const double* m, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  dispatch().backend->matvec(m, rows, cols, x, y);
}

void matvec_t_accum(const double* m, std::size_t rows, std::size_t cols,
                    const double* x, double* y) {
  dispatch().backend->matvec_t_accum(m, rows, cols, x, y);
}

void matmul(const double* a, std::size_t ra, std::size_t ca,
            const double* b, std::size_t cb, double* c) {
  dispatch().backend->matmul(a, ra, ca, b, cb, c);
}

void outer_accum(double alpha, const double* u, std::size_t m,
                 const double* v, std::size_t n, double* acc) {
  dispatch().backend->outer_accum(alpha, u, m, v, n, acc);
}

}  // namespace mor::kernels

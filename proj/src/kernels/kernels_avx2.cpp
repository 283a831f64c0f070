// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// AVX2+FMA kernels. Main loops run 4 doubles per lane with scalar tails.
// exp() follows the classic Cephes range reduction: x = n*ln2 + r, then a
// Pade approximant of e^r on |r| <= ln2/2 and a two-step 2^n rescale so
// subnormal-range results stay representable.

#include "mor/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace mor::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

// lane i of the result = horizontal sum of acc_i
inline __m256d hsum4(__m256d a0, __m256d a1, __m256d a2, __m256d a3) {
  __m256d h01 = _mm256_hadd_pd(a0, a1);
  __m256d h23 = _mm256_hadd_pd(a2, a3);
  __m256d swapped = _mm256_permute2f128_pd(h01, h23, 0x21);
  __m256d blended = _mm256_blend_pd(h01, h23, 0b1100);
  return _mm256_add_pd(swapped, blended);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double r = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double* x, std::size_t n, double alpha) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

void shift_scale_avx2(double* x, std::size_t n, double shift, double factor) {
  const __m256d vs = _mm256_set1_pd(shift);
  const __m256d vf = _mm256_set1_pd(factor);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_add_pd(_mm256_loadu_pd(x + i), vs);
    _mm256_storeu_pd(x + i, _mm256_mul_pd(v, vf));
  }
  for (; i < n; ++i) x[i] = (x[i] + shift) * factor;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  }
  double r = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += x[i];
  return r;
}

double max_value_avx2(const double* x, std::size_t n) {
  std::size_t i = 0;
  double m = x[0];
  if (n >= 4) {
    __m256d vm = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) {
      vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
    }
    __m128d lo = _mm256_castpd256_pd128(vm);
    __m128d hi = _mm256_extractf128_pd(vm, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    m = _mm_cvtsd_f64(_mm_max_sd(lo, shuf));
  } else {
    i = 1;
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

// Cephes exp() coefficients (rational approximation of e^r, |r| <= ln2/2).
constexpr double kLog2E = 1.4426950408889634073599;
constexpr double kLn2Hi = 6.93145751953125e-1;
constexpr double kLn2Lo = 1.42860682030941723212e-6;
constexpr double kExpP0 = 1.26177193074810590878e-4;
constexpr double kExpP1 = 3.02994407707441961300e-2;
constexpr double kExpP2 = 9.99999999999999999910e-1;
constexpr double kExpQ0 = 3.00198505138664455042e-6;
constexpr double kExpQ1 = 2.52448340349684104192e-3;
constexpr double kExpQ2 = 2.27265548208155028766e-1;
constexpr double kExpQ3 = 2.00000000000000000005e0;
constexpr double kExpOverflow = 709.78271289338397;   // ln(DBL_MAX)
constexpr double kExpUnderflow = -745.2;               // below this exp() rounds to 0

// 2^n for integer-valued n held in a double lane, |n| < 2^51.
inline __m256d pow2_lanes(__m256d n) {
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51
  __m256d t = _mm256_add_pd(n, magic);
  __m256i as_int = _mm256_sub_epi64(_mm256_castpd_si256(t), _mm256_castpd_si256(magic));
  __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(as_int, _mm256_set1_epi64x(1023)), 52);
  return _mm256_castsi256_pd(bits);
}

inline __m256d exp_vec(__m256d x) {
  const __m256d max_x = _mm256_set1_pd(kExpOverflow);
  const __m256d min_x = _mm256_set1_pd(kExpUnderflow);
  __m256d too_small = _mm256_cmp_pd(x, min_x, _CMP_LT_OQ);
  __m256d too_big = _mm256_cmp_pd(x, max_x, _CMP_GT_OQ);
  __m256d xc = _mm256_min_pd(_mm256_max_pd(x, min_x), max_x);

  __m256d n = _mm256_round_pd(
      _mm256_mul_pd(xc, _mm256_set1_pd(kLog2E)),
      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(kLn2Hi), xc);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(kLn2Lo), r);

  __m256d rr = _mm256_mul_pd(r, r);
  __m256d p = _mm256_set1_pd(kExpP0);
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(kExpP1));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(kExpP2));
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_set1_pd(kExpQ0);
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(kExpQ1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(kExpQ2));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(kExpQ3));
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // split rescale keeps 2^n1, 2^n2 in normal range down to n = -1074
  __m256d n1 = _mm256_round_pd(_mm256_mul_pd(n, _mm256_set1_pd(0.5)),
                               _MM_FROUND_TO_NEG_INF | _MM_FROUND_NO_EXC);
  __m256d n2 = _mm256_sub_pd(n, n1);
  e = _mm256_mul_pd(_mm256_mul_pd(e, pow2_lanes(n1)), pow2_lanes(n2));

  e = _mm256_blendv_pd(e, _mm256_setzero_pd(), too_small);
  e = _mm256_blendv_pd(e, _mm256_set1_pd(HUGE_VAL), too_big);
  return e;
}

void exp_inplace_avx2(double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, exp_vec(_mm256_loadu_pd(x + i)));
  }
  if (i < n) {
    double buf[4] = {0.0, 0.0, 0.0, 0.0};
    std::memcpy(buf, x + i, (n - i) * sizeof(double));
    _mm256_storeu_pd(buf, exp_vec(_mm256_loadu_pd(buf)));
    std::memcpy(x + i, buf, (n - i) * sizeof(double));
  }
}

// One pass for shift+exp+sum instead of three. Accumulator pairing and the
// padded exp tail mirror shift_scale/exp_inplace/sum exactly, so the result
// stays bit-identical to the composed chain.
void softmax_avx2(double* x, std::size_t n, double temperature) {
  const double m = max_value_avx2(x, n);
  const double f = 1.0 / temperature;
  const __m256d vs = _mm256_set1_pd(-m);
  const __m256d vf = _mm256_set1_pd(f);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d e0 = exp_vec(_mm256_mul_pd(_mm256_add_pd(_mm256_loadu_pd(x + i), vs), vf));
    __m256d e1 = exp_vec(_mm256_mul_pd(_mm256_add_pd(_mm256_loadu_pd(x + i + 4), vs), vf));
    _mm256_storeu_pd(x + i, e0);
    _mm256_storeu_pd(x + i + 4, e1);
    acc0 = _mm256_add_pd(acc0, e0);
    acc1 = _mm256_add_pd(acc1, e1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d e = exp_vec(_mm256_mul_pd(_mm256_add_pd(_mm256_loadu_pd(x + i), vs), vf));
    _mm256_storeu_pd(x + i, e);
    acc0 = _mm256_add_pd(acc0, e);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  if (i < n) {
    double buf[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = (x[j] + (-m)) * f;
    _mm256_storeu_pd(buf, exp_vec(_mm256_loadu_pd(buf)));
    for (std::size_t j = i; j < n; ++j) {
      x[j] = buf[j - i];
      s += buf[j - i];
    }
  }
  scale_avx2(x, n, 1.0 / s);
}

void matvec_avx2(const double* m, std::size_t rows, std::size_t cols,
                 const double* x, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* m0 = m + (r + 0) * cols;
    const double* m1 = m + (r + 1) * cols;
    const double* m2 = m + (r + 2) * cols;
    const double* m3 = m + (r + 3) * cols;
    __m256d a0 = _mm256_setzero_pd();
    __m256d a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd();
    __m256d a3 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      __m256d xv = _mm256_loadu_pd(x + c);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(m0 + c), xv, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(m1 + c), xv, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(m2 + c), xv, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(m3 + c), xv, a3);
    }
    __m256d sums = hsum4(a0, a1, a2, a3);
    double out[4];
    _mm256_storeu_pd(out, sums);
    for (; c < cols; ++c) {
      out[0] += m0[c] * x[c];
      out[1] += m1[c] * x[c];
      out[2] += m2[c] * x[c];
      out[3] += m3[c] * x[c];
    }
    std::memcpy(y + r, out, 4 * sizeof(double));
  }
  for (; r < rows; ++r) {
    y[r] = dot_avx2(m + r * cols, x, cols);
  }
}

void matvec_t_accum_avx2(const double* m, std::size_t rows, std::size_t cols,
                         const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_avx2(x[r], m + r * cols, y, cols);
  }
}

void matmul_avx2(const double* a, std::size_t ra, std::size_t ca,
                 const double* b, std::size_t cb, double* c) {
  std::memset(c, 0, ra * cb * sizeof(double));
  for (std::size_t i = 0; i < ra; ++i) {
    for (std::size_t k = 0; k < ca; ++k) {
      axpy_avx2(a[i * ca + k], b + k * cb, c + i * cb, cb);
    }
  }
}

void outer_accum_avx2(double alpha, const double* u, std::size_t m,
                      const double* v, std::size_t n, double* acc) {
  for (std::size_t i = 0; i < m; ++i) {
    axpy_avx2(alpha * u[i], v, acc + i * n, n);
  }
}

}  // namespace

extern const Backend kAvx2Backend = {
    dot_avx2,    axpy_avx2,        scale_avx2,  shift_scale_avx2,
    sum_avx2,    max_value_avx2,   exp_inplace_avx2, softmax_avx2,
    matvec_avx2, matvec_t_accum_avx2, matmul_avx2, outer_accum_avx2,
};

}  // namespace mor::kernels

#endif  // __AVX2__ && __FMA__

// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "coopt/kernels.hpp"

namespace coopt::kernels {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Cephes-style exp: range reduction by ln2, Pade approximant on the remainder.
// Inputs below the double underflow threshold return 0.
inline __m256d exp_pd(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.78);
  const __m256d lo = _mm256_set1_pd(-708.39);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125e-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212e-6), r);

  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d p = _mm256_set1_pd(1.26177193074810590878e-4);
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(3.02994407707441961300e-2));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910e-1));
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_set1_pd(3.00198505138664455042e-6);
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.52448340349684104192e-3));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766e-1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000009e0));
  const __m256d two = _mm256_set1_pd(2.0);
  __m256d er = _mm256_div_pd(_mm256_mul_pd(two, p), _mm256_sub_pd(q, p));
  er = _mm256_add_pd(er, _mm256_set1_pd(1.0));

  // 2^n assembled directly in the exponent field.
  const __m256d biased =
      _mm256_add_pd(_mm256_add_pd(n, _mm256_set1_pd(1023.0)), _mm256_set1_pd(4503599627370496.0));
  const __m256i bits = _mm256_slli_epi64(_mm256_castpd_si256(biased), 52);
  const __m256d result = _mm256_mul_pd(er, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, result);
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
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double out = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    out += d * d;
  }
  return out;
}

double sum_exp_avx2(const double* x, std::size_t n, double scale, double shift) {
  const __m256d vs = _mm256_set1_pd(scale);
  const __m256d vshift = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d arg = _mm256_fmsub_pd(vs, _mm256_loadu_pd(x + i), vshift);
    acc = _mm256_add_pd(acc, exp_pd(arg));
  }
  double out = hsum(acc);
  for (; i < n; ++i) out += std::exp(scale * x[i] - shift);
  return out;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void battery_step_avx2(double* e, const double* p, std::size_t n, double eta_c, double eta_d,
                       double dt) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d vc = _mm256_set1_pd(eta_c);
  const __m256d vd = _mm256_set1_pd(eta_d);
  const __m256d vdt = _mm256_set1_pd(dt);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pv = _mm256_loadu_pd(p + i);
    const __m256d charge = _mm256_max_pd(pv, zero);
    const __m256d discharge = _mm256_max_pd(_mm256_sub_pd(zero, pv), zero);
    const __m256d delta =
        _mm256_sub_pd(_mm256_mul_pd(vc, charge), _mm256_div_pd(discharge, vd));
    _mm256_storeu_pd(e + i, _mm256_add_pd(_mm256_loadu_pd(e + i), _mm256_mul_pd(delta, vdt)));
  }
  for (; i < n; ++i) {
    const double charge = std::max(p[i], 0.0);
    const double discharge = std::max(-p[i], 0.0);
    e[i] += (eta_c * charge - discharge / eta_d) * dt;
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{"avx2",      dot_avx2,  squared_distance_avx2,
                                 sum_exp_avx2, axpy_avx2, battery_step_avx2};
  return table;
}

}  // namespace coopt::kernels

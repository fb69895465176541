// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached after the
// dispatcher has confirmed CPU support.

#include <immintrin.h>

#include "somgan/simd.hpp"

namespace somgan::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// R rows of A against 8 columns of B held in two registers per row.
template <int R>
inline void gemm_block8(std::size_t k, std::size_t m, const double* a, const double* b,
                        double* c) {
  __m256d acc[R][2];
  for (int r = 0; r < R; ++r) {
    acc[r][0] = _mm256_loadu_pd(c + r * m);
    acc[r][1] = _mm256_loadu_pd(c + r * m + 4);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * m);
    const __m256d b1 = _mm256_loadu_pd(b + p * m + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * k + p);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < R; ++r) {
    _mm256_storeu_pd(c + r * m, acc[r][0]);
    _mm256_storeu_pd(c + r * m + 4, acc[r][1]);
  }
}

template <int R>
inline void gemm_block4(std::size_t k, std::size_t m, const double* a, const double* b,
                        double* c) {
  __m256d acc[R];
  for (int r = 0; r < R; ++r) acc[r] = _mm256_loadu_pd(c + r * m);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * m);
    for (int r = 0; r < R; ++r) {
      acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * k + p), b0, acc[r]);
    }
  }
  for (int r = 0; r < R; ++r) _mm256_storeu_pd(c + r * m, acc[r]);
}

template <int R>
inline void gemm_rows(std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
  std::size_t j = 0;
  for (; j + 8 <= m; j += 8) gemm_block8<R>(k, m, a, b + j, c + j);
  for (; j + 4 <= m; j += 4) gemm_block4<R>(k, m, a, b + j, c + j);
  for (; j < m; ++j) {
    for (int r = 0; r < R; ++r) {
      double s = c[r * m + j];
      for (std::size_t p = 0; p < k; ++p) s += a[r * k + p] * b[p * m + j];
      c[r * m + j] = s;
    }
  }
}

void gemm_acc_avx2(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                   double* c) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) gemm_rows<4>(k, m, a + i * k, b, c + i * m);
  switch (n - i) {
    case 3: gemm_rows<3>(k, m, a + i * k, b, c + i * m); break;
    case 2: gemm_rows<2>(k, m, a + i * k, b, c + i * m); break;
    case 1: gemm_rows<1>(k, m, a + i * k, b, c + i * m); break;
    default: break;
  }
}

constexpr KernelTable kAvx2{
    "avx2", dot_avx2, squared_distance_avx2, axpy_avx2, gemm_acc_avx2,
};

}  // namespace

const KernelTable* avx2_kernels_impl() noexcept { return &kAvx2; }

}  // namespace somgan::simd

// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "lfr/kernels.hpp"

#include <immintrin.h>

namespace lfr::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
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
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar(double alpha, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), va));
  for (; i < n; ++i) y[i] += alpha;
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_acc(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                              _mm256_loadu_pd(out + i)));
  }
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

void tanh_backward(const double* t, const double* g, double* out, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vt = _mm256_loadu_pd(t + i);
    const __m256d d = _mm256_fnmadd_pd(vt, vt, one);
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(g + i), d, _mm256_loadu_pd(out + i)));
  }
  for (; i < n; ++i) out[i] += g[i] * (1.0 - t[i] * t[i]);
}

// C row i is held in registers 16 columns at a time while k runs.
void gemm_nn(std::size_t m, std::size_t n, std::size_t p, const double* a,
             const double* x, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * p;
    std::size_t j = 0;
    for (; j + 16 <= p; j += 16) {
      __m256d c0 = _mm256_loadu_pd(crow + j);
      __m256d c1 = _mm256_loadu_pd(crow + j + 4);
      __m256d c2 = _mm256_loadu_pd(crow + j + 8);
      __m256d c3 = _mm256_loadu_pd(crow + j + 12);
      for (std::size_t k = 0; k < n; ++k) {
        if (arow[k] == 0.0) continue;
        const __m256d va = _mm256_set1_pd(arow[k]);
        const double* xr = x + k * p + j;
        c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(xr), c0);
        c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(xr + 4), c1);
        c2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(xr + 8), c2);
        c3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(xr + 12), c3);
      }
      _mm256_storeu_pd(crow + j, c0);
      _mm256_storeu_pd(crow + j + 4, c1);
      _mm256_storeu_pd(crow + j + 8, c2);
      _mm256_storeu_pd(crow + j + 12, c3);
    }
    for (; j + 4 <= p; j += 4) {
      __m256d c0 = _mm256_loadu_pd(crow + j);
      for (std::size_t k = 0; k < n; ++k) {
        if (arow[k] == 0.0) continue;
        c0 = _mm256_fmadd_pd(_mm256_set1_pd(arow[k]), _mm256_loadu_pd(x + k * p + j), c0);
      }
      _mm256_storeu_pd(crow + j, c0);
    }
    for (; j < p; ++j) {
      double s = crow[j];
      for (std::size_t k = 0; k < n; ++k) {
        if (arow[k] == 0.0) continue;
        s += arow[k] * x[k * p + j];
      }
      crow[j] = s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t p, const double* a,
             const double* g, double* gx) {
  for (std::size_t k = 0; k < n; ++k) {
    double* out = gx + k * p;
    std::size_t j = 0;
    for (; j + 16 <= p; j += 16) {
      __m256d c0 = _mm256_loadu_pd(out + j);
      __m256d c1 = _mm256_loadu_pd(out + j + 4);
      __m256d c2 = _mm256_loadu_pd(out + j + 8);
      __m256d c3 = _mm256_loadu_pd(out + j + 12);
      for (std::size_t i = 0; i < m; ++i) {
        const double aik = a[i * n + k];
        if (aik == 0.0) continue;
        const __m256d va = _mm256_set1_pd(aik);
        const double* gr = g + i * p + j;
        c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(gr), c0);
        c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(gr + 4), c1);
        c2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(gr + 8), c2);
        c3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(gr + 12), c3);
      }
      _mm256_storeu_pd(out + j, c0);
      _mm256_storeu_pd(out + j + 4, c1);
      _mm256_storeu_pd(out + j + 8, c2);
      _mm256_storeu_pd(out + j + 12, c3);
    }
    for (; j + 4 <= p; j += 4) {
      __m256d c0 = _mm256_loadu_pd(out + j);
      for (std::size_t i = 0; i < m; ++i) {
        const double aik = a[i * n + k];
        if (aik == 0.0) continue;
        c0 = _mm256_fmadd_pd(_mm256_set1_pd(aik), _mm256_loadu_pd(g + i * p + j), c0);
      }
      _mm256_storeu_pd(out + j, c0);
    }
    for (; j < p; ++j) {
      double s = out[j];
      for (std::size_t i = 0; i < m; ++i) {
        const double aik = a[i * n + k];
        if (aik == 0.0) continue;
        s += aik * g[i * p + j];
      }
      out[j] = s;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t p, const double* g,
             const double* x, double* ga) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) ga[i * n + k] += dot(g + i * p, x + k * p, p);
  }
}

}  // namespace

const KernelTable& avx2_kernel_table() {
  static const KernelTable table{Backend::Avx2, "avx2", dot,     sum,
                                 axpy,          add_scalar, add, sub,
                                 mul,           mul_acc,    tanh_backward,
                                 gemm_nn,       gemm_tn,    gemm_nt};
  return table;
}

}  // namespace lfr::kernels

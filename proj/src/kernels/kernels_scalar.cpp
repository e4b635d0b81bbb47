#include "lfr/kernels.hpp"

namespace lfr::kernels {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar(double alpha, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha;
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_acc(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void tanh_backward(const double* t, const double* g, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += g[i] * (1.0 - t[i] * t[i]);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t p, const double* a,
             const double* x, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a[i * n + k];
      if (aik == 0.0) continue;
      const double* xrow = x + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * xrow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t p, const double* a,
             const double* g, double* gx) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a[i * n + k];
      if (aik == 0.0) continue;
      double* out = gx + k * p;
      for (std::size_t j = 0; j < p; ++j) out[j] += aik * grow[j];
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

const KernelTable& scalar_table() {
  static const KernelTable table{Backend::Scalar, "scalar", dot,     sum,
                                 axpy,            add_scalar, add,   sub,
                                 mul,             mul_acc,    tanh_backward,
                                 gemm_nn,         gemm_tn,    gemm_nt};
  return table;
}

}  // namespace lfr::kernels

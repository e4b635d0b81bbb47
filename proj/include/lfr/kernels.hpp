#pragma once

// Dense inner-loop kernels used by the batched reverse-mode tape.
//
// Matrices are row-major with rows packed contiguously; batch data is stored
// as (signal rows) x (batch columns) so every kernel streams along the batch
// dimension. Each kernel exists as a scalar reference and, on x86-64 hosts
// with AVX2+FMA, as a vectorized variant. The variant is chosen once at
// startup (override with LFR_KERNELS=scalar|avx2 or set_backend()).

#include <cstddef>
#include <string_view>

namespace lfr::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  Backend backend;
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += alpha
  void (*add_scalar)(double alpha, double* y, std::size_t n);
  // out = a + b, out = a - b, out = a * b
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out += a * b
  void (*mul_acc)(const double* a, const double* b, double* out, std::size_t n);
  // out += g * (1 - t*t)
  void (*tanh_backward)(const double* t, const double* g, double* out, std::size_t n);
  // C(m x p) += A(m x n) * X(n x p)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t p, const double* a,
                  const double* x, double* c);
  // GX(n x p) += A(m x n)^T * G(m x p)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t p, const double* a,
                  const double* g, double* gx);
  // GA(m x n) += G(m x p) * X(n x p)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t p, const double* g,
                  const double* x, double* ga);
};

const KernelTable& scalar_table();
// nullptr when the build or the host lacks AVX2/FMA.
const KernelTable* avx2_table();

const KernelTable& active();
void set_backend(Backend backend);
bool backend_available(Backend backend);

}  // namespace lfr::kernels

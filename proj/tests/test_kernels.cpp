#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace lfr::kernels;

namespace {

std::vector<double> rnd(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = U(rng);
  return v;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    w = std::max(w, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  return w;
}

// Sizes around the 4-wide vector length and the unrolled 16-wide loops.
const std::size_t kSizes[] = {0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 31, 33, 64, 127, 130, 1000};

}  // namespace

TEST_CASE("reference kernels") {
  const KernelTable& s = scalar_table();
  std::vector<double> a{1, 2, 3}, b{4, 5, 6}, out(3, 0.0);
  CHECK(s.dot(a.data(), b.data(), 3) == 32.0);
  CHECK(s.sum(a.data(), 3) == 6.0);
  s.mul_acc(a.data(), b.data(), out.data(), 3);
  CHECK(out == std::vector<double>{4, 10, 18});
  // [1 2; 3 4] * [1; 1]
  std::vector<double> A{1, 2, 3, 4}, X{1, 1}, C(2, 0.0);
  s.gemm_nn(2, 2, 1, A.data(), X.data(), C.data());
  CHECK(C == std::vector<double>{3, 7});
}

TEST_CASE("avx2 kernels agree with the reference") {
  const KernelTable* v = avx2_table();
  if (!v) {
    MESSAGE("AVX2 not available on this host; skipping");
    return;
  }
  const KernelTable& s = scalar_table();
  std::mt19937_64 rng(5);
  for (std::size_t n : kSizes) {
    const auto a = rnd(n, rng), b = rnd(n, rng), c0 = rnd(n, rng);
    CHECK(std::abs(s.dot(a.data(), b.data(), n) - v->dot(a.data(), b.data(), n)) < 1e-12 * (1.0 + n));
    CHECK(std::abs(s.sum(a.data(), n) - v->sum(a.data(), n)) < 1e-12 * (1.0 + n));

    auto run = [&](auto&& f) {
      std::vector<double> x = c0, y = c0;
      f(s, x);
      f(*v, y);
      return max_rel(x, y);
    };
    CHECK(run([&](const KernelTable& k, std::vector<double>& o) { k.axpy(0.37, a.data(), o.data(), n); }) < 1e-14);
    CHECK(run([&](const KernelTable& k, std::vector<double>& o) { k.add_scalar(-1.5, o.data(), n); }) < 1e-15);
    CHECK(run([&](const KernelTable& k, std::vector<double>& o) { k.add(a.data(), b.data(), o.data(), n); }) == 0.0);
    CHECK(run([&](const KernelTable& k, std::vector<double>& o) { k.sub(a.data(), b.data(), o.data(), n); }) == 0.0);
    CHECK(run([&](const KernelTable& k, std::vector<double>& o) { k.mul(a.data(), b.data(), o.data(), n); }) == 0.0);
    CHECK(run([&](const KernelTable& k, std::vector<double>& o) { k.mul_acc(a.data(), b.data(), o.data(), n); }) < 1e-15);
    CHECK(run([&](const KernelTable& k, std::vector<double>& o) { k.tanh_backward(a.data(), b.data(), o.data(), n); }) < 1e-15);
  }
}

TEST_CASE("avx2 gemm variants agree with the reference") {
  const KernelTable* v = avx2_table();
  if (!v) return;
  const KernelTable& s = scalar_table();
  std::mt19937_64 rng(9);
  const std::size_t dims[] = {1, 2, 3, 5, 8, 13, 16, 17};
  for (std::size_t m : dims)
    for (std::size_t n : dims)
      for (std::size_t p : {1ul, 3ul, 4ul, 9ul, 128ul, 131ul}) {
        const auto A = rnd(m * n, rng), X = rnd(n * p, rng), G = rnd(m * p, rng);
        const auto C0 = rnd(m * p, rng), GX0 = rnd(n * p, rng), GA0 = rnd(m * n, rng);
        auto c1 = C0, c2 = C0, gx1 = GX0, gx2 = GX0, ga1 = GA0, ga2 = GA0;
        s.gemm_nn(m, n, p, A.data(), X.data(), c1.data());
        v->gemm_nn(m, n, p, A.data(), X.data(), c2.data());
        s.gemm_tn(m, n, p, A.data(), G.data(), gx1.data());
        v->gemm_tn(m, n, p, A.data(), G.data(), gx2.data());
        s.gemm_nt(m, n, p, G.data(), X.data(), ga1.data());
        v->gemm_nt(m, n, p, G.data(), X.data(), ga2.data());
        REQUIRE(max_rel(c1, c2) < 1e-12);
        REQUIRE(max_rel(gx1, gx2) < 1e-12);
        REQUIRE(max_rel(ga1, ga2) < 1e-12);
      }
}

TEST_CASE("backend switching") {
  const Backend before = active().backend;
  set_backend(Backend::Scalar);
  CHECK(active().backend == Backend::Scalar);
  if (backend_available(Backend::Avx2)) {
    set_backend(Backend::Avx2);
    CHECK(active().name == "avx2");
  }
  set_backend(before);
}

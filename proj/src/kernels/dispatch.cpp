#include "lfr/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace lfr::kernels {

#if defined(LFR_HAVE_AVX2)
const KernelTable& avx2_kernel_table();
#endif

const KernelTable* avx2_table() {
#if defined(LFR_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("LFR_KERNELS")) {
    if (std::string_view(env) == "scalar") return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool backend_available(Backend backend) {
  return backend == Backend::Scalar || avx2_table() != nullptr;
}

void set_backend(Backend backend) {
  const KernelTable* t = backend == Backend::Avx2 ? avx2_table() : &scalar_table();
  if (t == nullptr) t = &scalar_table();
  current().store(t, std::memory_order_release);
}

}  // namespace lfr::kernels

#include <atomic>

#include "kernels_internal.hpp"

namespace geoloc::kernels {
namespace {

const KernelTable kScalar{"scalar", scalar::gemm, scalar::conv2d_forward,
                          scalar::conv2d_backward_data, scalar::conv2d_backward_filter,
                          scalar::axpy};

#if defined(GEOLOC_HAVE_AVX2)
const KernelTable kAvx2{"avx2", avx2::gemm, avx2::conv2d_forward, avx2::conv2d_backward_data,
                        avx2::conv2d_backward_filter, avx2::axpy};
#endif

bool cpu_has_avx2_fma() {
#if defined(GEOLOC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{avx2_available() ? avx2_table() : &kScalar};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(GEOLOC_HAVE_AVX2)
  return &kAvx2;
#else
  return nullptr;
#endif
}

bool avx2_available() {
  static const bool ok = avx2_table() != nullptr && cpu_has_avx2_fma();
  return ok;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(Backend backend) {
  if (backend == Backend::kAvx2) {
    if (!avx2_available()) return false;
    current().store(avx2_table(), std::memory_order_release);
    return true;
  }
  current().store(&kScalar, std::memory_order_release);
  return true;
}

Backend active_backend() { return &active() == &kScalar ? Backend::kScalar : Backend::kAvx2; }

}  // namespace geoloc::kernels

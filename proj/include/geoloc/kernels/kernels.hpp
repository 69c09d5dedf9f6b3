#pragma once

// Dense inner loops used by the autodiff primitives. Each kernel has a scalar
// reference implementation and, where the build and CPU allow it, an AVX2/FMA
// variant. The active table is chosen once at startup from CPUID and can be
// pinned for equivalence testing.

#include <cstddef>
#include <string_view>

namespace geoloc::kernels {

struct Conv2dGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_height = 1;
  std::size_t in_width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (in_height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (in_width + 2 * padding - kernel_w) / stride + 1; }
};

// C (m x n) += op(A) * op(B), all row-major. op(A) is m x k; when trans_a is set
// A is stored k x m. op(B) is k x n; when trans_b is set B is stored n x k.
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                        const double* a, const double* b, double* c);

// out (B,O,Ho,Wo) += conv(x (B,C,H,W), w (O,C,KH,KW)).
using ConvForwardFn = void (*)(const Conv2dGeometry& g, const double* x, const double* w,
                               double* out);
// grad_x (B,C,H,W) += conv_transpose(grad_out, w).
using ConvBackwardDataFn = void (*)(const Conv2dGeometry& g, const double* grad_out,
                                    const double* w, double* grad_x);
// grad_w (O,C,KH,KW) += correlate(grad_out, x).
using ConvBackwardFilterFn = void (*)(const Conv2dGeometry& g, const double* grad_out,
                                      const double* x, double* grad_w);
// y[i] += alpha * x[i]
using AxpyFn = void (*)(std::size_t n, double alpha, const double* x, double* y);

struct KernelTable {
  std::string_view name;
  GemmFn gemm;
  ConvForwardFn conv2d_forward;
  ConvBackwardDataFn conv2d_backward_data;
  ConvBackwardFilterFn conv2d_backward_filter;
  AxpyFn axpy;
};

enum class Backend { kScalar, kAvx2 };

const KernelTable& scalar_table();
/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

/// True when the AVX2 table exists and the running CPU reports AVX2 and FMA.
bool avx2_available();

/// Currently selected table; defaults to the best available backend.
const KernelTable& active();
/// Pins the backend. Returns false (and leaves the selection alone) if unavailable.
bool select(Backend backend);
Backend active_backend();

}  // namespace geoloc::kernels

// AVX2/FMA kernels. Compiled with -mavx2 -mfma; only reached through the
// dispatch table after a CPUID check. Strided convolutions fall back to the
// scalar reference.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "kernels_internal.hpp"

namespace geoloc::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// y[0..n) += alpha * x[0..n)
inline void row_axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
    _mm256_storeu_pd(y + j + 4,
                     _mm256_fmadd_pd(av, _mm256_loadu_pd(x + j + 4), _mm256_loadu_pd(y + j + 4)));
  }
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < n; ++j) y[j] = std::fma(alpha, x[j], y[j]);
}

// Accumulates x[0..n) * y[0..n) into a vector register plus a scalar tail.
inline void row_dot(std::size_t n, const double* x, const double* y, __m256d& acc,
                    double& tail) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j), acc);
  }
  for (; j < n; ++j) tail = std::fma(x[j], y[j], tail);
}

struct ValidRange {
  std::size_t begin;
  std::size_t end;
};

// Output positions whose tap lands inside the input (stride 1).
inline ValidRange valid_outputs(std::size_t tap, std::size_t padding, std::size_t in_extent,
                                std::size_t out_extent) {
  const long lo = static_cast<long>(padding) - static_cast<long>(tap);
  const long hi = static_cast<long>(in_extent) + static_cast<long>(padding) - static_cast<long>(tap);
  const long b = std::max(0L, lo);
  const long e = std::min(static_cast<long>(out_extent), hi);
  if (e <= b) return {0, 0};
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c) {
  if (!trans_b) {
    if (!trans_a) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) row_axpy(n, a[i * k + p], b + p * n, c + i * n);
      }
    } else {
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t i = 0; i < m; ++i) row_axpy(n, a[p * m + i], b + p * n, c + i * n);
      }
    }
    return;
  }
  if (trans_a) {
    scalar::gemm(trans_a, trans_b, m, n, k, a, b, c);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      __m256d acc = _mm256_setzero_pd();
      double tail = 0.0;
      row_dot(k, a + i * k, b + j * k, acc, tail);
      c[i * n + j] += hsum(acc) + tail;
    }
  }
}

void conv2d_forward(const Conv2dGeometry& g, const double* x, const double* w, double* out) {
  if (g.stride != 1) {
    scalar::conv2d_forward(g, x, w, out);
    return;
  }
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t bi = 0; bi < g.batch; ++bi) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double* plane = out + (bi * g.out_channels + o) * ho * wo;
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const double* src = x + (bi * g.in_channels + ci) * g.in_height * g.in_width;
        const double* taps = w + (o * g.in_channels + ci) * g.kernel_h * g.kernel_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const ValidRange ry = valid_outputs(ky, g.padding, g.in_height, ho);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const ValidRange rx = valid_outputs(kx, g.padding, g.in_width, wo);
            if (rx.end == rx.begin) continue;
            const double wv = taps[ky * g.kernel_w + kx];
            for (std::size_t oy = ry.begin; oy < ry.end; ++oy) {
              const std::size_t iy = oy + ky - g.padding;
              row_axpy(rx.end - rx.begin, wv, src + iy * g.in_width + rx.begin + kx - g.padding,
                       plane + oy * wo + rx.begin);
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_data(const Conv2dGeometry& g, const double* grad_out, const double* w,
                          double* grad_x) {
  if (g.stride != 1) {
    scalar::conv2d_backward_data(g, grad_out, w, grad_x);
    return;
  }
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t bi = 0; bi < g.batch; ++bi) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const double* plane = grad_out + (bi * g.out_channels + o) * ho * wo;
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        double* dst = grad_x + (bi * g.in_channels + ci) * g.in_height * g.in_width;
        const double* taps = w + (o * g.in_channels + ci) * g.kernel_h * g.kernel_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const ValidRange ry = valid_outputs(ky, g.padding, g.in_height, ho);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const ValidRange rx = valid_outputs(kx, g.padding, g.in_width, wo);
            if (rx.end == rx.begin) continue;
            const double wv = taps[ky * g.kernel_w + kx];
            for (std::size_t oy = ry.begin; oy < ry.end; ++oy) {
              const std::size_t iy = oy + ky - g.padding;
              row_axpy(rx.end - rx.begin, wv, plane + oy * wo + rx.begin,
                       dst + iy * g.in_width + rx.begin + kx - g.padding);
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_filter(const Conv2dGeometry& g, const double* grad_out, const double* x,
                            double* grad_w) {
  if (g.stride != 1) {
    scalar::conv2d_backward_filter(g, grad_out, x, grad_w);
    return;
  }
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const ValidRange ry = valid_outputs(ky, g.padding, g.in_height, ho);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const ValidRange rx = valid_outputs(kx, g.padding, g.in_width, wo);
          __m256d acc = _mm256_setzero_pd();
          double tail = 0.0;
          if (rx.end > rx.begin) {
            for (std::size_t bi = 0; bi < g.batch; ++bi) {
              const double* plane = grad_out + (bi * g.out_channels + o) * ho * wo;
              const double* src = x + (bi * g.in_channels + ci) * g.in_height * g.in_width;
              for (std::size_t oy = ry.begin; oy < ry.end; ++oy) {
                const std::size_t iy = oy + ky - g.padding;
                row_dot(rx.end - rx.begin, plane + oy * wo + rx.begin,
                        src + iy * g.in_width + rx.begin + kx - g.padding, acc, tail);
              }
            }
          }
          grad_w[((o * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] +=
              hsum(acc) + tail;
        }
      }
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) { row_axpy(n, alpha, x, y); }

}  // namespace geoloc::kernels::avx2

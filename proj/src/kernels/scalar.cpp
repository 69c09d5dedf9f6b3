// Reference kernels. Plain loops, bounds checked per element, no blocking.

#include "kernels_internal.hpp"

namespace geoloc::kernels::scalar {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] += acc;
    }
  }
}

namespace {

// Input coordinate for an output coordinate and kernel tap, or -1 when it falls
// in the zero padding.
inline long input_coord(std::size_t out, std::size_t tap, const Conv2dGeometry& g,
                        std::size_t extent) {
  const long v = static_cast<long>(out * g.stride + tap) - static_cast<long>(g.padding);
  return (v < 0 || v >= static_cast<long>(extent)) ? -1 : v;
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, const double* x, const double* w, double* out) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const long iy = input_coord(oy, ky, g, g.in_height);
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long ix = input_coord(ox, kx, g, g.in_width);
                if (ix < 0) continue;
                acc += w[((o * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                       x[((b * g.in_channels + ci) * g.in_height + iy) * g.in_width + ix];
              }
            }
          }
          out[((b * g.out_channels + o) * ho + oy) * wo + ox] += acc;
        }
      }
    }
  }
}

void conv2d_backward_data(const Conv2dGeometry& g, const double* grad_out, const double* w,
                          double* grad_x) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const double go = grad_out[((b * g.out_channels + o) * ho + oy) * wo + ox];
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const long iy = input_coord(oy, ky, g, g.in_height);
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long ix = input_coord(ox, kx, g, g.in_width);
                if (ix < 0) continue;
                grad_x[((b * g.in_channels + ci) * g.in_height + iy) * g.in_width + ix] +=
                    go * w[((o * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_filter(const Conv2dGeometry& g, const double* grad_out, const double* x,
                            double* grad_w) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          double acc = 0.0;
          for (std::size_t b = 0; b < g.batch; ++b) {
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const long iy = input_coord(oy, ky, g, g.in_height);
              if (iy < 0) continue;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const long ix = input_coord(ox, kx, g, g.in_width);
                if (ix < 0) continue;
                acc += grad_out[((b * g.out_channels + o) * ho + oy) * wo + ox] *
                       x[((b * g.in_channels + ci) * g.in_height + iy) * g.in_width + ix];
              }
            }
          }
          grad_w[((o * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
        }
      }
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace geoloc::kernels::scalar

#pragma once

#include "geoloc/kernels/kernels.hpp"

namespace geoloc::kernels {

namespace scalar {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c);
void conv2d_forward(const Conv2dGeometry& g, const double* x, const double* w, double* out);
void conv2d_backward_data(const Conv2dGeometry& g, const double* grad_out, const double* w,
                          double* grad_x);
void conv2d_backward_filter(const Conv2dGeometry& g, const double* grad_out, const double* x,
                            double* grad_w);
void axpy(std::size_t n, double alpha, const double* x, double* y);
}  // namespace scalar

#if defined(GEOLOC_HAVE_AVX2)
namespace avx2 {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c);
void conv2d_forward(const Conv2dGeometry& g, const double* x, const double* w, double* out);
void conv2d_backward_data(const Conv2dGeometry& g, const double* grad_out, const double* w,
                          double* grad_x);
void conv2d_backward_filter(const Conv2dGeometry& g, const double* grad_out, const double* x,
                            double* grad_w);
void axpy(std::size_t n, double alpha, const double* x, double* y);
}  // namespace avx2
#endif

}  // namespace geoloc::kernels

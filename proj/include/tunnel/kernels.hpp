#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference in
// kernels::serial and an OpenMP version in kernels::omp; the library calls the
// OpenMP versions, tests and benchmarks compare the two.

#include <cstddef>
#include <span>
#include <vector>

#include "tunnel/image.hpp"

namespace tunnel::kernels {

/// Output index u maps to source index coordinate offset + step * u
/// (index space: pixel i has its center at i).
struct AxisMap {
  double offset = 0.0;
  double step = 1.0;
};

struct Interval {
  double lo;
  double hi;
};

/// Bilinear resampling setup. Source coordinates outside `fill_*` produce zero;
/// inside, they are clamped to `clamp_*` before interpolation.
struct ResampleSpec {
  int out_width = 0;
  int out_height = 0;
  AxisMap x;
  AxisMap y;
  Interval fill_x{-1e300, 1e300};
  Interval fill_y{-1e300, 1e300};
  Interval clamp_x{0.0, 0.0};
  Interval clamp_y{0.0, 0.0};
};

struct ConvShape {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

#define TUNNEL_KERNEL_DECLS                                                                       \
  /* c(m,n) = a(m,k) b(k,n) + bias(n); bias may be empty */                                      \
  void matmul(std::span<const double> a, std::span<const double> b, std::span<const double> bias, \
              std::span<double> c, std::size_t m, std::size_t k, std::size_t n);                  \
  /* probs(m,n) = softmax_rows(q kt * scale); out(m,dv) = probs v */                             \
  void attention(std::span<const double> q, std::span<const double> k, std::span<const double> v, \
                 std::span<double> probs, std::span<double> out, std::size_t m, std::size_t n,     \
                 std::size_t d, std::size_t dv, double scale);                                     \
  /* input (cin,h,w), weight (cout,cin,k,k), bias (cout) -> out (cout,oh,ow), zero padding */    \
  void conv2d(std::span<const double> input, std::span<const double> weight,                     \
              std::span<const double> bias, std::span<double> out, const ConvShape& shape);        \
  Image resample(const Image& src, const ResampleSpec& spec);                                     \
  /* Separable convolution of a single plane with a symmetric kernel, zero outside. */            \
  void blur_separable(std::span<const double> plane, std::span<double> out, int width,          \
                      int height, std::span<const double> kernel);                                 \
  /* Mean SSIM over all fully-contained windows of two single-channel planes. */                  \
  double ssim_mean(std::span<const double> a, std::span<const double> b, int width, int height, \
                   std::span<const double> window1d, double c1, double c2);

namespace serial {
TUNNEL_KERNEL_DECLS
}  // namespace serial

namespace omp {
TUNNEL_KERNEL_DECLS
}  // namespace omp

#undef TUNNEL_KERNEL_DECLS

/// Number of threads the OpenMP kernels will use (1 without OpenMP).
int max_threads();

}  // namespace tunnel::kernels

// Reference implementations: straightforward loops, no parallelism.

#include <algorithm>
#include <cmath>
#include <limits>

#include "tunnel/kernels.hpp"

namespace tunnel::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<const double> bias,
            std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = bias.empty() ? 0.0 : bias[j];
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void attention(std::span<const double> q, std::span<const double> k, std::span<const double> v,
               std::span<double> probs, std::span<double> out, std::size_t m, std::size_t n,
               std::size_t d, std::size_t dv, double scale) {
  for (std::size_t i = 0; i < m; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t p = 0; p < d; ++p) dot += q[i * d + p] * k[j * d + p];
      probs[i * n + j] = dot * scale;
      row_max = std::max(row_max, probs[i * n + j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[i * n + j] = std::exp(probs[i * n + j] - row_max);
      total += probs[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= total;
    for (std::size_t p = 0; p < dv; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += probs[i * n + j] * v[j * dv + p];
      out[i * dv + p] = acc;
    }
  }
}

void conv2d(std::span<const double> input, std::span<const double> weight, std::span<const double> bias,
            std::span<double> out, const ConvShape& s) {
  const std::size_t oh = s.out_height();
  const std::size_t ow = s.out_width();
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
          for (std::size_t ky = 0; ky < s.kernel; ++ky) {
            for (std::size_t kx = 0; kx < s.kernel; ++kx) {
              const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
              const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.height) || ix >= static_cast<long>(s.width)) {
                continue;
              }
              acc += weight[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx] *
                     input[(ci * s.height + iy) * s.width + ix];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

Image resample(const Image& src, const ResampleSpec& spec) {
  Image out(spec.out_width, spec.out_height, src.channels, 0.0);
  for (int v = 0; v < spec.out_height; ++v) {
    const double sy = spec.y.offset + spec.y.step * v;
    if (sy < spec.fill_y.lo || sy > spec.fill_y.hi) continue;
    const double cy = std::clamp(sy, spec.clamp_y.lo, spec.clamp_y.hi);
    const int y0 = static_cast<int>(std::floor(cy));
    const double fy = cy - y0;
    const int y1 = std::min(y0 + 1, src.height - 1);
    for (int u = 0; u < spec.out_width; ++u) {
      const double sx = spec.x.offset + spec.x.step * u;
      if (sx < spec.fill_x.lo || sx > spec.fill_x.hi) continue;
      const double cx = std::clamp(sx, spec.clamp_x.lo, spec.clamp_x.hi);
      const int x0 = static_cast<int>(std::floor(cx));
      const double fx = cx - x0;
      const int x1 = std::min(x0 + 1, src.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(x0, y0, c) * (1.0 - fx) + (fx > 0.0 ? src.at(x1, y0, c) * fx : 0.0);
        const double bot = src.at(x0, y1, c) * (1.0 - fx) + (fx > 0.0 ? src.at(x1, y1, c) * fx : 0.0);
        out.at(u, v, c) = fy > 0.0 ? top * (1.0 - fy) + bot * fy : top;
      }
    }
  }
  return out;
}

void blur_separable(std::span<const double> plane, std::span<double> out, int width, int height,
                    std::span<const double> kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(plane.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < width) acc += kernel[k + r] * plane[y * width + xx];
      }
      tmp[y * width + x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < height) acc += kernel[k + r] * tmp[yy * width + x];
      }
      out[y * width + x] = acc;
    }
  }
}

double ssim_mean(std::span<const double> a, std::span<const double> b, int width, int height,
                 std::span<const double> w, double c1, double c2) {
  const int win = static_cast<int>(w.size());
  double total = 0.0;
  long count = 0;
  for (int y = 0; y + win <= height; ++y) {
    for (int x = 0; x + win <= width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int j = 0; j < win; ++j) {
        for (int i = 0; i < win; ++i) {
          const double wt = w[j] * w[i];
          const double va = a[(y + j) * width + x + i];
          const double vb = b[(y + j) * width + x + i];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      const double var_a = saa - ma * ma;
      const double var_b = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace tunnel::kernels::serial

#include <algorithm>
#include <cmath>
#include <limits>

#include "tunnel/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tunnel::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace omp {

void matmul(std::span<const double> a, std::span<const double> b, std::span<const double> bias,
            std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (long i = 0; i < rows; ++i) {
    double* crow = c.data() + i * n;
    if (bias.empty()) {
      std::fill(crow, crow + n, 0.0);
    } else {
      std::copy(bias.begin(), bias.end(), crow);
    }
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void attention(std::span<const double> q, std::span<const double> k, std::span<const double> v,
               std::span<double> probs, std::span<double> out, std::size_t m, std::size_t n,
               std::size_t d, std::size_t dv, double scale) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * (d + dv) > 32768)
  for (long i = 0; i < rows; ++i) {
    double* prow = probs.data() + i * n;
    const double* qrow = q.data() + i * d;
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const double* krow = k.data() + j * d;
      double dot = 0.0;
      for (std::size_t p = 0; p < d; ++p) dot += qrow[p] * krow[p];
      prow[j] = dot * scale;
      row_max = std::max(row_max, prow[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      prow[j] = std::exp(prow[j] - row_max);
      total += prow[j];
    }
    const double inv = 1.0 / total;
    double* orow = out.data() + i * dv;
    std::fill(orow, orow + dv, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      prow[j] *= inv;
      const double pj = prow[j];
      const double* vrow = v.data() + j * dv;
      for (std::size_t p = 0; p < dv; ++p) orow[p] += pj * vrow[p];
    }
  }
}

void conv2d(std::span<const double> input, std::span<const double> weight, std::span<const double> bias,
            std::span<double> out, const ConvShape& s) {
  const long oh = static_cast<long>(s.out_height());
  const long ow = static_cast<long>(s.out_width());
  const long planes = static_cast<long>(s.out_channels) * oh;
  const long kk = static_cast<long>(s.kernel);
  const long h = static_cast<long>(s.height);
  const long w = static_cast<long>(s.width);
#pragma omp parallel for schedule(static) if (planes * ow * kk * kk > 32768)
  for (long job = 0; job < planes; ++job) {
    const long co = job / oh;
    const long oy = job % oh;
    double* orow = out.data() + job * ow;
    std::fill(orow, orow + ow, bias.empty() ? 0.0 : bias[co]);
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      const double* wk = weight.data() + (co * s.in_channels + ci) * kk * kk;
      const double* plane = input.data() + ci * h * w;
      for (long ky = 0; ky < kk; ++ky) {
        const long iy = oy * static_cast<long>(s.stride) + ky - static_cast<long>(s.pad);
        if (iy < 0 || iy >= h) continue;
        for (long kx = 0; kx < kk; ++kx) {
          const double wt = wk[ky * kk + kx];
          for (long ox = 0; ox < ow; ++ox) {
            const long ix = ox * static_cast<long>(s.stride) + kx - static_cast<long>(s.pad);
            if (ix >= 0 && ix < w) orow[ox] += wt * plane[iy * w + ix];
          }
        }
      }
    }
  }
}

Image resample(const Image& src, const ResampleSpec& spec) {
  Image out(spec.out_width, spec.out_height, src.channels, 0.0);
  const int ch = src.channels;
#pragma omp parallel for schedule(static) if (static_cast<long>(spec.out_width) * spec.out_height > 4096)
  for (int v = 0; v < spec.out_height; ++v) {
    const double sy = spec.y.offset + spec.y.step * v;
    if (sy < spec.fill_y.lo || sy > spec.fill_y.hi) continue;
    const double cy = std::clamp(sy, spec.clamp_y.lo, spec.clamp_y.hi);
    const int y0 = static_cast<int>(std::floor(cy));
    const double fy = cy - y0;
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double* r0 = src.data.data() + static_cast<std::size_t>(y0) * src.width * ch;
    const double* r1 = src.data.data() + static_cast<std::size_t>(y1) * src.width * ch;
    double* orow = out.data.data() + static_cast<std::size_t>(v) * spec.out_width * ch;
    for (int u = 0; u < spec.out_width; ++u) {
      const double sx = spec.x.offset + spec.x.step * u;
      if (sx < spec.fill_x.lo || sx > spec.fill_x.hi) continue;
      const double cx = std::clamp(sx, spec.clamp_x.lo, spec.clamp_x.hi);
      const int x0 = static_cast<int>(std::floor(cx));
      const double fx = cx - x0;
      const int x1 = std::min(x0 + 1, src.width - 1);
      for (int c = 0; c < ch; ++c) {
        // Zero-weight taps are skipped so exact-grid samples reproduce the source bit for bit.
        double top = r0[x0 * ch + c] * (1.0 - fx);
        double bot = r1[x0 * ch + c] * (1.0 - fx);
        if (fx > 0.0) {
          top += r0[x1 * ch + c] * fx;
          bot += r1[x1 * ch + c] * fx;
        }
        orow[u * ch + c] = fy > 0.0 ? top * (1.0 - fy) + bot * fy : top;
      }
    }
  }
  return out;
}

void blur_separable(std::span<const double> plane, std::span<double> out, int width, int height,
                    std::span<const double> kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(plane.size(), 0.0);
#pragma omp parallel for schedule(static) if (static_cast<long>(width) * height > 4096)
  for (int y = 0; y < height; ++y) {
    const double* row = plane.data() + static_cast<std::size_t>(y) * width;
    double* trow = tmp.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const int lo = std::max(-r, -x);
      const int hi = std::min(r, width - 1 - x);
      double acc = 0.0;
      for (int k = lo; k <= hi; ++k) acc += kernel[k + r] * row[x + k];
      trow[x] = acc;
    }
  }
#pragma omp parallel for schedule(static) if (static_cast<long>(width) * height > 4096)
  for (int y = 0; y < height; ++y) {
    const int lo = std::max(-r, -y);
    const int hi = std::min(r, height - 1 - y);
    double* orow = out.data() + static_cast<std::size_t>(y) * width;
    std::fill(orow, orow + width, 0.0);
    for (int k = lo; k <= hi; ++k) {
      const double wt = kernel[k + r];
      const double* trow = tmp.data() + static_cast<std::size_t>(y + k) * width;
      for (int x = 0; x < width; ++x) orow[x] += wt * trow[x];
    }
  }
}

double ssim_mean(std::span<const double> a, std::span<const double> b, int width, int height,
                 std::span<const double> w, double c1, double c2) {
  // Weighted moments via a horizontal then vertical pass over the valid region.
  const int win = static_cast<int>(w.size());
  const int ow = width - win + 1;
  const int oh = height - win + 1;
  const std::size_t hsize = static_cast<std::size_t>(height) * ow;
  std::vector<double> h_a(hsize), h_b(hsize), h_aa(hsize), h_bb(hsize), h_ab(hsize);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const double* ra = a.data() + static_cast<std::size_t>(y) * width;
    const double* rb = b.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < win; ++i) {
        const double va = ra[x + i];
        const double vb = rb[x + i];
        ma += w[i] * va;
        mb += w[i] * vb;
        saa += w[i] * va * va;
        sbb += w[i] * vb * vb;
        sab += w[i] * va * vb;
      }
      const std::size_t idx = static_cast<std::size_t>(y) * ow + x;
      h_a[idx] = ma;
      h_b[idx] = mb;
      h_aa[idx] = saa;
      h_bb[idx] = sbb;
      h_ab[idx] = sab;
    }
  }
  std::vector<double> row_sums(static_cast<std::size_t>(oh), 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) {
    double acc = 0.0;
    for (int x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int j = 0; j < win; ++j) {
        const std::size_t idx = static_cast<std::size_t>(y + j) * ow + x;
        ma += w[j] * h_a[idx];
        mb += w[j] * h_b[idx];
        saa += w[j] * h_aa[idx];
        sbb += w[j] * h_bb[idx];
        sab += w[j] * h_ab[idx];
      }
      const double var_a = saa - ma * ma;
      const double var_b = sbb - mb * mb;
      const double cov = sab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    row_sums[y] = acc;
  }
  double total = 0.0;
  for (double s : row_sums) total += s;
  return total / (static_cast<double>(ow) * oh);
}

}  // namespace omp
}  // namespace tunnel::kernels

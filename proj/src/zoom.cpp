#include "tunnel/zoom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tunnel/error.hpp"
#include "tunnel/kernels.hpp"

namespace tunnel {

namespace {

// Index of the first / last pixel whose center lies in [lo, hi].
double center_lo(double lo) { return std::ceil(lo - 0.5 - 1e-9); }
double center_hi(double hi) { return std::floor(hi - 0.5 + 1e-9); }

}  // namespace

Image to_luma(const Image& img) {
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.channels >= 3) {
        out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      } else {
        out.at(x, y) = img.at(x, y, 0);
      }
    }
  }
  return out;
}

std::pair<Image, ZoomMap> crop_pad_resize(const Image& frame, const BBox& b, FrameSize out_size) {
  if (out_size.width <= 0 || out_size.height <= 0) fail(ErrorCode::InvalidArgument, "out_size must be positive");
  if (!(b.area() >= 1.0)) fail(ErrorCode::DegenerateBox, "crop box area is below one pixel");
  if (!b.within(frame.size(), 1e-9)) fail(ErrorCode::InvalidArgument, "crop box leaves the frame");

  ZoomMap map;
  map.source_box = b;
  map.out_size = out_size;
  const double out_aspect = static_cast<double>(out_size.width) / out_size.height;
  if (b.width() / b.height() < out_aspect) {
    const double pad = 0.5 * (b.height() * out_aspect - b.width());
    map.pad_left = map.pad_right = pad;
  } else {
    const double pad = 0.5 * (b.width() / out_aspect - b.height());
    map.pad_top = map.pad_bottom = pad;
  }
  map.sx = out_size.width / (b.width() + map.pad_left + map.pad_right);
  map.sy = out_size.height / (b.height() + map.pad_top + map.pad_bottom);

  kernels::ResampleSpec spec;
  spec.out_width = out_size.width;
  spec.out_height = out_size.height;
  spec.x = {b.x0 - map.pad_left + 0.5 / map.sx - 0.5, 1.0 / map.sx};
  spec.y = {b.y0 - map.pad_top + 0.5 / map.sy - 0.5, 1.0 / map.sy};
  spec.fill_x = {b.x0 - 0.5, b.x1 - 0.5};
  spec.fill_y = {b.y0 - 0.5, b.y1 - 0.5};
  // Only pixels whose centers lie in the box are sampled.
  spec.clamp_x = {std::max(0.0, center_lo(b.x0)), std::min(frame.width - 1.0, center_hi(b.x1))};
  spec.clamp_y = {std::max(0.0, center_lo(b.y0)), std::min(frame.height - 1.0, center_hi(b.y1))};
  spec.clamp_x.lo = std::min(spec.clamp_x.lo, spec.clamp_x.hi);
  spec.clamp_y.lo = std::min(spec.clamp_y.lo, spec.clamp_y.hi);
  return {kernels::omp::resample(frame, spec), map};
}

PixelRect pixel_hull(const BBox& b) {
  const int x0 = static_cast<int>(std::floor(b.x0));
  const int y0 = static_cast<int>(std::floor(b.y0));
  const int x1 = static_cast<int>(std::ceil(b.x1));
  const int y1 = static_cast<int>(std::ceil(b.y1));
  return {x0, y0, std::max(x1 - x0, 1), std::max(y1 - y0, 1)};
}

Image unzoom_region(const Image& patch, const ZoomMap& map, const PixelRect& region) {
  if (patch.width != map.out_size.width || patch.height != map.out_size.height) {
    fail(ErrorCode::SizeMismatch, "patch size does not match the zoom map");
  }
  const BBox& b = map.source_box;
  kernels::ResampleSpec spec;
  spec.out_width = region.width;
  spec.out_height = region.height;
  spec.x = {(region.x + 0.5 - b.x0 + map.pad_left) * map.sx - 0.5, map.sx};
  spec.y = {(region.y + 0.5 - b.y0 + map.pad_top) * map.sy - 0.5, map.sy};
  spec.clamp_x = {std::max(0.0, center_lo(map.pad_left * map.sx)),
                  std::min(patch.width - 1.0, center_hi((map.pad_left + b.width()) * map.sx))};
  spec.clamp_y = {std::max(0.0, center_lo(map.pad_top * map.sy)),
                  std::min(patch.height - 1.0, center_hi((map.pad_top + b.height()) * map.sy))};
  spec.clamp_x.lo = std::min(spec.clamp_x.lo, spec.clamp_x.hi);
  spec.clamp_y.lo = std::min(spec.clamp_y.lo, spec.clamp_y.hi);
  return kernels::omp::resample(patch, spec);
}

Image unzoom(const Image& patch, const ZoomMap& map) {
  return unzoom_region(patch, map, pixel_hull(map.source_box));
}

Image resize(const Image& img, FrameSize size) {
  if (size.width <= 0 || size.height <= 0) fail(ErrorCode::InvalidArgument, "resize target must be positive");
  kernels::ResampleSpec spec;
  spec.out_width = size.width;
  spec.out_height = size.height;
  const double step_x = static_cast<double>(img.width) / size.width;
  const double step_y = static_cast<double>(img.height) / size.height;
  spec.x = {0.5 * step_x - 0.5, step_x};
  spec.y = {0.5 * step_y - 0.5, step_y};
  spec.clamp_x = {0.0, img.width - 1.0};
  spec.clamp_y = {0.0, img.height - 1.0};
  return kernels::omp::resample(img, spec);
}

std::vector<double> gaussian_taps(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  const auto cdf = [sigma](double x) { return 0.5 * std::erfc(-x / (sigma * std::sqrt(2.0))); };
  std::vector<double> taps(2 * r + 1);
  double total = 0.0;
  for (int k = -r; k <= r; ++k) {
    taps[k + r] = cdf(k + 0.5) - cdf(k - 0.5);
    total += taps[k + r];
  }
  for (double& t : taps) t /= total;
  return taps;
}

Image feather_mask(const BBox& b, double sigma, FrameSize size) {
  if (sigma < 0.0) fail(ErrorCode::InvalidArgument, "sigma must be >= 0");
  Image mask(size.width, size.height, 1, 0.0);
  for (int y = 0; y < size.height; ++y) {
    const double cy = y + 0.5;
    if (cy < b.y0 || cy >= b.y1) continue;
    for (int x = 0; x < size.width; ++x) {
      const double cx = x + 0.5;
      if (cx >= b.x0 && cx < b.x1) mask.at(x, y) = 1.0;
    }
  }
  if (sigma == 0.0) return mask;
  Image blurred(size.width, size.height, 1, 0.0);
  const auto taps = gaussian_taps(sigma);
  kernels::omp::blur_separable(mask.data, blurred.data, size.width, size.height, taps);
  // Rounding leaves the interior a few ulps short of 1.
  for (double& v : blurred.data) v = v > 1.0 - 1e-12 ? 1.0 : std::max(v, 0.0);
  return blurred;
}

std::vector<Image> tunnel_blend(const std::vector<Image>& originals, const std::vector<Image>& patches,
                                const std::vector<ZoomMap>& maps, double sigma) {
  if (originals.size() != patches.size() || originals.size() != maps.size()) {
    fail(ErrorCode::LengthMismatch, "originals, patches and maps must have equal length");
  }
  if (sigma < 0.0) fail(ErrorCode::InvalidArgument, "sigma must be >= 0");
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (patches[i].width != maps[i].out_size.width || patches[i].height != maps[i].out_size.height ||
        patches[i].channels != originals[i].channels) {
      fail(ErrorCode::SizeMismatch, "patch " + std::to_string(i) + " does not match its zoom map or frame");
    }
  }
  const int radius = sigma > 0.0 ? static_cast<int>(std::ceil(3.0 * sigma)) : 0;
  std::vector<Image> out(originals.size());
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const Image& orig = originals[i];
    const Image mask = feather_mask(maps[i].source_box, sigma, orig.size());
    const PixelRect hull = pixel_hull(maps[i].source_box);
    const int x0 = std::max(hull.x - radius, 0);
    const int y0 = std::max(hull.y - radius, 0);
    const int x1 = std::min(hull.x + hull.width + radius, orig.width);
    const int y1 = std::min(hull.y + hull.height + radius, orig.height);
    Image result = orig;
    if (x1 > x0 && y1 > y0) {
      const Image gen = unzoom_region(patches[i], maps[i], {x0, y0, x1 - x0, y1 - y0});
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double m = mask.at(x, y);
          if (m == 0.0) continue;
          for (int c = 0; c < orig.channels; ++c) {
            result.at(x, y, c) = m * gen.at(x - x0, y - y0, c) + (1.0 - m) * orig.at(x, y, c);
          }
        }
      }
    }
    out[i] = std::move(result);
  }
  return out;
}

}  // namespace tunnel

#pragma once

#include <cstddef>
#include <vector>

#include "tunnel/geometry.hpp"

namespace tunnel {

/// Row-major interleaved samples in [0, 1]: data[(y * width + x) * channels + c].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  FrameSize size() const { return {width, height}; }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Rec.601 luma for 3-channel images; first channel otherwise.
Image to_luma(const Image& img);

}  // namespace tunnel

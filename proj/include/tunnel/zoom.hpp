#pragma once

#include <utility>
#include <vector>

#include "tunnel/geometry.hpp"
#include "tunnel/image.hpp"

namespace tunnel {

/// Parameters of one zoom: the source box, the zero padding added on its short
/// axis (source pixels), and the source-to-output scale.
struct ZoomMap {
  BBox source_box;
  double pad_left = 0.0;
  double pad_right = 0.0;
  double pad_top = 0.0;
  double pad_bottom = 0.0;
  FrameSize out_size;
  double sx = 1.0;
  double sy = 1.0;
};

/// Crops `b`, zero-pads the short axis symmetrically to the output aspect and
/// resamples bilinearly to `out_size`.
std::pair<Image, ZoomMap> crop_pad_resize(const Image& frame, const BBox& b, FrameSize out_size);

/// Integer pixel hull of a box: origin floor(x0), floor(y0); extent up to ceil(x1), ceil(y1).
struct PixelRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

PixelRect pixel_hull(const BBox& b);

/// Maps a generated patch back to source resolution over an arbitrary frame-space rectangle.
/// Samples outside the box are clamped to the unpadded part of the patch.
Image unzoom_region(const Image& patch, const ZoomMap& map, const PixelRect& region);

/// Inverse of crop_pad_resize over the pixel hull of the source box.
Image unzoom(const Image& patch, const ZoomMap& map);

/// Plain bilinear resize with pixel-center alignment and edge clamping.
Image resize(const Image& img, FrameSize size);

/// Binary inside-box mask (pixel centers in [x0,x1) x [y0,y1)) blurred with a
/// Gaussian of std `sigma`, radius ceil(3 sigma). Single channel, values in [0,1].
Image feather_mask(const BBox& b, double sigma, FrameSize size);

/// Pixel-integrated Gaussian taps of radius ceil(3 sigma), normalized to sum 1.
std::vector<double> gaussian_taps(double sigma);

/// out = m * unzoom(patch) + (1 - m) * original per frame, m = feather_mask(box, sigma).
std::vector<Image> tunnel_blend(const std::vector<Image>& originals, const std::vector<Image>& patches,
                                const std::vector<ZoomMap>& maps, double sigma);

}  // namespace tunnel

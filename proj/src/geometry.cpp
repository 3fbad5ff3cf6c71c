#include "tunnel/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tunnel/error.hpp"

namespace tunnel {

bool BBox::contains(const BBox& o, double tol) const {
  return o.x0 >= x0 - tol && o.y0 >= y0 - tol && o.x1 <= x1 + tol && o.y1 <= y1 + tol;
}

bool BBox::contains_point(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }

bool BBox::within(FrameSize frame, double tol) const {
  return x0 <= x1 && y0 <= y1 && x0 >= -tol && y0 >= -tol && x1 <= frame.width + tol &&
         y1 <= frame.height + tol;
}

BBox BBox::from_center(double cx, double cy, double w, double h) {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

const KeypointSubset& upper_body_keypoints() {
  static const KeypointSubset kUpper{"left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
                                     "left_wrist",    "right_wrist",    "left_hip",   "right_hip"};
  return kUpper;
}

const KeypointSubset& lower_body_keypoints() {
  static const KeypointSubset kLower{"left_hip",  "right_hip",   "left_knee",
                                     "right_knee", "left_ankle", "right_ankle"};
  return kLower;
}

BBox bbox_from_keypoints(const std::vector<Keypoint>& keypoints, const KeypointSubset& subset,
                         double conf_threshold) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  BBox box{kInf, kInf, -kInf, -kInf};
  bool any = false;
  for (const auto& kp : keypoints) {
    if (kp.conf < conf_threshold || !subset.contains(kp.name)) continue;
    if (!std::isfinite(kp.x) || !std::isfinite(kp.y)) continue;
    box.x0 = std::min(box.x0, kp.x);
    box.y0 = std::min(box.y0, kp.y);
    box.x1 = std::max(box.x1, kp.x);
    box.y1 = std::max(box.y1, kp.y);
    any = true;
  }
  if (!any) fail(ErrorCode::NoQualifyingKeypoints, "no keypoint passes the confidence threshold");
  return box;
}

BBox clamp_to_frame(const BBox& b, FrameSize frame) {
  const double w = frame.width;
  const double h = frame.height;
  BBox out{std::clamp(b.x0, 0.0, w), std::clamp(b.y0, 0.0, h), std::clamp(b.x1, 0.0, w),
           std::clamp(b.y1, 0.0, h)};
  return out;
}

BBox expand_bbox(const BBox& b, double margin_ratio, FrameSize frame) {
  if (margin_ratio < 0.0) fail(ErrorCode::InvalidArgument, "margin_ratio must be >= 0");
  const double dx = margin_ratio * b.width();
  const double dy = margin_ratio * b.height();
  return clamp_to_frame({b.x0 - dx, b.y0 - dy, b.x1 + dx, b.y1 + dy}, frame);
}

namespace {

// Places an interval of length `len` centered on `center` inside [0, limit].
// Returns the original interval hull when len exceeds the limit.
std::pair<double, double> place_interval(double center, double len, double limit) {
  if (len >= limit) return {0.0, limit};
  double lo = center - 0.5 * len;
  double hi = center + 0.5 * len;
  if (lo < 0.0) {
    hi -= lo;
    lo = 0.0;
  }
  if (hi > limit) {
    lo -= hi - limit;
    hi = limit;
  }
  return {std::max(lo, 0.0), hi};
}

}  // namespace

BBox fit_aspect(const BBox& b, double target_aspect, FrameSize frame) {
  if (!(target_aspect > 0.0)) fail(ErrorCode::InvalidArgument, "target_aspect must be > 0");
  double w = b.width();
  double h = b.height();
  if (w <= 0.0 && h <= 0.0) {
    w = h = 1.0;
  }
  if (w / std::max(h, 1e-300) < target_aspect) {
    w = h * target_aspect;
  } else {
    h = w / target_aspect;
  }
  auto [x0, x1] = place_interval(b.cx(), w, frame.width);
  auto [y0, y1] = place_interval(b.cy(), h, frame.height);
  // Shifting keeps the input covered as long as it was inside the frame.
  BBox out{std::min(x0, std::max(b.x0, 0.0)), std::min(y0, std::max(b.y0, 0.0)),
           std::max(x1, std::min(b.x1, static_cast<double>(frame.width))),
           std::max(y1, std::min(b.y1, static_cast<double>(frame.height)))};
  return out;
}

}  // namespace tunnel

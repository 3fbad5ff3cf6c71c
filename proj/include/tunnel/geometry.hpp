#pragma once

#include <set>
#include <string>
#include <vector>

namespace tunnel {

struct Keypoint {
  std::string name;
  double x = 0.0;
  double y = 0.0;
  double conf = 0.0;
};

struct FrameSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

struct PoseFrame {
  int frame_index = 0;
  FrameSize size;
  std::vector<Keypoint> keypoints;
};

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
struct BBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }

  bool contains(const BBox& other, double tol = 0.0) const;
  bool contains_point(double x, double y) const;
  bool within(FrameSize frame, double tol = 0.0) const;

  static BBox from_center(double cx, double cy, double w, double h);

  friend bool operator==(const BBox&, const BBox&) = default;
};

using KeypointSubset = std::set<std::string>;

/// COCO-17 subsets used to locate the garment region.
const KeypointSubset& upper_body_keypoints();
const KeypointSubset& lower_body_keypoints();

/// Tight min/max rectangle over keypoints in `subset` with conf >= threshold.
/// Throws NoQualifyingKeypoints when none qualify.
BBox bbox_from_keypoints(const std::vector<Keypoint>& keypoints, const KeypointSubset& subset,
                         double conf_threshold);

/// Moves every side outward by margin_ratio times the box dimension, then clamps to the frame.
BBox expand_bbox(const BBox& b, double margin_ratio, FrameSize frame);

/// Grows the shorter axis around the box center until width/height == target_aspect,
/// shifting to stay inside the frame and clamping when the frame is too small.
BBox fit_aspect(const BBox& b, double target_aspect, FrameSize frame);

BBox clamp_to_frame(const BBox& b, FrameSize frame);

}  // namespace tunnel

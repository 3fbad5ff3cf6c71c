#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "tunnel/geometry.hpp"

namespace tunnel {

enum class GarmentClass { Upper, Lower, Dress };

GarmentClass parse_garment(std::string_view name);
std::string_view to_string(GarmentClass garment);
KeypointSubset keypoints_for(GarmentClass garment);

/// Per-frame crop boxes around the garment: the focus tunnel.
struct Tunnel {
  FrameSize frame_size;
  std::vector<BBox> boxes;

  std::size_t size() const { return boxes.size(); }
};

struct ExtractParams {
  GarmentClass garment = GarmentClass::Upper;
  double margin_ratio = 0.2;
  double target_aspect = 1.0;
  double conf_threshold = 0.3;
};

/// Box for a single frame, or nullopt when no keypoint of the garment subset qualifies.
std::optional<BBox> frame_box(const PoseFrame& pose, const ExtractParams& params);

/// Builds the tunnel frame by frame (tight box, expand, aspect fit). Frames without
/// qualifying keypoints copy the nearest valid frame, the previous one on ties.
Tunnel extract_tunnel(const std::vector<PoseFrame>& poses, const ExtractParams& params);

}  // namespace tunnel

#include "tunnel/tunnel_extract.hpp"

#include <string>

#include "tunnel/error.hpp"

namespace tunnel {

GarmentClass parse_garment(std::string_view name) {
  if (name == "upper") return GarmentClass::Upper;
  if (name == "lower") return GarmentClass::Lower;
  if (name == "dress") return GarmentClass::Dress;
  fail(ErrorCode::InvalidArgument, "unknown garment class '" + std::string(name) + "'");
}

std::string_view to_string(GarmentClass garment) {
  switch (garment) {
    case GarmentClass::Upper: return "upper";
    case GarmentClass::Lower: return "lower";
    case GarmentClass::Dress: return "dress";
  }
  return "upper";
}

KeypointSubset keypoints_for(GarmentClass garment) {
  switch (garment) {
    case GarmentClass::Upper: return upper_body_keypoints();
    case GarmentClass::Lower: return lower_body_keypoints();
    case GarmentClass::Dress: {
      KeypointSubset all = upper_body_keypoints();
      all.insert(lower_body_keypoints().begin(), lower_body_keypoints().end());
      return all;
    }
  }
  return upper_body_keypoints();
}

std::optional<BBox> frame_box(const PoseFrame& pose, const ExtractParams& params) {
  const KeypointSubset subset = keypoints_for(params.garment);
  BBox tight;
  try {
    tight = bbox_from_keypoints(pose.keypoints, subset, params.conf_threshold);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoQualifyingKeypoints) return std::nullopt;
    throw;
  }
  const BBox clamped = clamp_to_frame(tight, pose.size);
  const BBox expanded = expand_bbox(clamped, params.margin_ratio, pose.size);
  return fit_aspect(expanded, params.target_aspect, pose.size);
}

Tunnel extract_tunnel(const std::vector<PoseFrame>& poses, const ExtractParams& params) {
  if (poses.empty()) fail(ErrorCode::EmptyTunnel, "pose sequence is empty");
  const FrameSize size = poses.front().size;
  if (size.width <= 0 || size.height <= 0) fail(ErrorCode::InvalidArgument, "frame size must be positive");
  for (const auto& p : poses) {
    if (p.size != size) {
      fail(ErrorCode::SizeMismatch, "frame " + std::to_string(p.frame_index) + " has a different size");
    }
  }

  if (params.margin_ratio < 0.0) fail(ErrorCode::InvalidArgument, "margin_ratio must be >= 0");
  if (!(params.target_aspect > 0.0)) fail(ErrorCode::InvalidArgument, "target_aspect must be > 0");

  const auto n = static_cast<long>(poses.size());
  std::vector<std::optional<BBox>> found(poses.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    found[i] = frame_box(poses[i], params);
  }

  // Distance to the nearest valid frame on each side.
  std::vector<long> prev(poses.size(), -1);
  std::vector<long> next(poses.size(), -1);
  long last = -1;
  for (long i = 0; i < n; ++i) {
    if (found[i]) last = i;
    prev[i] = last;
  }
  last = -1;
  for (long i = n - 1; i >= 0; --i) {
    if (found[i]) last = i;
    next[i] = last;
  }
  if (prev[n - 1] < 0) fail(ErrorCode::EmptyTunnel, "no frame has qualifying keypoints");

  Tunnel tunnel{size, {}};
  tunnel.boxes.reserve(poses.size());
  for (long i = 0; i < n; ++i) {
    long src = prev[i];
    if (src < 0 || (next[i] >= 0 && next[i] - i < i - src)) src = next[i];
    tunnel.boxes.push_back(*found[src]);
  }
  return tunnel;
}

}  // namespace tunnel

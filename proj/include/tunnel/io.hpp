#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tunnel/image.hpp"
#include "tunnel/tensor_io.hpp"
#include "tunnel/tunnel_extract.hpp"
#include "tunnel/zoom.hpp"

namespace tunnel::io {

namespace fs = std::filesystem;

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

/// frame_%06d.png
std::string frame_name(int index);

/// 8-bit RGB PNG; samples map linearly to [0, 1]. Gray images are replicated to RGB on write.
Image read_png(const fs::path& path);
std::string encode_png(const Image& img);
void write_png(const fs::path& path, const Image& img);

/// Top-level array of {"frame", "width", "height", "keypoints": [{"name","x","y","conf"}]}.
std::vector<PoseFrame> parse_poses(const std::string& json_text);
std::vector<PoseFrame> read_poses(const fs::path& path);
std::string poses_json(const std::vector<PoseFrame>& poses);

/// One {"frame", "cx", "cy", "w", "h"} object per line.
std::string tunnel_jsonl(const Tunnel& t, int first_frame = 0);
std::string tunnel_jsonl(const Tunnel& t, const std::vector<int>& frames);
/// The "frame" field of every line.
std::vector<int> tunnel_frames(const std::string& text);
Tunnel parse_tunnel_jsonl(const std::string& text, FrameSize frame);
Tunnel read_tunnel(const fs::path& path, FrameSize frame);

std::string zoom_maps_json(const std::vector<ZoomMap>& maps);
std::vector<ZoomMap> parse_zoom_maps(const std::string& text);

void write_tensors(const fs::path& path, const NamedTensors& entries);
NamedTensors read_tensors(const fs::path& path);

/// Frames frame_%06d.png in `dir` for the given indices.
std::vector<Image> read_frames(const fs::path& dir, const std::vector<int>& indices);

}  // namespace tunnel::io

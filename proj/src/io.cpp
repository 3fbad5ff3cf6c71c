#include "tunnel/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tunnel/error.hpp"

namespace tunnel::io {

using nlohmann::json;
using nlohmann::ordered_json;

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.png", index);
  return buf;
}

Image read_png(const fs::path& path) {
  const std::string bytes = read_file(path);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    fail(ErrorCode::Io, path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    fail(ErrorCode::Io, path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), 3);
  for (std::size_t i = 0; i < buffer.size(); ++i) out.data[i] = buffer[i] / 255.0;
  return out;
}

std::string encode_png(const Image& src) {
  const Image* img = &src;
  Image rgb;
  if (src.channels != 3) {
    rgb = Image(src.width, src.height, 3);
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) {
        for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = src.at(x, y, std::min(c, src.channels - 1));
      }
    }
    img = &rgb;
  }
  std::vector<png_byte> pixels(img->data.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<png_byte>(std::lround(std::clamp(img->data[i], 0.0, 1.0) * 255.0));
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(img->width);
  out.height = static_cast<png_uint_32>(img->height);
  out.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&out, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    fail(ErrorCode::Io, std::string("PNG encode failed: ") + out.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&out, bytes.data(), &size, 0, pixels.data(), 0, nullptr)) {
    fail(ErrorCode::Io, std::string("PNG encode failed: ") + out.message);
  }
  bytes.resize(size);
  return bytes;
}

void write_png(const fs::path& path, const Image& img) { write_file_atomic(path, encode_png(img)); }

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) fail(ErrorCode::Parse, where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, where + ": field '" + key + "': " + e.what());
  }
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, what + ": " + e.what());
  }
}

}  // namespace

std::vector<PoseFrame> parse_poses(const std::string& text) {
  const json doc = parse_json(text, "pose JSON");
  if (!doc.is_array()) fail(ErrorCode::Parse, "pose JSON must be a top-level array");
  std::vector<PoseFrame> poses;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "pose entry " + std::to_string(i);
    const json& e = doc[i];
    PoseFrame p;
    p.frame_index = field<int>(e, "frame", where);
    p.size = {field<int>(e, "width", where), field<int>(e, "height", where)};
    if (p.frame_index < 0) fail(ErrorCode::Parse, where + ": negative frame index");
    if (p.size.width <= 0 || p.size.height <= 0) fail(ErrorCode::Parse, where + ": frame size must be positive");
    const json kps = field<json>(e, "keypoints", where);
    if (!kps.is_array()) fail(ErrorCode::Parse, where + ": keypoints must be an array");
    for (const json& k : kps) {
      Keypoint kp{field<std::string>(k, "name", where), field<double>(k, "x", where), field<double>(k, "y", where),
                  field<double>(k, "conf", where)};
      if (!std::isfinite(kp.x) || !std::isfinite(kp.y) || !(kp.conf >= 0.0 && kp.conf <= 1.0)) {
        fail(ErrorCode::Parse, where + ": keypoint '" + kp.name + "' out of range");
      }
      p.keypoints.push_back(std::move(kp));
    }
    poses.push_back(std::move(p));
  }
  std::sort(poses.begin(), poses.end(), [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (poses[i].frame_index == poses[i - 1].frame_index) {
      fail(ErrorCode::Parse, "duplicate pose entry for frame " + std::to_string(poses[i].frame_index));
    }
  }
  return poses;
}

std::vector<PoseFrame> read_poses(const fs::path& path) { return parse_poses(read_file(path)); }

std::string poses_json(const std::vector<PoseFrame>& poses) {
  ordered_json doc = ordered_json::array();
  for (const auto& p : poses) {
    ordered_json e;
    e["frame"] = p.frame_index;
    e["width"] = p.size.width;
    e["height"] = p.size.height;
    e["keypoints"] = ordered_json::array();
    for (const auto& k : p.keypoints) {
      e["keypoints"].push_back({{"name", k.name}, {"x", k.x}, {"y", k.y}, {"conf", k.conf}});
    }
    doc.push_back(std::move(e));
  }
  return doc.dump(1) + "\n";
}

std::string tunnel_jsonl(const Tunnel& t, int first_frame) {
  std::vector<int> frames(t.boxes.size());
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = first_frame + static_cast<int>(i);
  return tunnel_jsonl(t, frames);
}

std::string tunnel_jsonl(const Tunnel& t, const std::vector<int>& frames) {
  if (frames.size() != t.boxes.size()) fail(ErrorCode::LengthMismatch, "one frame index per box required");
  std::string out;
  for (std::size_t i = 0; i < t.boxes.size(); ++i) {
    const BBox& b = t.boxes[i];
    ordered_json line;
    line["frame"] = frames[i];
    line["cx"] = b.cx();
    line["cy"] = b.cy();
    line["w"] = b.width();
    line["h"] = b.height();
    out += line.dump() + "\n";
  }
  return out;
}

Tunnel parse_tunnel_jsonl(const std::string& text, FrameSize frame) {
  Tunnel t{frame, {}};
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "tunnel line " + std::to_string(lineno);
    const json e = parse_json(line, where);
    t.boxes.push_back(BBox::from_center(field<double>(e, "cx", where), field<double>(e, "cy", where),
                                        field<double>(e, "w", where), field<double>(e, "h", where)));
  }
  if (t.boxes.empty()) fail(ErrorCode::EmptyTunnel, "tunnel file has no boxes");
  return t;
}

std::vector<int> tunnel_frames(const std::string& text) {
  std::vector<int> frames;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "tunnel line " + std::to_string(lineno);
    frames.push_back(field<int>(parse_json(line, where), "frame", where));
  }
  return frames;
}

Tunnel read_tunnel(const fs::path& path, FrameSize frame) { return parse_tunnel_jsonl(read_file(path), frame); }

std::string zoom_maps_json(const std::vector<ZoomMap>& maps) {
  ordered_json doc = ordered_json::array();
  for (const auto& m : maps) {
    ordered_json e;
    e["source_box"] = {m.source_box.x0, m.source_box.y0, m.source_box.x1, m.source_box.y1};
    e["pad"] = {m.pad_left, m.pad_right, m.pad_top, m.pad_bottom};
    e["out_size"] = {m.out_size.width, m.out_size.height};
    e["scale"] = {m.sx, m.sy};
    doc.push_back(std::move(e));
  }
  return doc.dump(1) + "\n";
}

std::vector<ZoomMap> parse_zoom_maps(const std::string& text) {
  const json doc = parse_json(text, "zoom maps");
  if (!doc.is_array()) fail(ErrorCode::Parse, "zoom maps must be an array");
  std::vector<ZoomMap> maps;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "zoom map " + std::to_string(i);
    const auto box = field<std::vector<double>>(doc[i], "source_box", where);
    const auto pad = field<std::vector<double>>(doc[i], "pad", where);
    const auto out = field<std::vector<int>>(doc[i], "out_size", where);
    const auto scale = field<std::vector<double>>(doc[i], "scale", where);
    if (box.size() != 4 || pad.size() != 4 || out.size() != 2 || scale.size() != 2) {
      fail(ErrorCode::Parse, where + ": wrong array lengths");
    }
    maps.push_back({{box[0], box[1], box[2], box[3]}, pad[0], pad[1], pad[2], pad[3], {out[0], out[1]}, scale[0],
                    scale[1]});
  }
  return maps;
}

void write_tensors(const fs::path& path, const NamedTensors& entries) {
  write_file_atomic(path, encode_tensors(entries));
}

NamedTensors read_tensors(const fs::path& path) { return decode_tensors(read_file(path)); }

std::vector<Image> read_frames(const fs::path& dir, const std::vector<int>& indices) {
  std::vector<Image> frames;
  frames.reserve(indices.size());
  for (int i : indices) {
    const fs::path p = dir / frame_name(i);
    if (!fs::exists(p)) fail(ErrorCode::Io, "missing frame " + p.string());
    frames.push_back(read_png(p));
  }
  return frames;
}

}  // namespace tunnel::io

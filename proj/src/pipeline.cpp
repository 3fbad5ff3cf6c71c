#include "tunnel/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <random>

#include "tunnel/denoiser.hpp"
#include "tunnel/diffusion.hpp"
#include "tunnel/embedding.hpp"
#include "tunnel/io.hpp"
#include "tunnel/metrics.hpp"
#include "tunnel/zoom.hpp"

namespace tunnel::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

KalmanParams PipelineConfig::kalman() const { return {kalman_q, kalman_r, p0, update_mode}; }

ExtractParams PipelineConfig::extract() const { return {garment, margin_ratio, target_aspect, conf_threshold}; }

SmoothParams PipelineConfig::smooth() const { return {kalman(), lowpass_window, target_aspect}; }

void PipelineConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidArgument, "config: " + what); };
  if (margin_ratio < 0.0) bad("margin_ratio must be >= 0");
  if (!(target_aspect > 0.0)) bad("target_aspect must be > 0");
  if (!(kalman_q > 0.0) || !(kalman_r > 0.0)) bad("kalman_q and kalman_r must be > 0");
  if (lowpass_window < 1 || lowpass_window % 2 == 0) bad("lowpass_window must be odd and positive");
  if (out_size.width <= 0 || out_size.height <= 0) bad("out_size must be positive");
  if (blend_sigma < 0.0) bad("blend_sigma must be >= 0");
  if (clip_length == 0 || stride == 0) bad("clip_length and stride must be positive");
  if (stride > clip_length) bad("stride must not exceed clip_length");
  if (denoise_size < 2 || denoise_size % 2 != 0) bad("denoise_size must be a positive even number");
  if (schedule_steps < 1 || denoise_steps < 0 || denoise_steps > schedule_steps) bad("need 0 <= denoise_steps <= schedule_steps");
  if (!(beta_start >= 0.0 && beta_start <= beta_end && beta_end < 1.0)) bad("need 0 <= beta_start <= beta_end < 1");
  if (channels == 0) bad("channels must be positive");
}

namespace {

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, std::string("config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::Parse, "config must be a JSON object");
  PipelineConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "garment") c.garment = parse_garment(get<std::string>(j, "garment"));
    else if (key == "margin_ratio") c.margin_ratio = get<double>(j, "margin_ratio");
    else if (key == "target_aspect") c.target_aspect = get<double>(j, "target_aspect");
    else if (key == "conf_threshold") c.conf_threshold = get<double>(j, "conf_threshold");
    else if (key == "kalman_q") c.kalman_q = get<double>(j, "kalman_q");
    else if (key == "kalman_r") c.kalman_r = get<double>(j, "kalman_r");
    else if (key == "p0_mode") {
      if (value.is_string() && value.get<std::string>() == "paper_literal") {
        c.p0.reset();
      } else if (value.is_number()) {
        c.p0 = value.get<double>();
      } else {
        fail(ErrorCode::Parse, "config field 'p0_mode' must be \"paper_literal\" or a number");
      }
    } else if (key == "update_mode") {
      const auto mode = get<std::string>(j, "update_mode");
      if (mode == "standard") c.update_mode = CovarianceUpdate::Standard;
      else if (mode == "paper_literal") c.update_mode = CovarianceUpdate::PaperLiteral;
      else fail(ErrorCode::Parse, "config field 'update_mode' must be \"standard\" or \"paper_literal\"");
    } else if (key == "lowpass_window") c.lowpass_window = get<int>(j, "lowpass_window");
    else if (key == "out_size") {
      const auto v = get<std::vector<int>>(j, "out_size");
      if (v.size() != 2) fail(ErrorCode::Parse, "config field 'out_size' must be [width, height]");
      c.out_size = {v[0], v[1]};
    } else if (key == "blend_sigma") c.blend_sigma = get<double>(j, "blend_sigma");
    else if (key == "clip_length") c.clip_length = get<std::size_t>(j, "clip_length");
    else if (key == "stride") c.stride = get<std::size_t>(j, "stride");
    else if (key == "seed") c.seed = get<std::uint64_t>(j, "seed");
    else if (key == "stages") {
      if (!value.is_object()) fail(ErrorCode::Parse, "config field 'stages' must be an object");
      for (const auto& [stage, on] : value.items()) {
        if (!on.is_boolean()) fail(ErrorCode::Parse, "stage toggle '" + stage + "' must be a boolean");
        if (stage == "smooth") c.stages.smooth = on.get<bool>();
        else if (stage == "denoise") c.stages.denoise = on.get<bool>();
        else if (stage == "blend") c.stages.blend = on.get<bool>();
        else if (stage == "metrics") c.stages.metrics = on.get<bool>();
        else fail(ErrorCode::Parse, "unknown stage '" + stage + "'");
      }
    } else if (key == "denoise_size") c.denoise_size = get<int>(j, "denoise_size");
    else if (key == "denoise_steps") c.denoise_steps = get<int>(j, "denoise_steps");
    else if (key == "schedule_steps") c.schedule_steps = get<int>(j, "schedule_steps");
    else if (key == "beta_start") c.beta_start = get<double>(j, "beta_start");
    else if (key == "beta_end") c.beta_end = get<double>(j, "beta_end");
    else if (key == "channels") c.channels = get<std::size_t>(j, "channels");
    else if (key == "weights") c.weights = get<std::string>(j, "weights");
    else fail(ErrorCode::Parse, "unknown config field '" + key + "'");
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::optional<fs::path>& path) {
  if (!path) return {};
  return parse_config(io::read_file(*path));
}

std::string config_json(const PipelineConfig& c) {
  ordered_json j;
  j["garment"] = std::string(to_string(c.garment));
  j["margin_ratio"] = c.margin_ratio;
  j["target_aspect"] = c.target_aspect;
  j["conf_threshold"] = c.conf_threshold;
  j["kalman_q"] = c.kalman_q;
  j["kalman_r"] = c.kalman_r;
  if (c.p0) {
    j["p0_mode"] = *c.p0;
  } else {
    j["p0_mode"] = "paper_literal";
  }
  j["update_mode"] = c.update_mode == CovarianceUpdate::Standard ? "standard" : "paper_literal";
  j["lowpass_window"] = c.lowpass_window;
  j["out_size"] = {c.out_size.width, c.out_size.height};
  j["blend_sigma"] = c.blend_sigma;
  j["clip_length"] = c.clip_length;
  j["stride"] = c.stride;
  j["seed"] = c.seed;
  j["stages"] = {{"smooth", c.stages.smooth}, {"denoise", c.stages.denoise}, {"blend", c.stages.blend},
                 {"metrics", c.stages.metrics}};
  j["denoise_size"] = c.denoise_size;
  j["denoise_steps"] = c.denoise_steps;
  j["schedule_steps"] = c.schedule_steps;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["channels"] = c.channels;
  j["weights"] = c.weights;
  return j.dump(2) + "\n";
}

StageError::StageError(std::string stage, int frame, const Error& inner)
    : Error(inner.code(), "stage '" + stage + "'" + (frame >= 0 ? " frame " + std::to_string(frame) : "") + ": " +
                              inner.what()),
      stage_(std::move(stage)),
      frame_(frame) {}

int exit_code_for(const Error& e) { return is_numeric(e.code()) ? 3 : 2; }

namespace {

// Runs `fn`, tagging tunnel errors with the stage. `frame` is updated by fn as it progresses.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  int frame = -1;
  try {
    return fn(frame);
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, frame, e);
  } catch (const std::exception& e) {
    throw StageError(name, frame, Error(ErrorCode::Io, e.what()));
  }
}

// Gaussian keypoint blobs on a (size x size) grid covering the zoomed patch.
Tensor rasterize_pose(const PoseFrame& pose, const ZoomMap& map, std::size_t size) {
  Tensor t({1, size, size});
  const double to_grid_x = static_cast<double>(size) / map.out_size.width;
  const double to_grid_y = static_cast<double>(size) / map.out_size.height;
  for (const auto& kp : pose.keypoints) {
    const double u = (kp.x - map.source_box.x0 + map.pad_left) * map.sx * to_grid_x;
    const double v = (kp.y - map.source_box.y0 + map.pad_top) * map.sy * to_grid_y;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = x + 0.5 - u, dy = y + 0.5 - v;
        const double val = kp.conf * std::exp(-0.5 * (dx * dx + dy * dy));
        t[y * size + x] = std::max(t[y * size + x], val);
      }
    }
  }
  return t;
}

Tensor stack_frames(const std::vector<Tensor>& frames) {
  Shape s = frames.front().shape();
  s.insert(s.begin(), frames.size());
  std::vector<double> data;
  data.reserve(shape_size(s));
  for (const auto& f : frames) data.insert(data.end(), f.values().begin(), f.values().end());
  return Tensor(s, std::move(data));
}

diffusion::ToyDenoiser load_model(const PipelineConfig& cfg) {
  diffusion::DenoiserConfig dc;
  dc.channels = cfg.channels;
  dc.seed = cfg.seed;
  auto model = diffusion::ToyDenoiser::make(dc);
  if (cfg.weights.empty()) return model;
  std::map<std::string, Tensor> loaded;
  for (auto& [name, t] : io::read_tensors(cfg.weights)) loaded.emplace(name, std::move(t));
  for (auto& [name, t] : model.named_tensors()) {
    auto it = loaded.find(name);
    if (it == loaded.end()) fail(ErrorCode::Parse, "weights file lacks '" + name + "'");
    if (it->second.shape() != t->shape()) fail(ErrorCode::ShapeMismatch, "weights entry '" + name + "' has the wrong shape");
    *t = it->second;
  }
  return model;
}

std::vector<Image> denoise_patches(const PipelineConfig& cfg, const std::vector<PoseFrame>& poses,
                                   const std::vector<Image>& frames, const std::vector<Image>& zoomed,
                                   const std::vector<ZoomMap>& maps, const Tunnel& tunnel,
                                   const std::optional<Image>& garment, int& frame) {
  const FrameSize work{cfg.denoise_size, cfg.denoise_size};
  const std::size_t latent = static_cast<std::size_t>(cfg.denoise_size / 2);
  const auto model = load_model(cfg);
  const auto schedule = diffusion::make_schedule(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
  const auto triplets = tunnel_triplets(tunnel);
  const std::size_t count = frames.size();

  std::vector<Tensor> z0(count), masked(count), masks(count), pose_maps(count), env_feats(count);
  for (std::size_t i = 0; i < count; ++i) {
    frame = poses[i].frame_index;
    const Image small = to_luma(resize(zoomed[i], work));
    z0[i] = diffusion::toy_encode(small);
    // Agnostic mask: the tight garment box in latent coordinates.
    Tensor mask({1, latent, latent});
    if (auto tight = frame_box(poses[i], {cfg.garment, 0.0, 1e-9, cfg.conf_threshold})) {
      const double kx = maps[i].sx * work.width / maps[i].out_size.width / 2.0;
      const double ky = maps[i].sy * work.height / maps[i].out_size.height / 2.0;
      const double u0 = (tight->x0 - maps[i].source_box.x0 + maps[i].pad_left) * kx;
      const double u1 = (tight->x1 - maps[i].source_box.x0 + maps[i].pad_left) * kx;
      const double v0 = (tight->y0 - maps[i].source_box.y0 + maps[i].pad_top) * ky;
      const double v1 = (tight->y1 - maps[i].source_box.y0 + maps[i].pad_top) * ky;
      for (std::size_t y = 0; y < latent; ++y) {
        for (std::size_t x = 0; x < latent; ++x) {
          if (x + 0.5 >= u0 && x + 0.5 < u1 && y + 0.5 >= v0 && y + 0.5 < v1) mask[y * latent + x] = 1.0;
        }
      }
    }
    masks[i] = mask;
    masked[i] = z0[i];
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t p = 0; p < latent * latent; ++p) masked[i][k * latent * latent + p] *= 1.0 - mask[p];
    }
    pose_maps[i] = rasterize_pose(poses[i], maps[i], 4 * latent);
    // Environment: the frame with the tunnel region removed.
    Image env = to_luma(frames[i]);
    const PixelRect hull = pixel_hull(tunnel.boxes[i]);
    for (int y = std::max(hull.y, 0); y < std::min(hull.y + hull.height, env.height); ++y) {
      for (int x = std::max(hull.x, 0); x < std::min(hull.x + hull.width, env.width); ++x) env.at(x, y) = 0.0;
    }
    env_feats[i] = nn::env_features(env, model.env);
  }
  frame = -1;

  Tensor ref_tokens;
  if (garment) {
    const Tensor gz = diffusion::toy_encode(to_luma(resize(*garment, work)));
    ref_tokens = transpose(gz.reshaped({4, latent * latent}));
  }

  std::vector<diffusion::PlacedClip> clips;
  for (std::size_t start : diffusion::clip_starts(count, cfg.clip_length, cfg.stride)) {
    const std::size_t end = std::min(start + cfg.clip_length, count);
    frame = poses[start].frame_index;
    diffusion::DenoiserInputs in;
    std::vector<Tensor> clip_masked(masked.begin() + start, masked.begin() + end);
    in.masked_latent = stack_frames(clip_masked);
    in.mask = stack_frames({masks.begin() + start, masks.begin() + end});
    in.pose_maps = stack_frames({pose_maps.begin() + start, pose_maps.begin() + end});
    in.ref_latent_tokens = ref_tokens;
    Tensor env_mean = env_feats[start];
    for (std::size_t i = start + 1; i < end; ++i) env_mean += env_feats[i];
    env_mean *= 1.0 / static_cast<double>(end - start);
    in.env_features = env_mean;
    in.tunnel.assign(triplets.begin() + start, triplets.begin() + end);
    std::mt19937_64 rng(cfg.seed * 1000003ULL + start);
    in.noise_latent = diffusion::gaussian_like(in.masked_latent.shape(), rng);
    diffusion::SamplerOptions opts;
    opts.seed = cfg.seed + start;
    clips.push_back({start, diffusion::denoise_clip(model, in, schedule, cfg.denoise_steps, opts)});
  }
  frame = -1;
  const Tensor merged = diffusion::temporal_aggregate(clips, diffusion::AggregateWeights::Triangular);

  std::vector<Image> patches(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Image gray = diffusion::toy_decode(merged.rows(i, i + 1).reshaped({4, latent, latent}));
    Image rgb(gray.width, gray.height, zoomed[i].channels);
    for (int y = 0; y < gray.height; ++y) {
      for (int x = 0; x < gray.width; ++x) {
        for (int c = 0; c < rgb.channels; ++c) rgb.at(x, y, c) = std::clamp(gray.at(x, y), 0.0, 1.0);
      }
    }
    patches[i] = resize(rgb, maps[i].out_size);
  }
  return patches;
}

}  // namespace

void run_pipeline(const PipelineConfig& cfg, const PipelineInputs& in) {
  const fs::path manifest_path = in.output_dir / "manifest.json";
  ordered_json manifest;
  manifest["config"] = json::parse(config_json(cfg));
  std::vector<std::pair<fs::path, std::string>> artifacts;

  try {
    cfg.validate();
    const auto poses = stage("load", [&](int&) {
      if (!fs::exists(in.poses)) fail(ErrorCode::Io, "pose file " + in.poses.string() + " does not exist");
      auto p = io::read_poses(in.poses);
      if (p.empty()) fail(ErrorCode::EmptyTunnel, "pose file has no frames");
      return p;
    });
    std::vector<int> indices;
    for (const auto& p : poses) indices.push_back(p.frame_index);
    const auto frames = stage("load", [&](int& frame) {
      std::vector<Image> out;
      for (const auto& p : poses) {
        frame = p.frame_index;
        auto img = io::read_frames(in.frames_dir, {frame}).front();
        if (img.size() != p.size) fail(ErrorCode::SizeMismatch, "frame size differs from the pose entry");
        out.push_back(std::move(img));
      }
      return out;
    });
    std::optional<Image> garment;
    if (in.garment_image) {
      garment = stage("load", [&](int&) { return io::read_png(*in.garment_image); });
    }

    const Tunnel raw = stage("extract", [&](int&) { return extract_tunnel(poses, cfg.extract()); });
    artifacts.emplace_back("tunnel.jsonl", io::tunnel_jsonl(raw, indices));

    const Tunnel smoothed =
        stage("smooth", [&](int&) { return cfg.stages.smooth ? smooth_tunnel(raw, cfg.smooth()) : raw; });
    artifacts.emplace_back("tunnel_smoothed.jsonl", io::tunnel_jsonl(smoothed, indices));

    std::vector<Image> zoomed;
    std::vector<ZoomMap> maps;
    stage("zoom", [&](int& frame) {
      for (std::size_t i = 0; i < frames.size(); ++i) {
        frame = indices[i];
        auto [patch, map] = crop_pad_resize(frames[i], smoothed.boxes[i], cfg.out_size);
        artifacts.emplace_back(fs::path("zoomed") / io::frame_name(frame), io::encode_png(patch));
        zoomed.push_back(std::move(patch));
        maps.push_back(map);
      }
      artifacts.emplace_back("zoom_maps.json", io::zoom_maps_json(maps));
      return 0;
    });

    std::vector<Image> patches = zoomed;
    if (cfg.stages.denoise) {
      patches = stage("denoise", [&](int& frame) {
        return denoise_patches(cfg, poses, frames, zoomed, maps, smoothed, garment, frame);
      });
      for (std::size_t i = 0; i < patches.size(); ++i) {
        artifacts.emplace_back(fs::path("generated") / io::frame_name(indices[i]), io::encode_png(patches[i]));
      }
    }

    std::vector<Image> blended = frames;
    if (cfg.stages.blend) {
      blended = stage("blend", [&](int&) { return tunnel_blend(frames, patches, maps, cfg.blend_sigma); });
      for (std::size_t i = 0; i < blended.size(); ++i) {
        artifacts.emplace_back(fs::path("blended") / io::frame_name(indices[i]), io::encode_png(blended[i]));
      }
    }

    if (cfg.stages.metrics) {
      const std::string report = stage("metrics", [&](int& frame) {
        metrics::EvaluationReport r;
        for (std::size_t i = 0; i < frames.size(); ++i) {
          frame = indices[i];
          r.ssim_per_frame.push_back(metrics::ssim(blended[i], frames[i]));
        }
        frame = -1;
        r.stability = metrics::tunnel_stability_report(raw, smoothed);
        return metrics::report_json(r);
      });
      artifacts.emplace_back("report.json", report);
    }
  } catch (const Error& e) {
    manifest["status"] = "failed";
    if (const auto* se = dynamic_cast<const StageError*>(&e)) {
      manifest["stage"] = se->stage();
      manifest["frame"] = se->frame() >= 0 ? json(se->frame()) : json(nullptr);
    }
    manifest["error"] = e.what();
    manifest["artifacts"] = json::array();
    io::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    throw;
  }

  std::vector<std::string> names;
  for (const auto& [path, bytes] : artifacts) {
    io::write_file_atomic(in.output_dir / path, bytes);
    names.push_back(path.generic_string());
  }
  manifest["status"] = "ok";
  manifest["artifacts"] = names;
  io::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

}  // namespace tunnel::pipeline

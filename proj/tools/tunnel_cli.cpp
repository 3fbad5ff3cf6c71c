#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <regex>

#include "tunnel/denoiser.hpp"
#include "tunnel/embedding.hpp"
#include "tunnel/io.hpp"
#include "tunnel/metrics.hpp"
#include "tunnel/pipeline.hpp"
#include "tunnel/zoom.hpp"

namespace fs = std::filesystem;
using namespace tunnel;

namespace {

FrameSize parse_size(const std::string& text) {
  int w = 0, h = 0;
  char x = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &w, &x, &h, &extra) != 3 || (x != 'x' && x != 'X') || w <= 0 || h <= 0) {
    fail(ErrorCode::InvalidArgument, "frame size must look like 640x480, got '" + text + "'");
  }
  return {w, h};
}

// Frame indices of frame_%06d.png files in a directory, ascending.
std::vector<int> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::Io, dir.string() + " is not a directory");
  static const std::regex pattern(R"(frame_(\d{6,})\.png)");
  std::vector<int> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) out.push_back(std::stoi(m[1]));
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) fail(ErrorCode::Io, "no frame_*.png files in " + dir.string());
  return out;
}

struct Paths {
  std::optional<std::string> config;
  std::vector<std::string> args;
};

void add_common(CLI::App* cmd, Paths& p, const std::vector<std::string>& names) {
  cmd->add_option("--config", p.config, "JSON config file");
  p.args.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) cmd->add_option(names[i], p.args[i])->required();
}

pipeline::PipelineConfig config_of(const Paths& p) {
  return pipeline::load_config(p.config ? std::optional<fs::path>(*p.config) : std::nullopt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Focus-tunnel extraction, smoothing, zoom/blend and toy diffusion tools"};
  app.require_subcommand(1);

  Paths extract_p, smooth_p, zoom_p, blend_p, embed_p, demo_p, metrics_p, pipe_p;
  std::string frame_size_text;
  std::string embed_size_text;
  int demo_train_steps = 300;
  int demo_frames = 8;
  int demo_latent = 8;
  std::optional<std::string> garment;

  auto* extract = app.add_subcommand("extract", "poses.json -> tunnel.jsonl");
  add_common(extract, extract_p, {"poses", "output"});

  auto* smooth = app.add_subcommand("smooth", "tunnel.jsonl -> smoothed tunnel.jsonl");
  add_common(smooth, smooth_p, {"tunnel", "output"});
  smooth->add_option("--frame-size", frame_size_text, "frame size WxH")->required();

  auto* zoom = app.add_subcommand("zoom", "frames + tunnel -> zoomed patches and zoom_maps.json");
  add_common(zoom, zoom_p, {"frames", "tunnel", "output"});

  auto* blend = app.add_subcommand("blend", "frames + patches + zoom_maps.json -> blended frames");
  add_common(blend, blend_p, {"frames", "patches", "zoom_maps", "output"});

  auto* embed = app.add_subcommand("embed", "tunnel.jsonl -> tunnel embeddings (tensor container)");
  add_common(embed, embed_p, {"tunnel", "output"});
  embed->add_option("--frame-size", embed_size_text, "frame size WxH")->required();

  auto* demo = app.add_subcommand("demo-denoise", "train the toy denoiser on a synthetic clip and sample it");
  add_common(demo, demo_p, {"output"});
  demo->add_option("--train-steps", demo_train_steps, "training steps")->check(CLI::NonNegativeNumber);
  demo->add_option("--frames", demo_frames, "clip length")->check(CLI::PositiveNumber);
  demo->add_option("--latent", demo_latent, "latent side")->check(CLI::PositiveNumber);

  auto* metrics_cmd = app.add_subcommand("metrics", "frames, blended frames, raw and smoothed tunnels -> report.json");
  add_common(metrics_cmd, metrics_p, {"frames", "blended", "tunnel_raw", "tunnel_smoothed", "output"});

  auto* pipe = app.add_subcommand("pipeline", "run the full pipeline");
  add_common(pipe, pipe_p, {"frames", "poses", "output"});
  pipe->add_option("--garment", garment, "reference garment PNG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*extract) {
      const auto cfg = config_of(extract_p);
      const auto poses = io::read_poses(extract_p.args[0]);
      if (poses.empty()) fail(ErrorCode::EmptyTunnel, "pose file has no frames");
      std::vector<int> frames;
      for (const auto& p : poses) frames.push_back(p.frame_index);
      io::write_file_atomic(extract_p.args[1], io::tunnel_jsonl(extract_tunnel(poses, cfg.extract()), frames));
    } else if (*smooth) {
      const auto cfg = config_of(smooth_p);
      const std::string text = io::read_file(smooth_p.args[0]);
      const Tunnel raw = io::parse_tunnel_jsonl(text, parse_size(frame_size_text));
      io::write_file_atomic(smooth_p.args[1], io::tunnel_jsonl(smooth_tunnel(raw, cfg.smooth()), io::tunnel_frames(text)));
    } else if (*zoom) {
      const auto cfg = config_of(zoom_p);
      const std::string text = io::read_file(zoom_p.args[1]);
      const auto indices = io::tunnel_frames(text);
      const auto frames = io::read_frames(zoom_p.args[0], indices);
      const Tunnel t = io::parse_tunnel_jsonl(text, frames.front().size());
      std::vector<ZoomMap> maps;
      std::vector<Image> patches;
      for (std::size_t i = 0; i < frames.size(); ++i) {
        auto [patch, map] = crop_pad_resize(frames[i], t.boxes[i], cfg.out_size);
        patches.push_back(std::move(patch));
        maps.push_back(map);
      }
      const fs::path out = zoom_p.args[2];
      for (std::size_t i = 0; i < patches.size(); ++i) io::write_png(out / io::frame_name(indices[i]), patches[i]);
      io::write_file_atomic(out / "zoom_maps.json", io::zoom_maps_json(maps));
    } else if (*blend) {
      const auto cfg = config_of(blend_p);
      const auto indices = list_frames(blend_p.args[1]);
      const auto frames = io::read_frames(blend_p.args[0], indices);
      const auto patches = io::read_frames(blend_p.args[1], indices);
      const auto maps = io::parse_zoom_maps(io::read_file(blend_p.args[2]));
      const auto out = tunnel_blend(frames, patches, maps, cfg.blend_sigma);
      for (std::size_t i = 0; i < out.size(); ++i) io::write_png(fs::path(blend_p.args[3]) / io::frame_name(indices[i]), out[i]);
    } else if (*embed) {
      const auto cfg = config_of(embed_p);
      const Tunnel t = io::read_tunnel(embed_p.args[0], parse_size(embed_size_text));
      std::mt19937_64 rng(cfg.seed);
      const auto params = EmbeddingParams::random(cfg.channels, rng);
      io::write_tensors(embed_p.args[1], {{"weight", params.weight},
                                          {"bias", params.bias},
                                          {"embeddings", tunnel_embeddings(tunnel_triplets(t), params)}});
    } else if (*demo) {
      const auto cfg = config_of(demo_p);
      diffusion::DenoiserConfig dc;
      dc.channels = cfg.channels;
      dc.seed = cfg.seed;
      auto model = diffusion::ToyDenoiser::make(dc);
      auto clip = diffusion::synthetic_clip(model, static_cast<std::size_t>(demo_frames),
                                            static_cast<std::size_t>(demo_latent), cfg.seed);
      const auto schedule = diffusion::make_schedule(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
      diffusion::TrainOptions opts;
      opts.steps = demo_train_steps;
      opts.seed = cfg.seed + 1;
      const auto history = diffusion::train_on_clip(model, clip.conditions, clip.z0, schedule, opts);
      std::mt19937_64 rng(cfg.seed + 2);
      clip.conditions.noise_latent = diffusion::gaussian_like(clip.z0.shape(), rng);
      diffusion::SamplerOptions so;
      so.seed = cfg.seed + 3;
      const Tensor sample = diffusion::denoise_clip(model, clip.conditions, schedule, cfg.denoise_steps, so);
      const fs::path out = demo_p.args[0];
      NamedTensors weights;
      for (auto& [name, t] : model.named_tensors()) weights.emplace_back(name, *t);
      io::write_tensors(out / "weights.ttns", weights);
      io::write_tensors(out / "latents.ttns", {{"z0", clip.z0}, {"sample", sample}});
      for (std::size_t i = 0; i < sample.dim(0); ++i) {
        const Tensor frame = sample.rows(i, i + 1).reshaped({4, clip.z0.dim(2), clip.z0.dim(3)});
        io::write_png(out / "samples" / io::frame_name(static_cast<int>(i)), diffusion::toy_decode(frame));
      }
      nlohmann::ordered_json log;
      log["loss_history"] = history;
      log["final_loss"] = history.empty() ? nlohmann::json(nullptr) : nlohmann::json(history.back());
      log["eval_loss"] = diffusion::evaluate_loss(model, clip.conditions, clip.z0, schedule, 64, cfg.seed + 4);
      io::write_file_atomic(out / "train_log.json", log.dump(1) + "\n");
      if (!all_finite(sample)) fail(ErrorCode::NonFinite, "sampling produced non-finite latents");
    } else if (*metrics_cmd) {
      const auto indices = list_frames(metrics_p.args[1]);
      const auto frames = io::read_frames(metrics_p.args[0], indices);
      const auto blended = io::read_frames(metrics_p.args[1], indices);
      const Tunnel raw = io::read_tunnel(metrics_p.args[2], frames.front().size());
      const Tunnel smoothed = io::read_tunnel(metrics_p.args[3], frames.front().size());
      metrics::EvaluationReport r;
      for (std::size_t i = 0; i < frames.size(); ++i) r.ssim_per_frame.push_back(metrics::ssim(blended[i], frames[i]));
      r.stability = metrics::tunnel_stability_report(raw, smoothed);
      io::write_file_atomic(metrics_p.args[4], metrics::report_json(r));
    } else if (*pipe) {
      const auto cfg = config_of(pipe_p);
      pipeline::PipelineInputs in{pipe_p.args[0], pipe_p.args[1], pipe_p.args[2], std::nullopt};
      if (garment) in.garment_image = *garment;
      pipeline::run_pipeline(cfg, in);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pipeline::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tunnel/error.hpp"
#include "tunnel/tunnel_extract.hpp"
#include "tunnel/tunnel_smooth.hpp"

namespace tunnel::pipeline {

namespace fs = std::filesystem;

struct StageToggles {
  bool smooth = true;
  bool denoise = false;
  bool blend = true;
  bool metrics = true;
};

struct PipelineConfig {
  GarmentClass garment = GarmentClass::Upper;
  double margin_ratio = 0.2;
  double target_aspect = 1.0;
  double conf_threshold = 0.3;
  double kalman_q = 0.001;
  double kalman_r = 0.0015;
  /// nullopt: P0 = first observation ("paper_literal").
  std::optional<double> p0;
  CovarianceUpdate update_mode = CovarianceUpdate::Standard;
  int lowpass_window = 3;
  FrameSize out_size{64, 64};
  double blend_sigma = 3.0;
  std::size_t clip_length = 8;
  std::size_t stride = 4;
  std::uint64_t seed = 0;
  StageToggles stages;

  // Toy denoiser settings.
  int denoise_size = 16;
  int denoise_steps = 50;
  int schedule_steps = 50;
  double beta_start = 0.01;
  double beta_end = 0.2;
  std::size_t channels = 16;
  std::string weights;

  KalmanParams kalman() const;
  ExtractParams extract() const;
  SmoothParams smooth() const;
  void validate() const;
};

/// JSON config; every field optional, unknown fields rejected.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::optional<fs::path>& path);
std::string config_json(const PipelineConfig& cfg);

/// Error tagged with the pipeline stage and, when known, the frame index.
class StageError : public Error {
 public:
  StageError(std::string stage, int frame, const Error& inner);

  const std::string& stage() const { return stage_; }
  int frame() const { return frame_; }

 private:
  std::string stage_;
  int frame_;
};

struct PipelineInputs {
  fs::path frames_dir;
  fs::path poses;
  fs::path output_dir;
  std::optional<fs::path> garment_image;
};

/// Runs extract -> smooth -> zoom -> (denoise) -> blend -> metrics. Artifacts are
/// written only after every stage succeeded; a manifest.json is always written.
/// Throws StageError on failure.
void run_pipeline(const PipelineConfig& config, const PipelineInputs& inputs);

/// Process exit code for an error: 2 input error, 3 numeric failure.
int exit_code_for(const Error& e);

}  // namespace tunnel::pipeline

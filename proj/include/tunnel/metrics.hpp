#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tunnel/image.hpp"
#include "tunnel/tunnel_extract.hpp"

namespace tunnel::metrics {

struct SsimParams {
  int window = 11;
  double window_std = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

std::vector<double> ssim_window(const SsimParams& p);

/// Mean local SSIM over all full Gaussian windows. Color images are reduced to luma.
double ssim(const Image& a, const Image& b, const SsimParams& p = {});

/// Serial reference of the same quantity (tests and benchmarks).
double ssim_serial(const Image& a, const Image& b, const SsimParams& p = {});

struct ChannelJitter {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

  double total() const { return cx + cy + w + h; }
};

/// Jitter per channel; nullopt when the tunnel has fewer than three frames.
std::optional<ChannelJitter> tunnel_jitter(const Tunnel& t);

struct StabilityReport {
  std::optional<ChannelJitter> jitter_raw;
  std::optional<ChannelJitter> jitter_smoothed;
  /// Largest center displacement between raw and smoothed boxes over all frames.
  double max_displacement = 0.0;
};

StabilityReport tunnel_stability_report(const Tunnel& raw, const Tunnel& smoothed);

struct EvaluationReport {
  std::vector<double> ssim_per_frame;
  StabilityReport stability;

  double ssim_mean() const;
};

/// {ssim_mean, ssim_per_frame, jitter_raw, jitter_smoothed, max_displacement, lpips, vfid};
/// learned metrics are reserved as null.
std::string report_json(const EvaluationReport& report);

}  // namespace tunnel::metrics

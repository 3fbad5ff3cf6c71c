#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tunnel/tunnel_extract.hpp"

namespace tunnel {

enum class CovarianceUpdate {
  Standard,      // P = (1 - K) P-
  PaperLiteral,  // P = P- / (1 - K); grows without bound, K -> 1
};

struct KalmanParams {
  double q = 0.001;
  double r = 0.0015;
  /// Initial covariance. nullopt initializes P0 with the first observation.
  std::optional<double> p0;
  CovarianceUpdate update = CovarianceUpdate::Standard;
};

struct KalmanState {
  double x_hat = 0.0;
  double p = 0.0;
};

/// One predict/correct step of the scalar constant-position filter. Returns the gain used.
double kalman_step(KalmanState& state, double observation, const KalmanParams& params);

/// Scalar Kalman filter over a coordinate series; x_hat starts at the first sample.
std::vector<double> kalman_smooth(std::span<const double> series, const KalmanParams& params = {});

/// Centered moving average with edge replication. `window` must be odd.
std::vector<double> lowpass(std::span<const double> series, int window);

/// Mean absolute second difference.
double jitter(std::span<const double> series);

struct TunnelChannels {
  std::vector<double> cx, cy, w, h;
};

TunnelChannels split_channels(const Tunnel& t);

struct SmoothParams {
  KalmanParams kalman;
  int window = 3;
  double target_aspect = 1.0;
};

/// Kalman then low-pass on (cx, cy, w, h) independently, clamp to the frame and refit aspect.
Tunnel smooth_tunnel(const Tunnel& t, const SmoothParams& params = {});

}  // namespace tunnel

#include "tunnel/tunnel_smooth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tunnel/error.hpp"

namespace tunnel {

double kalman_step(KalmanState& s, double observation, const KalmanParams& params) {
  const double x_prior = s.x_hat;
  const double p_prior = s.p + params.q;
  // The literal update blows P up within a few dozen steps; the gain limit is 1.
  const double gain = std::isinf(p_prior) ? 1.0 : p_prior / (p_prior + params.r);
  s.x_hat = x_prior + gain * (observation - x_prior);
  if (params.update == CovarianceUpdate::Standard) {
    s.p = (1.0 - gain) * p_prior;
  } else {
    s.p = p_prior / (1.0 - gain);
  }
  return gain;
}

std::vector<double> kalman_smooth(std::span<const double> series, const KalmanParams& params) {
  if (series.empty()) fail(ErrorCode::TooShort, "kalman_smooth needs at least one sample");
  if (!(params.q > 0.0) || !(params.r > 0.0)) fail(ErrorCode::InvalidArgument, "q and r must be positive");
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!std::isfinite(series[i])) {
      fail(ErrorCode::NonFiniteInput, "sample " + std::to_string(i) + " is not finite");
    }
  }
  KalmanState state{series[0], params.p0.value_or(series[0])};
  std::vector<double> out;
  out.reserve(series.size());
  for (double x : series) {
    kalman_step(state, x, params);
    out.push_back(state.x_hat);
  }
  return out;
}

std::vector<double> lowpass(std::span<const double> series, int window) {
  if (window < 1 || window % 2 == 0) fail(ErrorCode::EvenWindow, "window must be odd and positive");
  if (series.empty()) fail(ErrorCode::TooShort, "lowpass needs a non-empty series");
  const long n = static_cast<long>(series.size());
  const long r = window / 2;
  std::vector<double> out(series.size());
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = -r; k <= r; ++k) acc += series[std::clamp(i + k, 0L, n - 1)];
    out[i] = acc / window;
  }
  return out;
}

double jitter(std::span<const double> series) {
  if (series.size() < 3) fail(ErrorCode::TooShort, "jitter needs at least 3 samples");
  double acc = 0.0;
  for (std::size_t t = 1; t + 1 < series.size(); ++t) {
    acc += std::abs(series[t + 1] - 2.0 * series[t] + series[t - 1]);
  }
  return acc / static_cast<double>(series.size() - 2);
}

TunnelChannels split_channels(const Tunnel& t) {
  TunnelChannels c;
  for (const auto& b : t.boxes) {
    c.cx.push_back(b.cx());
    c.cy.push_back(b.cy());
    c.w.push_back(b.width());
    c.h.push_back(b.height());
  }
  return c;
}

Tunnel smooth_tunnel(const Tunnel& t, const SmoothParams& params) {
  if (t.boxes.empty()) fail(ErrorCode::EmptyTunnel, "tunnel has no boxes");
  const TunnelChannels raw = split_channels(t);
  TunnelChannels sm;
  const std::vector<double>* in[4] = {&raw.cx, &raw.cy, &raw.w, &raw.h};
  std::vector<double>* out[4] = {&sm.cx, &sm.cy, &sm.w, &sm.h};
  for (int c = 0; c < 4; ++c) {
    *out[c] = lowpass(kalman_smooth(*in[c], params.kalman), params.window);
  }

  Tunnel result{t.frame_size, {}};
  result.boxes.reserve(t.boxes.size());
  for (std::size_t i = 0; i < t.boxes.size(); ++i) {
    BBox b = BBox::from_center(sm.cx[i], sm.cy[i], std::max(sm.w[i], 0.0), std::max(sm.h[i], 0.0));
    b = clamp_to_frame(b, t.frame_size);
    result.boxes.push_back(fit_aspect(b, params.target_aspect, t.frame_size));
  }
  return result;
}

}  // namespace tunnel

#include "tunnel/metrics.hpp"

#include <cmath>
#include <json.hpp>

#include "tunnel/error.hpp"
#include "tunnel/kernels.hpp"
#include "tunnel/tunnel_smooth.hpp"

namespace tunnel::metrics {

std::vector<double> ssim_window(const SsimParams& p) {
  if (p.window < 1 || p.window % 2 == 0) fail(ErrorCode::EvenWindow, "SSIM window must be odd");
  if (!(p.window_std > 0.0)) fail(ErrorCode::InvalidArgument, "SSIM window std must be positive");
  const int r = p.window / 2;
  std::vector<double> w(static_cast<std::size_t>(p.window));
  double total = 0.0;
  for (int k = -r; k <= r; ++k) {
    w[k + r] = std::exp(-0.5 * k * k / (p.window_std * p.window_std));
    total += w[k + r];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

template <typename Fn>
double ssim_with(const Image& a, const Image& b, const SsimParams& p, Fn kernel) {
  if (a.width != b.width || a.height != b.height) fail(ErrorCode::SizeMismatch, "SSIM inputs differ in size");
  if (a.width < p.window || a.height < p.window) fail(ErrorCode::SizeMismatch, "image smaller than the SSIM window");
  const Image la = a.channels == 1 ? a : to_luma(a);
  const Image lb = b.channels == 1 ? b : to_luma(b);
  const double c1 = std::pow(p.k1 * p.dynamic_range, 2);
  const double c2 = std::pow(p.k2 * p.dynamic_range, 2);
  const auto w = ssim_window(p);
  return kernel(la.data, lb.data, a.width, a.height, w, c1, c2);
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& p) {
  return ssim_with(a, b, p, [](auto&&... args) { return kernels::omp::ssim_mean(args...); });
}

double ssim_serial(const Image& a, const Image& b, const SsimParams& p) {
  return ssim_with(a, b, p, [](auto&&... args) { return kernels::serial::ssim_mean(args...); });
}

std::optional<ChannelJitter> tunnel_jitter(const Tunnel& t) {
  if (t.size() < 3) return std::nullopt;
  const TunnelChannels c = split_channels(t);
  return ChannelJitter{jitter(c.cx), jitter(c.cy), jitter(c.w), jitter(c.h)};
}

StabilityReport tunnel_stability_report(const Tunnel& raw, const Tunnel& smoothed) {
  if (raw.size() != smoothed.size()) fail(ErrorCode::LengthMismatch, "raw and smoothed tunnels differ in length");
  StabilityReport r;
  r.jitter_raw = tunnel_jitter(raw);
  r.jitter_smoothed = tunnel_jitter(smoothed);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double dx = smoothed.boxes[i].cx() - raw.boxes[i].cx();
    const double dy = smoothed.boxes[i].cy() - raw.boxes[i].cy();
    r.max_displacement = std::max(r.max_displacement, std::hypot(dx, dy));
  }
  return r;
}

double EvaluationReport::ssim_mean() const {
  if (ssim_per_frame.empty()) return 0.0;
  double acc = 0.0;
  for (double s : ssim_per_frame) acc += s;
  return acc / static_cast<double>(ssim_per_frame.size());
}

namespace {

nlohmann::ordered_json jitter_json(const std::optional<ChannelJitter>& j) {
  if (!j) return nullptr;
  nlohmann::ordered_json out;
  out["cx"] = j->cx;
  out["cy"] = j->cy;
  out["w"] = j->w;
  out["h"] = j->h;
  return out;
}

}  // namespace

std::string report_json(const EvaluationReport& report) {
  nlohmann::ordered_json j;
  if (report.ssim_per_frame.empty()) {
    j["ssim_mean"] = nullptr;
  } else {
    j["ssim_mean"] = report.ssim_mean();
  }
  j["ssim_per_frame"] = report.ssim_per_frame;
  j["jitter_raw"] = jitter_json(report.stability.jitter_raw);
  j["jitter_smoothed"] = jitter_json(report.stability.jitter_smoothed);
  j["max_displacement"] = report.stability.max_displacement;
  j["lpips"] = nullptr;
  j["vfid"] = nullptr;
  return j.dump(2) + "\n";
}

}  // namespace tunnel::metrics

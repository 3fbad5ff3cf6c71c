#include "tunnel/diffusion.hpp"

#include <cmath>
#include <string>

#include "tunnel/error.hpp"

namespace tunnel::diffusion {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) fail(ErrorCode::BadRange, "schedule needs at least one step");
  NoiseSchedule s;
  double running = 1.0;
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) fail(ErrorCode::BadRange, "beta must lie in [0, 1)");
    s.alphas.push_back(1.0 - b);
    running *= 1.0 - b;
    s.alpha_bars.push_back(running);
  }
  s.betas = std::move(betas);
  return s;
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) fail(ErrorCode::BadRange, "schedule needs at least one step");
  if (!(beta_start >= 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    fail(ErrorCode::BadRange, "need 0 <= beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    betas[t] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

Tensor add_noise(const Tensor& z0, const Tensor& eps, double alpha_bar) {
  if (z0.shape() != eps.shape()) fail(ErrorCode::ShapeMismatch, "z0 and eps shapes differ");
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.steps()) fail(ErrorCode::BadRange, "timestep " + std::to_string(t) + " outside [1, T]");
  return add_noise(z0, eps, s.alpha_bar(t));
}

double ldm_loss(const Tensor& eps_pred, const Tensor& eps) {
  if (eps_pred.shape() != eps.shape()) fail(ErrorCode::ShapeMismatch, "prediction and target shapes differ");
  if (eps.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double d = eps_pred[i] - eps[i];
    acc += d * d;
  }
  return acc / static_cast<double>(eps.size());
}

Tensor gaussian_like(const Shape& shape, std::mt19937_64& rng) { return Tensor::randn(shape, rng, 1.0); }

const std::array<std::array<double, 4>, 4>& codec_matrix() {
  // Haar basis over the patch ordering (0,0), (1,0), (0,1), (1,1).
  static const std::array<std::array<double, 4>, 4> kBasis{{
      {0.5, 0.5, 0.5, 0.5},
      {0.5, -0.5, 0.5, -0.5},
      {0.5, 0.5, -0.5, -0.5},
      {0.5, -0.5, -0.5, 0.5},
  }};
  return kBasis;
}

Tensor toy_encode(const Image& frame) {
  if (frame.width % 2 != 0 || frame.height % 2 != 0 || frame.width == 0 || frame.height == 0) {
    fail(ErrorCode::IndivisibleSize, "frame dimensions must be positive multiples of 2");
  }
  const std::size_t lh = frame.height / 2, lw = frame.width / 2;
  const std::size_t ch = static_cast<std::size_t>(frame.channels);
  Tensor z({4 * ch, lh, lw});
  const auto& m = codec_matrix();
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < lh; ++y) {
      for (std::size_t x = 0; x < lw; ++x) {
        const int px = static_cast<int>(2 * x), py = static_cast<int>(2 * y);
        const double p[4] = {frame.at(px, py, c), frame.at(px + 1, py, c), frame.at(px, py + 1, c),
                             frame.at(px + 1, py + 1, c)};
        for (std::size_t k = 0; k < 4; ++k) {
          z[((c * 4 + k) * lh + y) * lw + x] = m[k][0] * p[0] + m[k][1] * p[1] + m[k][2] * p[2] + m[k][3] * p[3];
        }
      }
    }
  }
  return z;
}

Image toy_decode(const Tensor& z, int channels) {
  if (z.rank() != 3 || z.dim(0) != 4 * static_cast<std::size_t>(channels)) {
    fail(ErrorCode::ShapeMismatch, "latent must be (4*channels, h, w), got " + shape_string(z.shape()));
  }
  const std::size_t lh = z.dim(1), lw = z.dim(2);
  Image out(static_cast<int>(2 * lw), static_cast<int>(2 * lh), channels);
  const auto& m = codec_matrix();
  for (std::size_t c = 0; c < static_cast<std::size_t>(channels); ++c) {
    for (std::size_t y = 0; y < lh; ++y) {
      for (std::size_t x = 0; x < lw; ++x) {
        double code[4];
        for (std::size_t k = 0; k < 4; ++k) code[k] = z[((c * 4 + k) * lh + y) * lw + x];
        const int px = static_cast<int>(2 * x), py = static_cast<int>(2 * y);
        const int offs[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
        for (int j = 0; j < 4; ++j) {
          out.at(px + offs[j][0], py + offs[j][1], static_cast<int>(c)) =
              m[0][j] * code[0] + m[1][j] * code[1] + m[2][j] * code[2] + m[3][j] * code[3];
        }
      }
    }
  }
  return out;
}

Tensor assemble_inputs(const Tensor& masked, const Tensor& noise, const Tensor& mask) {
  if (masked.rank() != 3 || noise.rank() != 3 || mask.rank() != 3 || masked.dim(0) != 4 || noise.dim(0) != 4 ||
      mask.dim(0) != 1 || masked.dim(1) != noise.dim(1) || masked.dim(2) != noise.dim(2) ||
      mask.dim(1) != masked.dim(1) || mask.dim(2) != masked.dim(2)) {
    fail(ErrorCode::ShapeMismatch, "assemble_inputs expects (4,h,w), (4,h,w), (1,h,w)");
  }
  std::vector<double> data(masked.values());
  data.insert(data.end(), noise.values().begin(), noise.values().end());
  data.insert(data.end(), mask.values().begin(), mask.values().end());
  return Tensor({9, masked.dim(1), masked.dim(2)}, std::move(data));
}

SplitInputs split_inputs(const Tensor& a) {
  if (a.rank() != 3 || a.dim(0) != 9) fail(ErrorCode::ShapeMismatch, "expected a (9, h, w) tensor");
  return {a.rows(0, 4), a.rows(4, 8), a.rows(8, 9)};
}

double aggregate_weight(std::size_t i, std::size_t length, AggregateWeights mode) {
  if (mode == AggregateWeights::Uniform) return 1.0;
  return static_cast<double>(std::min(i + 1, length - i));
}

Tensor temporal_aggregate(const std::vector<PlacedClip>& clips, AggregateWeights mode) {
  if (clips.empty()) fail(ErrorCode::CoverageGap, "no clips to aggregate");
  const Shape& ref = clips.front().latents.shape();
  if (ref.empty() || ref[0] == 0) fail(ErrorCode::ShapeMismatch, "clips need a leading frame axis");
  Shape frame_shape(ref.begin() + 1, ref.end());
  const std::size_t frame_size = shape_size(frame_shape);
  std::size_t first = clips.front().start, last = 0;
  for (const auto& c : clips) {
    const Shape& s = c.latents.shape();
    if (s.size() != ref.size() || !std::equal(s.begin() + 1, s.end(), ref.begin() + 1) || s[0] == 0) {
      fail(ErrorCode::ShapeMismatch, "clips must share their per-frame shape");
    }
    first = std::min(first, c.start);
    last = std::max(last, c.start + s[0]);
  }
  const std::size_t frames = last - first;
  std::vector<double> weight_sum(frames, 0.0);
  Shape out_shape = ref;
  out_shape[0] = frames;
  Tensor out(out_shape);
  for (const auto& c : clips) {
    const std::size_t len = c.latents.dim(0);
    for (std::size_t i = 0; i < len; ++i) {
      const double w = aggregate_weight(i, len, mode);
      const std::size_t f = c.start - first + i;
      weight_sum[f] += w;
      for (std::size_t k = 0; k < frame_size; ++k) out[f * frame_size + k] += w * c.latents[i * frame_size + k];
    }
  }
  for (std::size_t f = 0; f < frames; ++f) {
    if (weight_sum[f] == 0.0) fail(ErrorCode::CoverageGap, "frame " + std::to_string(first + f) + " is not covered");
    for (std::size_t k = 0; k < frame_size; ++k) out[f * frame_size + k] /= weight_sum[f];
  }
  return out;
}

std::vector<std::size_t> clip_starts(std::size_t frames, std::size_t clip, std::size_t stride) {
  if (clip == 0 || stride == 0) fail(ErrorCode::InvalidArgument, "clip length and stride must be positive");
  if (frames <= clip) return {0};
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + clip < frames; s += stride) starts.push_back(s);
  starts.push_back(frames - clip);
  return starts;
}

}  // namespace tunnel::diffusion

#pragma once

#include <array>
#include <random>
#include <utility>
#include <vector>

#include "tunnel/image.hpp"
#include "tunnel/tensor.hpp"

namespace tunnel::diffusion {

/// alphas[t-1] = 1 - beta_t and alpha_bars[t-1] = prod_{s<=t} alpha_s for t = 1..T.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  int steps() const { return static_cast<int>(betas.size()); }
  double alpha(int t) const { return alphas.at(t - 1); }
  double beta(int t) const { return betas.at(t - 1); }
  /// alpha_bar(0) is 1.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars.at(t - 1); }

  static NoiseSchedule from_betas(std::vector<double> betas);
};

/// Linear betas from beta_start to beta_end over T steps.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

/// z_t = sqrt(abar) z0 + sqrt(1 - abar) eps, elementwise.
Tensor add_noise(const Tensor& z0, const Tensor& eps, double alpha_bar);
Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& s);

/// Mean squared error over all elements.
double ldm_loss(const Tensor& eps_pred, const Tensor& eps);

/// Standard normal tensor.
Tensor gaussian_like(const Shape& shape, std::mt19937_64& rng);

/// 2x2 orthonormal patch codec: image (H, W, C) -> latent (4C, H/2, W/2).
Tensor toy_encode(const Image& frame);
Image toy_decode(const Tensor& latent, int channels = 1);
/// The fixed 4x4 orthonormal patch matrix, rows = latent channels.
const std::array<std::array<double, 4>, 4>& codec_matrix();

/// Channel concat masked(4) | noise(4) | mask(1) -> (9, H, W).
Tensor assemble_inputs(const Tensor& masked_latent, const Tensor& noise_latent, const Tensor& mask);

struct SplitInputs {
  Tensor masked_latent, noise_latent, mask;
};
SplitInputs split_inputs(const Tensor& assembled);

/// Per-frame weighting inside each clip when aggregating overlapping clips.
enum class AggregateWeights { Uniform, Triangular };

struct PlacedClip {
  std::size_t start = 0;
  Tensor latents;  // (f, ...)
};

/// Clip-frame weight for frame i of a length-L clip.
double aggregate_weight(std::size_t i, std::size_t length, AggregateWeights mode);

/// Weighted average of all clips covering each frame; fails with CoverageGap
/// when a frame between the first start and the last end is not covered.
Tensor temporal_aggregate(const std::vector<PlacedClip>& clips, AggregateWeights mode);

/// Start offsets of length-`clip` windows with stride `stride` covering `frames` frames.
std::vector<std::size_t> clip_starts(std::size_t frames, std::size_t clip, std::size_t stride);

}  // namespace tunnel::diffusion

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tunnel/diffusion.hpp"
#include "tunnel/embedding.hpp"
#include "tunnel/nn.hpp"

namespace tunnel::diffusion {

/// Conditions of one clip. Latents are (f, 4, h, w); the mask is (f, 1, h, w);
/// pose maps are planar (f, pose_channels, 4h, 4w). Reference and environment
/// conditions are carried before their learnable projections.
struct DenoiserInputs {
  Tensor masked_latent;
  Tensor noise_latent;
  Tensor mask;
  Tensor pose_maps;
  Tensor ref_latent_tokens;  // (n_r, 4)
  Tensor env_features;       // (n_e, feat_dim), frozen extractor output
  std::vector<TunnelTriplet> tunnel;

  std::size_t frames() const { return noise_latent.dim(0); }
};

struct DenoiserConfig {
  std::size_t channels = 16;
  std::size_t pose_channels = 1;
  std::size_t pose_hidden = 8;
  std::size_t time_dim = 32;
  std::size_t env_feat_dim = 32;
  int env_image_channels = 1;
  std::size_t tunnel_freq_dim = 64;
  std::uint64_t seed = 0;
};

/// Toy noise predictor: input projection, pose add, timestep FiLM, then
/// Ref-, Env- and Temporal-Attention and a linear head.
struct ToyDenoiser {
  DenoiserConfig config;
  Tensor in_w, in_b;      // (9, c), (c)
  Tensor time_w, time_b;  // (time_dim, 2c), (2c): scale | shift
  nn::PoseEncoder pose;
  Tensor ref_w, ref_b;  // (4, c), (c)
  nn::AttentionWeights ref_attn;
  nn::EnvEncoder env;
  nn::AttentionWeights env_attn;
  EmbeddingParams tunnel_emb;
  nn::AttentionWeights temporal_attn;
  Tensor head_w, head_b;  // (c, 4), (4)

  static ToyDenoiser make(const DenoiserConfig& config);
  /// Same structure with every tensor zeroed.
  ToyDenoiser zeros_like() const;

  /// Named tensors, frozen extractor included (for serialization).
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  /// Parameters updated by training (the frozen extractor is excluded).
  std::vector<Tensor*> trainable();
};

/// Predicted noise, same shape as inputs.noise_latent.
Tensor predict_noise(const ToyDenoiser& model, const DenoiserInputs& inputs, int t);

/// Prediction plus gradients of `loss_grad . prediction` w.r.t. every trainable tensor.
Tensor predict_noise_with_grad(const ToyDenoiser& model, const DenoiserInputs& inputs, int t,
                               const std::function<Tensor(const Tensor&)>& loss_grad, ToyDenoiser& grads);

/// Sinusoidal timestep code of length dim.
std::vector<double> timestep_encoding(int t, std::size_t dim);

using NoisePredictor = std::function<Tensor(const Tensor& z_t, int t)>;

struct SamplerOptions {
  /// sigma_t = 0 (posterior mean only).
  bool deterministic = false;
  std::uint64_t seed = 0;
};

/// One ancestral step z_t -> z_{t-1} from a noise estimate. `noise` may be null when sigma is 0.
Tensor ddpm_step(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s, const Tensor* noise);

/// Runs `steps` reverse steps starting at t = T from z_T.
Tensor denoise_loop(const NoisePredictor& predictor, const Tensor& z_T, const NoiseSchedule& s, int steps,
                    const SamplerOptions& opts = {});

/// denoise_loop with the toy model; inputs.noise_latent is z_T.
Tensor denoise_clip(const ToyDenoiser& model, const DenoiserInputs& inputs, const NoiseSchedule& s, int steps,
                    const SamplerOptions& opts = {});

struct TrainOptions {
  int steps = 2000;
  int batch = 4;
  double learning_rate = 3e-3;
  std::uint64_t seed = 1;
};

/// Adam on the LDM loss for a single clip (clean latent z0), random t and eps per sample.
/// Returns the per-step mean loss history.
std::vector<double> train_on_clip(ToyDenoiser& model, const DenoiserInputs& conditions, const Tensor& z0,
                                  const NoiseSchedule& s, const TrainOptions& opts);

/// Mean LDM loss over `samples` fixed (t, eps) draws from `seed`.
double evaluate_loss(const ToyDenoiser& model, const DenoiserInputs& conditions, const Tensor& z0,
                     const NoiseSchedule& s, int samples, std::uint64_t seed);

/// A moving-blob clip with matching conditions, for smoke training and demos.
/// The agnostic mask is empty, so masked_latent equals z0.
struct SyntheticClip {
  DenoiserInputs conditions;
  Tensor z0;
};

SyntheticClip synthetic_clip(const ToyDenoiser& model, std::size_t frames, std::size_t latent_size,
                             std::uint64_t seed);

}  // namespace tunnel::diffusion

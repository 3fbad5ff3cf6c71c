#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tunnel/tensor.hpp"
#include "tunnel/tunnel_extract.hpp"

namespace tunnel {

/// (original size, tunnel center, tunnel size) for one frame, in pixels.
struct TunnelTriplet {
  double orig_w = 0.0;
  double orig_h = 0.0;
  double center_x = 0.0;
  double center_y = 0.0;
  double tunnel_w = 0.0;
  double tunnel_h = 0.0;

  static TunnelTriplet from_box(const BBox& b, FrameSize frame);
};

std::vector<TunnelTriplet> tunnel_triplets(const Tunnel& t);

struct EmbeddingParams {
  std::size_t freq_dim = 64;
  double base = 10000.0;
  /// Divide center/size by the original frame size before encoding.
  bool normalize = false;
  Tensor weight;  // (6 * freq_dim, out_dim)
  Tensor bias;    // (out_dim)

  static EmbeddingParams random(std::size_t out_dim, std::mt19937_64& rng, std::size_t freq_dim = 64,
                                double base = 10000.0);
  std::size_t out_dim() const { return weight.empty() ? 0 : weight.dim(1); }
};

/// [sin(v w_0), cos(v w_0), ..., sin(v w_{d/2-1}), cos(v w_{d/2-1})], w_k = base^(-2k/d).
std::vector<double> sinusoidal_encode(double value, std::size_t freq_dim, double base);

/// Concatenated sinusoidal codes of the six scalars, shape (1, 6 * freq_dim).
Tensor triplet_features(const TunnelTriplet& t, const EmbeddingParams& p);

/// Linear map before the activation, shape (1, out_dim).
Tensor tunnel_embedding_preactivation(const TunnelTriplet& t, const EmbeddingParams& p);

/// SiLU(features W + b), length out_dim.
std::vector<double> tunnel_embedding(const TunnelTriplet& t, const EmbeddingParams& p);

/// One embedding row per frame, shape (f, out_dim).
Tensor tunnel_embeddings(const std::vector<TunnelTriplet>& frames, const EmbeddingParams& p);

/// Accumulates d weight / d bias for the batch version given d output (f, out_dim).
void tunnel_embeddings_backward(const std::vector<TunnelTriplet>& frames, const EmbeddingParams& p,
                                const Tensor& grad_out, Tensor& grad_weight, Tensor& grad_bias);

}  // namespace tunnel

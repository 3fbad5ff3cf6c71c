#include "tunnel/embedding.hpp"

#include <cmath>
#include <string>

#include "tunnel/error.hpp"
#include "tunnel/nn.hpp"

namespace tunnel {

TunnelTriplet TunnelTriplet::from_box(const BBox& b, FrameSize frame) {
  return {static_cast<double>(frame.width), static_cast<double>(frame.height), b.cx(), b.cy(), b.width(), b.height()};
}

std::vector<TunnelTriplet> tunnel_triplets(const Tunnel& t) {
  std::vector<TunnelTriplet> out;
  out.reserve(t.boxes.size());
  for (const auto& b : t.boxes) out.push_back(TunnelTriplet::from_box(b, t.frame_size));
  return out;
}

EmbeddingParams EmbeddingParams::random(std::size_t out_dim, std::mt19937_64& rng, std::size_t freq_dim,
                                        double base) {
  EmbeddingParams p;
  p.freq_dim = freq_dim;
  p.base = base;
  const std::size_t in = 6 * freq_dim;
  p.weight = Tensor::randn({in, out_dim}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  p.bias = Tensor({out_dim});
  return p;
}

std::vector<double> sinusoidal_encode(double value, std::size_t freq_dim, double base) {
  if (freq_dim == 0 || freq_dim % 2 != 0) {
    fail(ErrorCode::OddDim, "freq_dim must be a positive even number, got " + std::to_string(freq_dim));
  }
  std::vector<double> out(freq_dim);
  for (std::size_t k = 0; k < freq_dim / 2; ++k) {
    const double omega = std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(freq_dim));
    out[2 * k] = std::sin(value * omega);
    out[2 * k + 1] = std::cos(value * omega);
  }
  return out;
}

Tensor triplet_features(const TunnelTriplet& t, const EmbeddingParams& p) {
  double scalars[6] = {t.orig_w, t.orig_h, t.center_x, t.center_y, t.tunnel_w, t.tunnel_h};
  if (p.normalize) {
    scalars[2] /= t.orig_w;
    scalars[3] /= t.orig_h;
    scalars[4] /= t.orig_w;
    scalars[5] /= t.orig_h;
  }
  std::vector<double> feats;
  feats.reserve(6 * p.freq_dim);
  for (double s : scalars) {
    const auto code = sinusoidal_encode(s, p.freq_dim, p.base);
    feats.insert(feats.end(), code.begin(), code.end());
  }
  const std::size_t n = feats.size();
  return Tensor({1, n}, std::move(feats));
}

namespace {

void check_params(const EmbeddingParams& p) {
  if (p.weight.rank() != 2 || p.weight.dim(0) != 6 * p.freq_dim || p.bias.size() != p.weight.dim(1)) {
    fail(ErrorCode::DimensionMismatch, "embedding weight must be (6*freq_dim, out_dim) with a matching bias");
  }
}

}  // namespace

Tensor tunnel_embedding_preactivation(const TunnelTriplet& t, const EmbeddingParams& p) {
  check_params(p);
  return matmul(triplet_features(t, p), p.weight, p.bias);
}

std::vector<double> tunnel_embedding(const TunnelTriplet& t, const EmbeddingParams& p) {
  Tensor pre = tunnel_embedding_preactivation(t, p);
  std::vector<double> out(pre.values());
  for (double& v : out) v = nn::silu(v);
  return out;
}

Tensor tunnel_embeddings(const std::vector<TunnelTriplet>& frames, const EmbeddingParams& p) {
  check_params(p);
  Tensor out({frames.size(), p.out_dim()});
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto row = tunnel_embedding(frames[f], p);
    std::copy(row.begin(), row.end(), out.data().begin() + static_cast<long>(f * p.out_dim()));
  }
  return out;
}

void tunnel_embeddings_backward(const std::vector<TunnelTriplet>& frames, const EmbeddingParams& p,
                                const Tensor& grad_out, Tensor& grad_weight, Tensor& grad_bias) {
  check_params(p);
  if (grad_weight.empty()) grad_weight = zeros_like(p.weight);
  if (grad_bias.empty()) grad_bias = zeros_like(p.bias);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Tensor feats = triplet_features(frames[f], p);
    const Tensor pre = matmul(feats, p.weight, p.bias);
    Tensor d_pre({1, p.out_dim()});
    for (std::size_t k = 0; k < p.out_dim(); ++k) d_pre[k] = grad_out.at(f, k) * nn::silu_grad(pre[k]);
    grad_weight += matmul_tn(feats, d_pre);
    grad_bias += d_pre.reshaped({p.out_dim()});
  }
}

}  // namespace tunnel

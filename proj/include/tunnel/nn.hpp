#pragma once

// Toy-scale attention wirings and condition encoders. Feature clips are
// tensors of shape (frames, tokens, channels). Every learnable path has a
// hand-written backward pass; gradients are accumulated into a structure of
// the same type as the parameters.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "tunnel/image.hpp"
#include "tunnel/tensor.hpp"

namespace tunnel::nn {

/// Single-head projections: y = x W + b with W (c_in, c_out). Biases may be absent.
struct AttentionWeights {
  Tensor wq, wk, wv, wo;
  Tensor bq, bk, bv, bo;

  static AttentionWeights identity(std::size_t c);
  static AttentionWeights random(std::size_t c, std::mt19937_64& rng, double stddev);
  AttentionWeights zeros_like() const;
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
};

struct AttentionCache {
  Tensor q_in, k_in, v_in;
  Tensor q, k, v;
  Tensor probs;
  Tensor mixed;
};

/// softmax((q W_q)(k W_k)^T / sqrt(d)) (v W_v) W_o + b_o.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionWeights& w,
                 AttentionCache* cache = nullptr);

struct AttentionInputGrads {
  Tensor dq, dk, dv;
};

AttentionInputGrads attention_backward(const AttentionCache& cache, const AttentionWeights& w,
                                       const Tensor& grad_out, AttentionWeights& grad_w);

/// Clip helpers for (f, n, c) tensors.
Tensor frame_of(const Tensor& clip, std::size_t f);
void set_frame(Tensor& clip, std::size_t f, const Tensor& frame);

/// Per frame: self-attention over [frame tokens; ref tokens], keeping the frame-token outputs.
Tensor ref_attention(const Tensor& x, const Tensor& ref, const AttentionWeights& w,
                     std::vector<AttentionCache>* caches = nullptr);
/// Returns d x and accumulates d ref.
Tensor ref_attention_backward(const std::vector<AttentionCache>& caches, const AttentionWeights& w,
                              const Tensor& grad_out, AttentionWeights& grad_w, Tensor& grad_ref);

/// Per spatial token j: x[:, j] + selfattn(x[:, j] + embs).
Tensor temporal_attention(const Tensor& x, const Tensor& embs, const AttentionWeights& w,
                          std::vector<AttentionCache>* caches = nullptr);
Tensor temporal_attention_backward(const std::vector<AttentionCache>& caches, const AttentionWeights& w,
                                   const Tensor& grad_out, AttentionWeights& grad_w, Tensor& grad_embs);

/// Per frame: x + attention(x, env, env).
Tensor env_cross_attention(const Tensor& x, const Tensor& env, const AttentionWeights& w,
                           std::vector<AttentionCache>* caches = nullptr);
Tensor env_cross_attention_backward(const std::vector<AttentionCache>& caches, const AttentionWeights& w,
                                    const Tensor& grad_out, AttentionWeights& grad_w, Tensor& grad_env);

double silu(double x);
double silu_grad(double x);

/// Frozen random-projection patch extractor followed by a learnable linear map.
struct EnvEncoder {
  int grid = 4;
  int patch = 4;
  int channels = 3;
  Tensor extractor;  // (patch*patch*channels, feat_dim), frozen
  Tensor proj_w;     // (feat_dim, c)
  Tensor proj_b;     // (c)

  static EnvEncoder make(int channels, std::size_t feat_dim, std::size_t c, std::uint64_t seed);
  std::vector<Tensor*> params();
};

/// Frozen features of shape (grid*grid, feat_dim).
Tensor env_features(const Image& frame, const EnvEncoder& enc);
Tensor env_encode(const Image& frame, const EnvEncoder& enc);
/// Gradient of the learnable projection given the frozen features.
void env_encode_backward(const Tensor& features, const Tensor& grad_out, EnvEncoder& grad);

/// Two stride-2 3x3 convolutions with SiLU, then a 1x1 projection to c.
struct PoseEncoder {
  std::size_t in_channels = 3;
  Tensor conv1_w, conv1_b;  // (c1, in, 3, 3), (c1)
  Tensor conv2_w, conv2_b;  // (c2, c1, 3, 3), (c2)
  Tensor proj_w, proj_b;    // (c2, c), (c)

  static PoseEncoder make(std::size_t in_channels, std::size_t hidden, std::size_t c, std::mt19937_64& rng);
  PoseEncoder zeros_like() const;
  std::vector<Tensor*> params();
};

struct PoseCache {
  Tensor input;           // (in, H, W)
  Tensor pre1, pre2;      // conv outputs before SiLU
  Tensor act2_tokens;     // (H/4 * W/4, c2)
  std::size_t h1 = 0, w1 = 0, h2 = 0, w2 = 0;
};

/// Planar (channels, H, W) tensor from an interleaved image.
Tensor image_to_planar(const Image& img);

/// pose (in, H, W) -> tokens (H'*W', c).
Tensor pose_encode(const Tensor& pose, const PoseEncoder& enc, PoseCache* cache = nullptr);
Tensor pose_encode(const Image& pose_map, const PoseEncoder& enc);
void pose_encode_backward(const PoseCache& cache, const PoseEncoder& enc, const Tensor& grad_out,
                          PoseEncoder& grad);

/// Plain 2-D convolution (input (cin,H,W), weight (cout,cin,k,k)) and its backward.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t pad);
void conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out, std::size_t stride,
                     std::size_t pad, Tensor& grad_w, Tensor& grad_b, Tensor* grad_in);

/// Concatenates tensors into one flat vector and back.
std::vector<double> flatten(const std::vector<const Tensor*>& tensors);
void unflatten(std::span<const double> flat, const std::vector<Tensor*>& tensors);

/// Central-difference check: max over parameters of |a - n| / max(|a| + |n|, floor).
double grad_check(const std::function<double(std::span<const double>)>& fn, std::span<const double> params,
                  std::span<const double> analytic, double eps = 1e-3, double floor = 1e-6);

}  // namespace tunnel::nn

#include <algorithm>
#include <cmath>

#include "tunnel/error.hpp"
#include "tunnel/kernels.hpp"
#include "tunnel/nn.hpp"

namespace tunnel::nn {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

EnvEncoder EnvEncoder::make(int channels, std::size_t feat_dim, std::size_t c, std::uint64_t seed) {
  EnvEncoder enc;
  enc.channels = channels;
  std::mt19937_64 rng(seed);
  const std::size_t patch_len = static_cast<std::size_t>(enc.patch * enc.patch * channels);
  enc.extractor = Tensor::randn({patch_len, feat_dim}, rng, 1.0 / std::sqrt(static_cast<double>(patch_len)));
  enc.proj_w = Tensor::randn({feat_dim, c}, rng, 1.0 / std::sqrt(static_cast<double>(feat_dim)));
  enc.proj_b = Tensor({c});
  return enc;
}

std::vector<Tensor*> EnvEncoder::params() { return {&proj_w, &proj_b}; }

Tensor env_features(const Image& frame, const EnvEncoder& enc) {
  if (frame.channels != enc.channels) fail(ErrorCode::ShapeMismatch, "frame channel count does not match encoder");
  const int side = enc.grid * enc.patch;
  kernels::ResampleSpec spec;
  spec.out_width = spec.out_height = side;
  const double step_x = static_cast<double>(frame.width) / side;
  const double step_y = static_cast<double>(frame.height) / side;
  spec.x = {0.5 * step_x - 0.5, step_x};
  spec.y = {0.5 * step_y - 0.5, step_y};
  spec.clamp_x = {0.0, frame.width - 1.0};
  spec.clamp_y = {0.0, frame.height - 1.0};
  const Image small = kernels::omp::resample(frame, spec);

  const std::size_t cells = static_cast<std::size_t>(enc.grid * enc.grid);
  const std::size_t patch_len = static_cast<std::size_t>(enc.patch * enc.patch * enc.channels);
  Tensor patches({cells, patch_len});
  for (int gy = 0; gy < enc.grid; ++gy) {
    for (int gx = 0; gx < enc.grid; ++gx) {
      const std::size_t row = static_cast<std::size_t>(gy * enc.grid + gx);
      std::size_t k = 0;
      for (int py = 0; py < enc.patch; ++py) {
        for (int px = 0; px < enc.patch; ++px) {
          for (int c = 0; c < enc.channels; ++c) {
            patches.at(row, k++) = small.at(gx * enc.patch + px, gy * enc.patch + py, c);
          }
        }
      }
    }
  }
  return matmul(patches, enc.extractor);
}

Tensor env_encode(const Image& frame, const EnvEncoder& enc) {
  return matmul(env_features(frame, enc), enc.proj_w, enc.proj_b);
}

void env_encode_backward(const Tensor& features, const Tensor& grad_out, EnvEncoder& grad) {
  if (grad.proj_w.empty()) grad.proj_w = Tensor({features.dim(1), grad_out.dim(1)});
  if (grad.proj_b.empty()) grad.proj_b = Tensor({grad_out.dim(1)});
  grad.proj_w += matmul_tn(features, grad_out);
  grad.proj_b += column_sums(grad_out);
}

PoseEncoder PoseEncoder::make(std::size_t in_channels, std::size_t hidden, std::size_t c, std::mt19937_64& rng) {
  PoseEncoder enc;
  enc.in_channels = in_channels;
  const double s1 = 1.0 / std::sqrt(9.0 * in_channels);
  const double s2 = 1.0 / std::sqrt(9.0 * hidden);
  enc.conv1_w = Tensor::randn({hidden, in_channels, 3, 3}, rng, s1);
  enc.conv1_b = Tensor({hidden});
  enc.conv2_w = Tensor::randn({hidden, hidden, 3, 3}, rng, s2);
  enc.conv2_b = Tensor({hidden});
  enc.proj_w = Tensor::randn({hidden, c}, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  enc.proj_b = Tensor({c});
  return enc;
}

PoseEncoder PoseEncoder::zeros_like() const {
  PoseEncoder z;
  z.in_channels = in_channels;
  z.conv1_w = tunnel::zeros_like(conv1_w);
  z.conv1_b = tunnel::zeros_like(conv1_b);
  z.conv2_w = tunnel::zeros_like(conv2_w);
  z.conv2_b = tunnel::zeros_like(conv2_b);
  z.proj_w = tunnel::zeros_like(proj_w);
  z.proj_b = tunnel::zeros_like(proj_b);
  return z;
}

std::vector<Tensor*> PoseEncoder::params() { return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &proj_w, &proj_b}; }

Tensor image_to_planar(const Image& img) {
  Tensor t({static_cast<std::size_t>(img.channels), static_cast<std::size_t>(img.height),
            static_cast<std::size_t>(img.width)});
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        t[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] = img.at(x, y, c);
      }
    }
  }
  return t;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t pad) {
  if (input.rank() != 3 || weight.rank() != 4 || weight.dim(1) != input.dim(0) || weight.dim(2) != weight.dim(3)) {
    fail(ErrorCode::ShapeMismatch, "conv2d input" + shape_string(input.shape()) + " weight" +
                                       shape_string(weight.shape()));
  }
  kernels::ConvShape s{input.dim(0), weight.dim(0), input.dim(1), input.dim(2), weight.dim(2), stride, pad};
  if (s.height + 2 * pad < s.kernel || s.width + 2 * pad < s.kernel) {
    fail(ErrorCode::ShapeMismatch, "conv2d input smaller than the kernel");
  }
  Tensor out({s.out_channels, s.out_height(), s.out_width()});
  kernels::omp::conv2d(input.data(), weight.data(), bias.data(), out.data(), s);
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out, std::size_t stride,
                     std::size_t pad, Tensor& grad_w, Tensor& grad_b, Tensor* grad_in) {
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  const std::size_t oh = grad_out.dim(1), ow = grad_out.dim(2);
  if (grad_w.empty()) grad_w = Tensor(weight.shape());
  if (grad_b.empty()) grad_b = Tensor({cout});
  if (grad_in) *grad_in = Tensor(input.shape());
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double g = grad_out[(co * oh + oy) * ow + ox];
        grad_b[co] += g;
        if (g == 0.0) continue;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              const std::size_t wi = ((co * cin + ci) * k + ky) * k + kx;
              const std::size_t ii = (ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
              grad_w[wi] += g * input[ii];
              if (grad_in) (*grad_in)[ii] += g * weight[wi];
            }
          }
        }
      }
    }
  }
}

namespace {

Tensor apply_silu(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data()) v = silu(v);
  return out;
}

// (c, h, w) planar -> (h*w, c) tokens.
Tensor planar_to_tokens(const Tensor& t) {
  return transpose(t.reshaped({t.dim(0), t.dim(1) * t.dim(2)}));
}

}  // namespace

Tensor pose_encode(const Tensor& pose, const PoseEncoder& enc, PoseCache* cache) {
  if (pose.rank() != 3 || pose.dim(0) != enc.in_channels) {
    fail(ErrorCode::ShapeMismatch, "pose map " + shape_string(pose.shape()) + " does not match the encoder");
  }
  Tensor pre1 = conv2d(pose, enc.conv1_w, enc.conv1_b, 2, 1);
  Tensor pre2 = conv2d(apply_silu(pre1), enc.conv2_w, enc.conv2_b, 2, 1);
  Tensor tokens = planar_to_tokens(apply_silu(pre2));
  Tensor out = matmul(tokens, enc.proj_w, enc.proj_b);
  if (cache) {
    cache->input = pose;
    cache->h1 = pre1.dim(1);
    cache->w1 = pre1.dim(2);
    cache->h2 = pre2.dim(1);
    cache->w2 = pre2.dim(2);
    cache->pre1 = std::move(pre1);
    cache->pre2 = std::move(pre2);
    cache->act2_tokens = std::move(tokens);
  }
  return out;
}

Tensor pose_encode(const Image& pose_map, const PoseEncoder& enc) { return pose_encode(image_to_planar(pose_map), enc); }

void pose_encode_backward(const PoseCache& c, const PoseEncoder& enc, const Tensor& grad_out, PoseEncoder& g) {
  if (g.proj_w.empty()) g = enc.zeros_like();
  g.proj_w += matmul_tn(c.act2_tokens, grad_out);
  g.proj_b += column_sums(grad_out);
  // (n, c2) -> planar (c2, h2, w2), through SiLU.
  Tensor d_act2 = transpose(matmul_nt(grad_out, enc.proj_w)).reshaped(c.pre2.shape());
  for (std::size_t i = 0; i < d_act2.size(); ++i) d_act2[i] *= silu_grad(c.pre2[i]);
  Tensor act1 = apply_silu(c.pre1);
  Tensor d_act1;
  conv2d_backward(act1, enc.conv2_w, d_act2, 2, 1, g.conv2_w, g.conv2_b, &d_act1);
  for (std::size_t i = 0; i < d_act1.size(); ++i) d_act1[i] *= silu_grad(c.pre1[i]);
  conv2d_backward(c.input, enc.conv1_w, d_act1, 2, 1, g.conv1_w, g.conv1_b, nullptr);
}

std::vector<double> flatten(const std::vector<const Tensor*>& tensors) {
  std::vector<double> flat;
  for (const Tensor* t : tensors) flat.insert(flat.end(), t->values().begin(), t->values().end());
  return flat;
}

void unflatten(std::span<const double> flat, const std::vector<Tensor*>& tensors) {
  std::size_t offset = 0;
  for (Tensor* t : tensors) {
    if (offset + t->size() > flat.size()) fail(ErrorCode::ShapeMismatch, "flat parameter vector too short");
    std::copy(flat.begin() + static_cast<long>(offset), flat.begin() + static_cast<long>(offset + t->size()),
              t->data().begin());
    offset += t->size();
  }
  if (offset != flat.size()) fail(ErrorCode::ShapeMismatch, "flat parameter vector too long");
}

double grad_check(const std::function<double(std::span<const double>)>& fn, std::span<const double> params,
                  std::span<const double> analytic, double eps, double floor) {
  if (params.size() != analytic.size()) fail(ErrorCode::ShapeMismatch, "gradient length differs from parameters");
  std::vector<double> p(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double up = fn(p);
    p[i] = saved - eps;
    const double down = fn(p);
    p[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(std::abs(analytic[i]) + std::abs(numeric), floor);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace tunnel::nn

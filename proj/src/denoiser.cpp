#include "tunnel/denoiser.hpp"

#include <cmath>
#include <string>

#include "tunnel/error.hpp"

namespace tunnel::diffusion {

namespace {

Tensor scaled_randn(Shape shape, std::mt19937_64& rng, double stddev) { return Tensor::randn(std::move(shape), rng, stddev); }

nn::AttentionWeights attention_init(std::size_t c, std::mt19937_64& rng) {
  nn::AttentionWeights w;
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  w.wq = scaled_randn({c, c}, rng, s);
  w.wk = scaled_randn({c, c}, rng, s);
  w.wv = scaled_randn({c, c}, rng, s);
  w.wo = scaled_randn({c, c}, rng, 0.1 * s);
  w.bq = Tensor({c});
  w.bk = Tensor({c});
  w.bv = Tensor({c});
  w.bo = Tensor({c});
  return w;
}

// (f, C, h, w) latent -> (f*h*w, C) tokens.
Tensor latent_to_tokens(const Tensor& z) {
  const std::size_t f = z.dim(0), ch = z.dim(1), n = z.dim(2) * z.dim(3);
  Tensor out({f * n, ch});
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t k = 0; k < ch; ++k) {
      for (std::size_t j = 0; j < n; ++j) out.at(i * n + j, k) = z[(i * ch + k) * n + j];
    }
  }
  return out;
}

Tensor tokens_to_latent(const Tensor& tokens, const Shape& latent_shape) {
  Tensor z(latent_shape);
  const std::size_t f = latent_shape[0], ch = latent_shape[1], n = latent_shape[2] * latent_shape[3];
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t k = 0; k < ch; ++k) {
      for (std::size_t j = 0; j < n; ++j) z[(i * ch + k) * n + j] = tokens.at(i * n + j, k);
    }
  }
  return z;
}

Tensor slice_first(const Tensor& t, std::size_t i) {
  Shape s(t.shape().begin() + 1, t.shape().end());
  const std::size_t len = shape_size(s);
  const auto begin = t.values().begin() + static_cast<long>(i * len);
  return Tensor(s, std::vector<double>(begin, begin + static_cast<long>(len)));
}

struct Trace {
  Tensor tokens9;
  std::vector<nn::PoseCache> pose;
  Tensor h1;
  Tensor temb;
  Tensor gamma;
  Tensor h2;
  Tensor ref_tokens;
  std::vector<nn::AttentionCache> ref;
  std::vector<nn::AttentionCache> env;
  Tensor embs;
  std::vector<nn::AttentionCache> temporal;
  Tensor h5;
};

void validate(const ToyDenoiser& m, const DenoiserInputs& in) {
  const Tensor& z = in.noise_latent;
  if (z.rank() != 4 || z.dim(1) != 4) fail(ErrorCode::ShapeMismatch, "noise latent must be (f, 4, h, w)");
  const Shape& s = z.shape();
  if (in.masked_latent.shape() != s) fail(ErrorCode::ShapeMismatch, "masked latent shape differs from noise latent");
  if (in.mask.shape() != Shape{s[0], 1, s[2], s[3]}) fail(ErrorCode::ShapeMismatch, "mask must be (f, 1, h, w)");
  if (in.pose_maps.shape() != Shape{s[0], m.config.pose_channels, 4 * s[2], 4 * s[3]}) {
    fail(ErrorCode::ShapeMismatch, "pose maps must be (f, pose_channels, 4h, 4w), got " +
                                       shape_string(in.pose_maps.shape()));
  }
  if (in.tunnel.size() != s[0]) fail(ErrorCode::ShapeMismatch, "need one tunnel triplet per frame");
  if (in.ref_latent_tokens.size() > 0 && (in.ref_latent_tokens.rank() != 2 || in.ref_latent_tokens.dim(1) != 4)) {
    fail(ErrorCode::ShapeMismatch, "reference tokens must be (n_r, 4)");
  }
  if (in.env_features.size() > 0 &&
      (in.env_features.rank() != 2 || in.env_features.dim(1) != m.env.proj_w.dim(0))) {
    fail(ErrorCode::ShapeMismatch, "environment features must be (n_e, feat_dim)");
  }
}

Tensor forward(const ToyDenoiser& m, const DenoiserInputs& in, int t, Trace* tr) {
  validate(m, in);
  const std::size_t f = in.frames();
  const std::size_t h = in.noise_latent.dim(2), w = in.noise_latent.dim(3);
  const std::size_t n = h * w;
  const std::size_t c = m.config.channels;

  Tensor tokens9({f * n, 9});
  {
    const Tensor a = latent_to_tokens(in.masked_latent);
    const Tensor b = latent_to_tokens(in.noise_latent);
    const Tensor mk = latent_to_tokens(in.mask);
    for (std::size_t r = 0; r < f * n; ++r) {
      for (std::size_t k = 0; k < 4; ++k) {
        tokens9.at(r, k) = a.at(r, k);
        tokens9.at(r, 4 + k) = b.at(r, k);
      }
      tokens9.at(r, 8) = mk.at(r, 0);
    }
  }
  Tensor h1 = matmul(tokens9, m.in_w, m.in_b).reshaped({f, n, c});

  std::vector<nn::PoseCache> pose_caches(f);
  for (std::size_t i = 0; i < f; ++i) {
    const Tensor feats = nn::pose_encode(slice_first(in.pose_maps, i), m.pose, &pose_caches[i]);
    if (feats.dim(0) != n) fail(ErrorCode::ShapeMismatch, "pose features do not match the latent grid");
    Tensor frame = nn::frame_of(h1, i);
    frame += feats;
    nn::set_frame(h1, i, frame);
  }

  const auto code = timestep_encoding(t, m.config.time_dim);
  Tensor temb({1, code.size()}, code);
  const Tensor film = matmul(temb, m.time_w, m.time_b);
  Tensor h2 = h1;
  for (std::size_t r = 0; r < f * n; ++r) {
    for (std::size_t k = 0; k < c; ++k) h2[r * c + k] = h1[r * c + k] * (1.0 + film[k]) + film[c + k];
  }

  Tensor ref_tokens({0, c});
  if (in.ref_latent_tokens.size() > 0) ref_tokens = matmul(in.ref_latent_tokens, m.ref_w, m.ref_b);
  std::vector<nn::AttentionCache> ref_caches;
  Tensor h3 = h2 + nn::ref_attention(h2, ref_tokens, m.ref_attn, &ref_caches);

  Tensor env_tokens({0, c});
  if (in.env_features.size() > 0) env_tokens = matmul(in.env_features, m.env.proj_w, m.env.proj_b);
  std::vector<nn::AttentionCache> env_caches;
  Tensor h4 = nn::env_cross_attention(h3, env_tokens, m.env_attn, &env_caches);

  Tensor embs = tunnel_embeddings(in.tunnel, m.tunnel_emb);
  std::vector<nn::AttentionCache> temporal_caches;
  Tensor h5 = nn::temporal_attention(h4, embs, m.temporal_attn, &temporal_caches);

  Tensor out = tokens_to_latent(matmul(h5.reshaped({f * n, c}), m.head_w, m.head_b), in.noise_latent.shape());
  if (!all_finite(out)) fail(ErrorCode::NonFinite, "denoiser produced non-finite values");
  if (tr) {
    tr->tokens9 = std::move(tokens9);
    tr->pose = std::move(pose_caches);
    tr->h1 = std::move(h1);
    tr->temb = std::move(temb);
    tr->gamma = film;
    tr->h2 = std::move(h2);
    tr->ref_tokens = std::move(ref_tokens);
    tr->ref = std::move(ref_caches);
    tr->env = std::move(env_caches);
    tr->embs = std::move(embs);
    tr->temporal = std::move(temporal_caches);
    tr->h5 = std::move(h5);
  }
  return out;
}

void backward(const ToyDenoiser& m, const DenoiserInputs& in, const Trace& tr, const Tensor& d_out, ToyDenoiser& g) {
  const std::size_t f = in.frames();
  const std::size_t n = in.noise_latent.dim(2) * in.noise_latent.dim(3);
  const std::size_t c = m.config.channels;

  const Tensor d_tokens = latent_to_tokens(d_out);
  const Tensor h5_flat = tr.h5.reshaped({f * n, c});
  g.head_w += matmul_tn(h5_flat, d_tokens);
  g.head_b += column_sums(d_tokens);
  const Tensor d_h5 = matmul_nt(d_tokens, m.head_w).reshaped({f, n, c});

  Tensor d_embs;
  const Tensor d_h4 = nn::temporal_attention_backward(tr.temporal, m.temporal_attn, d_h5, g.temporal_attn, d_embs);
  tunnel_embeddings_backward(in.tunnel, m.tunnel_emb, d_embs, g.tunnel_emb.weight, g.tunnel_emb.bias);

  Tensor d_env;
  const Tensor d_h3 = nn::env_cross_attention_backward(tr.env, m.env_attn, d_h4, g.env_attn, d_env);
  if (!d_env.empty()) nn::env_encode_backward(in.env_features, d_env, g.env);

  Tensor d_ref;
  Tensor d_h2 = d_h3 + nn::ref_attention_backward(tr.ref, m.ref_attn, d_h3, g.ref_attn, d_ref);
  if (!d_ref.empty()) {
    g.ref_w += matmul_tn(in.ref_latent_tokens, d_ref);
    g.ref_b += column_sums(d_ref);
  }

  Tensor d_film({1, 2 * c});
  Tensor d_h1(d_h2.shape());
  for (std::size_t r = 0; r < f * n; ++r) {
    for (std::size_t k = 0; k < c; ++k) {
      const double d = d_h2[r * c + k];
      d_film[k] += d * tr.h1[r * c + k];
      d_film[c + k] += d;
      d_h1[r * c + k] = d * (1.0 + tr.gamma[k]);
    }
  }
  g.time_w += matmul_tn(tr.temb, d_film);
  g.time_b += d_film.reshaped({2 * c});

  for (std::size_t i = 0; i < f; ++i) {
    nn::pose_encode_backward(tr.pose[i], m.pose, nn::frame_of(d_h1, i), g.pose);
  }
  const Tensor d_h0 = d_h1.reshaped({f * n, c});
  g.in_w += matmul_tn(tr.tokens9, d_h0);
  g.in_b += column_sums(d_h0);
}

}  // namespace

ToyDenoiser ToyDenoiser::make(const DenoiserConfig& config) {
  std::mt19937_64 rng(config.seed);
  const std::size_t c = config.channels;
  ToyDenoiser m;
  m.config = config;
  m.in_w = scaled_randn({9, c}, rng, 1.0 / 3.0);
  m.in_b = Tensor({c});
  m.time_w = scaled_randn({config.time_dim, 2 * c}, rng, 0.01);
  m.time_b = Tensor({2 * c});
  m.pose = nn::PoseEncoder::make(config.pose_channels, config.pose_hidden, c, rng);
  m.pose.proj_w *= 0.1;
  m.ref_w = scaled_randn({4, c}, rng, 0.5);
  m.ref_b = Tensor({c});
  m.ref_attn = attention_init(c, rng);
  m.env = nn::EnvEncoder::make(config.env_image_channels, config.env_feat_dim, c, config.seed ^ 0x5eedULL);
  m.env_attn = attention_init(c, rng);
  m.tunnel_emb = EmbeddingParams::random(c, rng, config.tunnel_freq_dim);
  m.tunnel_emb.weight *= 0.1;
  m.temporal_attn = attention_init(c, rng);
  m.head_w = scaled_randn({c, 4}, rng, 1.0 / std::sqrt(static_cast<double>(c)));
  m.head_b = Tensor({4});
  return m;
}

ToyDenoiser ToyDenoiser::zeros_like() const {
  ToyDenoiser z = *this;
  for (auto& [name, t] : z.named_tensors()) *t = tunnel::zeros_like(*t);
  return z;
}

std::vector<std::pair<std::string, Tensor*>> ToyDenoiser::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out{
      {"in.w", &in_w},           {"in.b", &in_b},           {"time.w", &time_w},         {"time.b", &time_b},
      {"pose.conv1.w", &pose.conv1_w}, {"pose.conv1.b", &pose.conv1_b}, {"pose.conv2.w", &pose.conv2_w},
      {"pose.conv2.b", &pose.conv2_b}, {"pose.proj.w", &pose.proj_w},   {"pose.proj.b", &pose.proj_b},
      {"ref.w", &ref_w},         {"ref.b", &ref_b},         {"env.extractor", &env.extractor},
      {"env.proj.w", &env.proj_w}, {"env.proj.b", &env.proj_b}, {"tunnel_emb.w", &tunnel_emb.weight},
      {"tunnel_emb.b", &tunnel_emb.bias}, {"head.w", &head_w}, {"head.b", &head_b}};
  const std::pair<const char*, nn::AttentionWeights*> blocks[] = {
      {"ref_attn", &ref_attn}, {"env_attn", &env_attn}, {"temporal_attn", &temporal_attn}};
  const char* suffixes[] = {"wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo"};
  for (const auto& [prefix, block] : blocks) {
    auto ps = block->params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!ps[i]->empty()) out.emplace_back(std::string(prefix) + "." + suffixes[i], ps[i]);
    }
  }
  return out;
}

std::vector<Tensor*> ToyDenoiser::trainable() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_tensors()) {
    if (name != "env.extractor") out.push_back(t);
  }
  return out;
}

std::vector<double> timestep_encoding(int t, std::size_t dim) {
  return sinusoidal_encode(static_cast<double>(t), dim, 10000.0);
}

Tensor predict_noise(const ToyDenoiser& model, const DenoiserInputs& inputs, int t) {
  return forward(model, inputs, t, nullptr);
}

Tensor predict_noise_with_grad(const ToyDenoiser& model, const DenoiserInputs& inputs, int t,
                               const std::function<Tensor(const Tensor&)>& loss_grad, ToyDenoiser& grads) {
  Trace trace;
  Tensor pred = forward(model, inputs, t, &trace);
  backward(model, inputs, trace, loss_grad(pred), grads);
  return pred;
}

Tensor ddpm_step(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s, const Tensor* noise) {
  if (z_t.shape() != eps_hat.shape()) fail(ErrorCode::ShapeMismatch, "noise estimate shape differs from z_t");
  const double alpha = s.alpha(t);
  const double beta = s.beta(t);
  const double abar = s.alpha_bar(t);
  if (!(abar < 1.0)) fail(ErrorCode::BadRange, "reverse step needs alpha_bar < 1");
  const double coef = beta / std::sqrt(1.0 - abar);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv_sqrt_alpha * (z_t[i] - coef * eps_hat[i]);
  if (noise && t > 1) {
    const double sigma = std::sqrt((1.0 - s.alpha_bar(t - 1)) / (1.0 - abar) * beta);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * (*noise)[i];
  }
  return out;
}

Tensor denoise_loop(const NoisePredictor& predictor, const Tensor& z_T, const NoiseSchedule& s, int steps,
                    const SamplerOptions& opts) {
  if (steps < 0 || steps > s.steps()) fail(ErrorCode::BadRange, "steps must lie in [0, T]");
  std::mt19937_64 rng(opts.seed);
  Tensor z = z_T;
  for (int t = s.steps(); t > s.steps() - steps; --t) {
    const Tensor eps_hat = predictor(z, t);
    if (opts.deterministic) {
      z = ddpm_step(z, eps_hat, t, s, nullptr);
    } else {
      const Tensor noise = gaussian_like(z.shape(), rng);
      z = ddpm_step(z, eps_hat, t, s, &noise);
    }
  }
  return z;
}

Tensor denoise_clip(const ToyDenoiser& model, const DenoiserInputs& inputs, const NoiseSchedule& s, int steps,
                    const SamplerOptions& opts) {
  DenoiserInputs work = inputs;
  auto predictor = [&](const Tensor& z, int t) {
    work.noise_latent = z;
    return predict_noise(model, work, t);
  };
  return denoise_loop(predictor, inputs.noise_latent, s, steps, opts);
}

namespace {

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int step = 0;
  std::vector<Tensor> m, v;

  void update(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) {
    if (m.empty()) {
      for (const Tensor* p : params) {
        m.emplace_back(p->shape());
        v.emplace_back(p->shape());
      }
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, step);
    const double c2 = 1.0 - std::pow(beta2, step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *grads[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[i][k] = beta1 * m[i][k] + (1.0 - beta1) * g[k];
        v[i][k] = beta2 * v[i][k] + (1.0 - beta2) * g[k] * g[k];
        p[k] -= lr * (m[i][k] / c1) / (std::sqrt(v[i][k] / c2) + eps);
      }
    }
  }
};

}  // namespace

std::vector<double> train_on_clip(ToyDenoiser& model, const DenoiserInputs& conditions, const Tensor& z0,
                                  const NoiseSchedule& s, const TrainOptions& opts) {
  if (z0.shape() != conditions.masked_latent.shape()) fail(ErrorCode::ShapeMismatch, "z0 shape differs from the clip");
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> pick_t(1, s.steps());
  Adam adam;
  adam.lr = opts.learning_rate;
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(opts.steps));
  DenoiserInputs work = conditions;
  for (int step = 0; step < opts.steps; ++step) {
    ToyDenoiser grads = model.zeros_like();
    double loss = 0.0;
    for (int b = 0; b < opts.batch; ++b) {
      const int t = pick_t(rng);
      const Tensor eps = gaussian_like(z0.shape(), rng);
      work.noise_latent = add_noise(z0, eps, t, s);
      const double scale = 2.0 / (static_cast<double>(eps.size()) * opts.batch);
      const Tensor pred = predict_noise_with_grad(model, work, t, [&](const Tensor& p) {
        Tensor g = p - eps;
        g *= scale;
        return g;
      }, grads);
      loss += ldm_loss(pred, eps) / opts.batch;
    }
    adam.update(model.trainable(), grads.trainable());
    history.push_back(loss);
  }
  return history;
}

double evaluate_loss(const ToyDenoiser& model, const DenoiserInputs& conditions, const Tensor& z0,
                     const NoiseSchedule& s, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_t(1, s.steps());
  DenoiserInputs work = conditions;
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    const int t = pick_t(rng);
    const Tensor eps = gaussian_like(z0.shape(), rng);
    work.noise_latent = add_noise(z0, eps, t, s);
    total += ldm_loss(predict_noise(model, work, t), eps);
  }
  return total / samples;
}

SyntheticClip synthetic_clip(const ToyDenoiser& model, std::size_t frames, std::size_t latent_size,
                             std::uint64_t seed) {
  if (frames == 0 || latent_size == 0) fail(ErrorCode::InvalidArgument, "synthetic clip needs frames and a latent size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int side = static_cast<int>(2 * latent_size);
  const double radius = 0.25 * side;
  const double x_start = radius + unit(rng) * 0.25 * side;
  const double y_mid = 0.5 * side;
  const double speed = 0.5 * side / static_cast<double>(frames);

  auto blob = [&](double cx, double cy, int size, double r, double level) {
    Image img(size, size, 1);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = (x + 0.5 - cx) / r, dy = (y + 0.5 - cy) / r;
        img.at(x, y) = level * std::exp(-(dx * dx + dy * dy));
      }
    }
    return img;
  };

  SyntheticClip clip;
  DenoiserInputs& in = clip.conditions;
  const std::size_t pose_side = 4 * latent_size;
  const Shape latent_shape{frames, 4, latent_size, latent_size};
  std::vector<double> z0, pose;
  const FrameSize frame_size{4 * side, 4 * side};
  for (std::size_t i = 0; i < frames; ++i) {
    const double cx = x_start + speed * static_cast<double>(i);
    const Tensor z = toy_encode(blob(cx, y_mid, side, radius, 0.9));
    z0.insert(z0.end(), z.values().begin(), z.values().end());
    const double k = static_cast<double>(pose_side) / side;
    const Image p = blob(cx * k, y_mid * k, static_cast<int>(pose_side), 1.5, 1.0);
    pose.insert(pose.end(), p.data.begin(), p.data.end());
    const BBox box = BBox::from_center(4 * cx, 4 * y_mid, 4 * 2 * radius, 4 * 2 * radius);
    in.tunnel.push_back(TunnelTriplet::from_box(box, frame_size));
  }
  clip.z0 = Tensor(latent_shape, std::move(z0));
  in.masked_latent = clip.z0;
  in.noise_latent = Tensor(latent_shape);
  in.mask = Tensor({frames, 1, latent_size, latent_size});
  in.pose_maps = Tensor({frames, 1, pose_side, pose_side}, std::move(pose));
  const Tensor garment = toy_encode(blob(0.5 * side, 0.5 * side, side, radius, 0.9));
  in.ref_latent_tokens = transpose(garment.reshaped({4, latent_size * latent_size}));
  Image env(side, side, model.env.channels);
  for (double& v : env.data) v = unit(rng);
  in.env_features = nn::env_features(env, model.env);
  return clip;
}

}  // namespace tunnel::diffusion

#include <cmath>
#include <string>

#include "tunnel/error.hpp"
#include "tunnel/kernels.hpp"
#include "tunnel/nn.hpp"

namespace tunnel::nn {

namespace {

Tensor eye(std::size_t c) {
  Tensor t({c, c});
  for (std::size_t i = 0; i < c; ++i) t.at(i, i) = 1.0;
  return t;
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (dst.empty() && !src.empty()) {
    dst = src;
  } else {
    dst += src;
  }
}

void accumulate_bias(Tensor& grad_b, const Tensor& bias, const Tensor& grad_y) {
  if (bias.empty()) return;
  if (grad_b.empty()) grad_b = Tensor(bias.shape());
  grad_b += column_sums(grad_y);
}

void require_clip(const Tensor& x, const char* what) {
  if (x.rank() != 3) fail(ErrorCode::ShapeMismatch, std::string(what) + " expects a (f, n, c) clip");
}

}  // namespace

AttentionWeights AttentionWeights::identity(std::size_t c) {
  return {eye(c), eye(c), eye(c), eye(c), {}, {}, {}, {}};
}

AttentionWeights AttentionWeights::random(std::size_t c, std::mt19937_64& rng, double stddev) {
  AttentionWeights w;
  w.wq = Tensor::randn({c, c}, rng, stddev);
  w.wk = Tensor::randn({c, c}, rng, stddev);
  w.wv = Tensor::randn({c, c}, rng, stddev);
  w.wo = Tensor::randn({c, c}, rng, stddev);
  w.bq = Tensor::randn({c}, rng, stddev);
  w.bk = Tensor::randn({c}, rng, stddev);
  w.bv = Tensor::randn({c}, rng, stddev);
  w.bo = Tensor::randn({c}, rng, stddev);
  return w;
}

AttentionWeights AttentionWeights::zeros_like() const {
  auto z = [](const Tensor& t) { return t.empty() ? Tensor{} : tunnel::zeros_like(t); };
  return {z(wq), z(wk), z(wv), z(wo), z(bq), z(bk), z(bv), z(bo)};
}

std::vector<Tensor*> AttentionWeights::params() { return {&wq, &wk, &wv, &wo, &bq, &bk, &bv, &bo}; }

std::vector<const Tensor*> AttentionWeights::params() const { return {&wq, &wk, &wv, &wo, &bq, &bk, &bv, &bo}; }

Tensor attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, const AttentionWeights& w,
                 AttentionCache* cache) {
  if (q_in.rank() != 2 || k_in.rank() != 2 || v_in.rank() != 2 || k_in.dim(0) != v_in.dim(0) ||
      q_in.dim(1) != w.wq.dim(0) || k_in.dim(1) != w.wk.dim(0) || v_in.dim(1) != w.wv.dim(0) ||
      w.wq.dim(1) != w.wk.dim(1) || w.wv.dim(1) != w.wo.dim(0)) {
    fail(ErrorCode::ShapeMismatch, "attention q" + shape_string(q_in.shape()) + " k" + shape_string(k_in.shape()) +
                                       " v" + shape_string(v_in.shape()));
  }
  if (k_in.dim(0) == 0) fail(ErrorCode::ShapeMismatch, "attention needs at least one key");
  Tensor q = matmul(q_in, w.wq, w.bq);
  Tensor k = matmul(k_in, w.wk, w.bk);
  Tensor v = matmul(v_in, w.wv, w.bv);
  const std::size_t m = q.dim(0), n = k.dim(0), d = q.dim(1), dv = v.dim(1);
  Tensor probs({m, n});
  Tensor mixed({m, dv});
  kernels::omp::attention(q.data(), k.data(), v.data(), probs.data(), mixed.data(), m, n, d, dv,
                          1.0 / std::sqrt(static_cast<double>(d)));
  Tensor out = matmul(mixed, w.wo, w.bo);
  if (!all_finite(out)) fail(ErrorCode::NonFinite, "attention produced non-finite values");
  if (cache) {
    *cache = {q_in, k_in, v_in, std::move(q), std::move(k), std::move(v), std::move(probs), std::move(mixed)};
  }
  return out;
}

AttentionInputGrads attention_backward(const AttentionCache& c, const AttentionWeights& w, const Tensor& grad_out,
                                       AttentionWeights& g) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.q.dim(1)));
  accumulate(g.wo, matmul_tn(c.mixed, grad_out));
  accumulate_bias(g.bo, w.bo, grad_out);
  const Tensor d_mixed = matmul_nt(grad_out, w.wo);
  const Tensor d_probs = matmul_nt(d_mixed, c.v);
  const Tensor d_v = matmul_tn(c.probs, d_mixed);

  // Softmax backward, then the 1/sqrt(d) scale.
  Tensor d_scores(c.probs.shape());
  const std::size_t m = c.probs.dim(0), n = c.probs.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += d_probs.at(i, j) * c.probs.at(i, j);
    for (std::size_t j = 0; j < n; ++j) d_scores.at(i, j) = c.probs.at(i, j) * (d_probs.at(i, j) - dot) * scale;
  }
  const Tensor d_q = matmul(d_scores, c.k);
  const Tensor d_k = matmul_tn(d_scores, c.q);

  accumulate(g.wq, matmul_tn(c.q_in, d_q));
  accumulate(g.wk, matmul_tn(c.k_in, d_k));
  accumulate(g.wv, matmul_tn(c.v_in, d_v));
  accumulate_bias(g.bq, w.bq, d_q);
  accumulate_bias(g.bk, w.bk, d_k);
  accumulate_bias(g.bv, w.bv, d_v);
  return {matmul_nt(d_q, w.wq), matmul_nt(d_k, w.wk), matmul_nt(d_v, w.wv)};
}

Tensor frame_of(const Tensor& clip, std::size_t f) {
  const std::size_t n = clip.dim(1), c = clip.dim(2);
  const auto begin = clip.values().begin() + static_cast<long>(f * n * c);
  return Tensor({n, c}, std::vector<double>(begin, begin + static_cast<long>(n * c)));
}

void set_frame(Tensor& clip, std::size_t f, const Tensor& frame) {
  const std::size_t stride = clip.dim(1) * clip.dim(2);
  std::copy(frame.values().begin(), frame.values().end(), clip.data().begin() + static_cast<long>(f * stride));
}

Tensor ref_attention(const Tensor& x, const Tensor& ref, const AttentionWeights& w,
                     std::vector<AttentionCache>* caches) {
  require_clip(x, "ref_attention");
  if (ref.rank() != 2 || (ref.dim(0) > 0 && ref.dim(1) != x.dim(2))) {
    fail(ErrorCode::ShapeMismatch, "reference tokens must be (n_r, c)");
  }
  const std::size_t frames = x.dim(0);
  Tensor out(x.shape());
  if (caches) caches->assign(frames, {});
  for (std::size_t f = 0; f < frames; ++f) {
    const Tensor tokens = frame_of(x, f);
    const Tensor joint = ref.dim(0) > 0 ? concat_rows(tokens, ref) : tokens;
    // Queries are restricted to the denoising tokens: the reference outputs are discarded anyway.
    set_frame(out, f, attention(tokens, joint, joint, w, caches ? &(*caches)[f] : nullptr));
  }
  return out;
}

Tensor ref_attention_backward(const std::vector<AttentionCache>& caches, const AttentionWeights& w,
                              const Tensor& grad_out, AttentionWeights& grad_w, Tensor& grad_ref) {
  Tensor dx(grad_out.shape());
  const std::size_t n = grad_out.dim(1);
  for (std::size_t f = 0; f < caches.size(); ++f) {
    const auto g = attention_backward(caches[f], w, frame_of(grad_out, f), grad_w);
    Tensor d_joint = g.dk + g.dv;
    Tensor d_tokens = g.dq + d_joint.rows(0, n);
    set_frame(dx, f, d_tokens);
    if (d_joint.dim(0) > n) {
      const Tensor d_ref = d_joint.rows(n, d_joint.dim(0));
      if (grad_ref.empty()) grad_ref = Tensor(d_ref.shape());
      grad_ref += d_ref;
    }
  }
  return dx;
}

namespace {

Tensor token_sequence(const Tensor& x, std::size_t j) {
  const std::size_t frames = x.dim(0), n = x.dim(1), c = x.dim(2);
  Tensor s({frames, c});
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < c; ++k) s.at(f, k) = x[(f * n + j) * c + k];
  }
  return s;
}

void add_token_sequence(Tensor& x, std::size_t j, const Tensor& s) {
  const std::size_t frames = x.dim(0), n = x.dim(1), c = x.dim(2);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < c; ++k) x[(f * n + j) * c + k] += s.at(f, k);
  }
}

}  // namespace

Tensor temporal_attention(const Tensor& x, const Tensor& embs, const AttentionWeights& w,
                          std::vector<AttentionCache>* caches) {
  require_clip(x, "temporal_attention");
  if (embs.rank() != 2 || embs.dim(0) != x.dim(0) || embs.dim(1) != x.dim(2)) {
    fail(ErrorCode::ShapeMismatch, "tunnel embeddings must be (f, c), got " + shape_string(embs.shape()));
  }
  const std::size_t n = x.dim(1);
  Tensor out = x;
  if (caches) caches->assign(n, {});
  for (std::size_t j = 0; j < n; ++j) {
    const Tensor seq = token_sequence(x, j) + embs;
    add_token_sequence(out, j, attention(seq, seq, seq, w, caches ? &(*caches)[j] : nullptr));
  }
  return out;
}

Tensor temporal_attention_backward(const std::vector<AttentionCache>& caches, const AttentionWeights& w,
                                   const Tensor& grad_out, AttentionWeights& grad_w, Tensor& grad_embs) {
  Tensor dx = grad_out;
  if (grad_embs.empty()) grad_embs = Tensor({grad_out.dim(0), grad_out.dim(2)});
  for (std::size_t j = 0; j < caches.size(); ++j) {
    const auto g = attention_backward(caches[j], w, token_sequence(grad_out, j), grad_w);
    const Tensor d_seq = g.dq + g.dk + g.dv;
    add_token_sequence(dx, j, d_seq);
    grad_embs += d_seq;
  }
  return dx;
}

Tensor env_cross_attention(const Tensor& x, const Tensor& env, const AttentionWeights& w,
                           std::vector<AttentionCache>* caches) {
  require_clip(x, "env_cross_attention");
  if (env.rank() != 2 || (env.dim(0) > 0 && env.dim(1) != w.wk.dim(0))) {
    fail(ErrorCode::ShapeMismatch, "environment tokens must be (n_e, c)");
  }
  Tensor out = x;
  if (caches) caches->clear();
  if (env.dim(0) == 0) return out;
  const std::size_t frames = x.dim(0);
  if (caches) caches->assign(frames, {});
  for (std::size_t f = 0; f < frames; ++f) {
    Tensor tokens = frame_of(x, f);
    const Tensor delta = attention(tokens, env, env, w, caches ? &(*caches)[f] : nullptr);
    set_frame(out, f, tokens + delta);
  }
  return out;
}

Tensor env_cross_attention_backward(const std::vector<AttentionCache>& caches, const AttentionWeights& w,
                                    const Tensor& grad_out, AttentionWeights& grad_w, Tensor& grad_env) {
  Tensor dx = grad_out;
  for (std::size_t f = 0; f < caches.size(); ++f) {
    const auto g = attention_backward(caches[f], w, frame_of(grad_out, f), grad_w);
    set_frame(dx, f, frame_of(grad_out, f) + g.dq);
    const Tensor d_env = g.dk + g.dv;
    if (grad_env.empty()) grad_env = Tensor(d_env.shape());
    grad_env += d_env;
  }
  return dx;
}

}  // namespace tunnel::nn

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "tunnel/embedding.hpp"
#include "tunnel/error.hpp"
#include "tunnel/nn.hpp"

using namespace tunnel;
using namespace tunnel::nn;
using testing::Matrix;

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(const Matrix& a, const Tensor& b) { return max_abs_diff(testing::from_matrix(a), b); }

// Self-attention oracle for one (n, c) frame with extra keys appended.
Matrix oracle_ref_frame(const Matrix& tokens, const Matrix& ref, const AttentionWeights& w) {
  Matrix joint = tokens;
  joint.insert(joint.end(), ref.begin(), ref.end());
  return testing::dense_attention(tokens, joint, joint, w);
}

AttentionWeights random_weights(std::size_t c, std::uint64_t seed, double sd = 0.5) {
  std::mt19937_64 rng(seed);
  return AttentionWeights::random(c, rng, sd);
}

}  // namespace

TEST_CASE("attention with one key returns the projected value") {
  const AttentionWeights w = AttentionWeights::identity(4);
  testing::Gen g(51);
  const Tensor q = g.tensor({3, 4}), v = g.tensor({1, 4}), k = g.tensor({1, 4});
  const Tensor out = attention(q, k, v, w);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.at(i, j) == doctest::Approx(v.at(0, j)).epsilon(1e-14));
  }
}

TEST_CASE("attention with identical keys averages the values") {
  const AttentionWeights w = AttentionWeights::identity(3);
  testing::Gen g(52);
  const Tensor q = g.tensor({2, 3}), v = g.tensor({5, 3});
  Tensor k({5, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) k.at(i, j) = 0.3 * j;
  }
  const Tensor out = attention(q, k, v, w);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 5; ++i) mean += v.at(i, j) / 5;
    CHECK(out.at(0, j) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("attention matches the dense oracle on a random 3x4 case") {
  testing::Gen g(53);
  const AttentionWeights w = random_weights(4, 54);
  const Tensor q = g.tensor({3, 4}), k = g.tensor({5, 4}), v = g.tensor({5, 4});
  AttentionCache cache;
  const Tensor out = attention(q, k, v, w, &cache);
  CHECK(max_abs(testing::dense_attention(testing::to_matrix(q), testing::to_matrix(k), testing::to_matrix(v), w),
                out) < 1e-9);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += cache.probs.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("attention shape errors") {
  const AttentionWeights w = AttentionWeights::identity(4);
  CHECK_THROWS_AS(attention(Tensor({2, 3}), Tensor({2, 4}), Tensor({2, 4}), w), Error);
  CHECK_THROWS_AS(attention(Tensor({2, 4}), Tensor({2, 4}), Tensor({3, 4}), w), Error);
}

TEST_CASE("ref attention with an empty reference is self-attention") {
  testing::Gen g(55);
  const AttentionWeights w = random_weights(4, 56);
  const Tensor x = g.tensor({3, 5, 4});
  const Tensor out = ref_attention(x, Tensor({0, 4}), w);
  CHECK(out.shape() == x.shape());
  for (std::size_t f = 0; f < 3; ++f) {
    const Matrix tokens = testing::to_matrix(frame_of(x, f));
    CHECK(max_abs(testing::dense_attention(tokens, tokens, tokens, w), frame_of(out, f)) < 1e-9);
  }
}

TEST_CASE("ref attention matches the oracle and ignores reference order") {
  testing::Gen g(57);
  const AttentionWeights w = random_weights(4, 58);
  const Tensor x = g.tensor({2, 6, 4});
  const Tensor ref = g.tensor({7, 4});
  const Tensor out = ref_attention(x, ref, w);
  CHECK(out.shape() == x.shape());
  for (std::size_t f = 0; f < 2; ++f) {
    CHECK(max_abs(oracle_ref_frame(testing::to_matrix(frame_of(x, f)), testing::to_matrix(ref), w), frame_of(out, f)) <
          1e-9);
  }
  std::vector<std::size_t> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), g.rng);
    Tensor shuffled({7, 4});
    for (std::size_t i = 0; i < 7; ++i) {
      for (std::size_t j = 0; j < 4; ++j) shuffled.at(i, j) = ref.at(perm[i], j);
    }
    CHECK(max_abs_diff(ref_attention(x, shuffled, w), out) < 1e-9);
  }
}

TEST_CASE("temporal attention with one frame adds the token to itself") {
  testing::Gen g(59);
  const Tensor x = g.tensor({1, 4, 3});
  const Tensor out = temporal_attention(x, Tensor({1, 3}), AttentionWeights::identity(3));
  CHECK(max_abs_diff(out - x, x) < 1e-14);
}

TEST_CASE("temporal attention matches the oracle") {
  testing::Gen g(60);
  const AttentionWeights w = random_weights(4, 61);
  const Tensor x = g.tensor({3, 2, 4}), embs = g.tensor({3, 4});
  const Tensor out = temporal_attention(x, embs, w);
  for (std::size_t j = 0; j < 2; ++j) {
    Matrix seq(3, std::vector<double>(4));
    for (std::size_t f = 0; f < 3; ++f) {
      for (std::size_t k = 0; k < 4; ++k) seq[f][k] = x[(f * 2 + j) * 4 + k] + embs.at(f, k);
    }
    const Matrix att = testing::dense_attention(seq, seq, seq, w);
    for (std::size_t f = 0; f < 3; ++f) {
      for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(out[(f * 2 + j) * 4 + k] - (x[(f * 2 + j) * 4 + k] + att[f][k])) < 1e-9);
    }
  }
}

TEST_CASE("temporal attention commutes with spatial permutations") {
  testing::Gen g(62);
  const AttentionWeights w = random_weights(5, 63);
  const std::size_t f = 4, n = 9, c = 5;
  const Tensor x = g.tensor({f, n, c}), embs = g.tensor({f, c});
  const Tensor out = temporal_attention(x, embs, w);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), g.rng);
    Tensor px({f, n, c});
    for (std::size_t i = 0; i < f; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < c; ++k) px[(i * n + j) * c + k] = x[(i * n + perm[j]) * c + k];
      }
    }
    const Tensor pout = temporal_attention(px, embs, w);
    bool exact = true;
    for (std::size_t i = 0; i < f; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < c; ++k) exact = exact && pout[(i * n + j) * c + k] == out[(i * n + perm[j]) * c + k];
      }
    }
    CHECK(exact);
  }
}

TEST_CASE("temporal attention rejects mismatched embeddings") {
  CHECK_THROWS_AS(temporal_attention(Tensor({3, 2, 4}), Tensor({2, 4}), AttentionWeights::identity(4)), Error);
}

TEST_CASE("env cross attention") {
  testing::Gen g(64);
  AttentionWeights w = random_weights(4, 65);
  const Tensor x = g.tensor({2, 5, 4});
  SUBCASE("zero tokens with zero value bias leave x unchanged") {
    w.bv = Tensor({4});
    w.bo = Tensor({4});
    CHECK(max_abs_diff(env_cross_attention(x, Tensor({3, 4}), w), x) == 0.0);
  }
  SUBCASE("empty environment is the identity") { CHECK(env_cross_attention(x, Tensor({0, 4}), w) == x); }
  SUBCASE("a single env token gives every token the same contribution") {
    const Tensor out = env_cross_attention(x, g.tensor({1, 4}), w);
    const Tensor delta = out - x;
    for (std::size_t r = 1; r < 10; ++r) {
      for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(delta[r * 4 + k] - delta[k]) < 1e-12);
    }
  }
  SUBCASE("random case matches the oracle") {
    const Tensor env = g.tensor({6, 4});
    const Tensor out = env_cross_attention(x, env, w);
    for (std::size_t f = 0; f < 2; ++f) {
      const Matrix att = testing::dense_attention(testing::to_matrix(frame_of(x, f)), testing::to_matrix(env),
                                                  testing::to_matrix(env), w);
      CHECK(max_abs(att, frame_of(out, f) - frame_of(x, f)) < 1e-9);
    }
  }
}

TEST_CASE("grad check on a quadratic") {
  std::vector<double> p{0.3, -1.2, 2.5, 4.0};
  const double err = grad_check(
      [](std::span<const double> q) {
        double s = 0.0;
        for (double v : q) s += 0.5 * v * v;
        return s;
      },
      p, p);
  CHECK(err < 1e-8);
}

TEST_CASE("attention gradients match finite differences") {
  testing::Gen g(66);
  AttentionWeights w = random_weights(4, 67);
  const Tensor q = g.tensor({3, 4}), k = g.tensor({5, 4}), v = g.tensor({5, 4}), probe = g.tensor({3, 4});
  AttentionCache cache;
  attention(q, k, v, w, &cache);
  AttentionWeights gw = w.zeros_like();
  const auto gi = attention_backward(cache, w, probe, gw);

  auto params = w.params();
  std::vector<const Tensor*> cparams(params.begin(), params.end());
  cparams.insert(cparams.end(), {&q, &k, &v});
  auto grads = gw.params();
  std::vector<const Tensor*> cgrads(grads.begin(), grads.end());
  cgrads.insert(cgrads.end(), {&gi.dq, &gi.dk, &gi.dv});
  const auto flat = flatten(cparams);
  const auto analytic = flatten(cgrads);
  const double err = grad_check(
      [&](std::span<const double> p) {
        AttentionWeights w2 = w;
        Tensor q2 = q, k2 = k, v2 = v;
        auto ps = w2.params();
        ps.insert(ps.end(), {&q2, &k2, &v2});
        unflatten(p, ps);
        return dot(attention(q2, k2, v2, w2), probe);
      },
      flat, analytic);
  CHECK(err < 1e-4);
}

TEST_CASE("wiring gradients match finite differences") {
  testing::Gen g(68);
  const AttentionWeights w = random_weights(3, 69);
  const Tensor x = g.tensor({3, 4, 3}), probe = g.tensor({3, 4, 3});

  SUBCASE("ref attention") {
    const Tensor ref = g.tensor({2, 3});
    std::vector<AttentionCache> caches;
    ref_attention(x, ref, w, &caches);
    AttentionWeights gw = w.zeros_like();
    Tensor gref;
    const Tensor dx = ref_attention_backward(caches, w, probe, gw, gref);
    const auto flat = flatten({&x, &ref});
    const auto analytic = flatten({&dx, &gref});
    const double err = grad_check(
        [&](std::span<const double> p) {
          Tensor x2 = x, r2 = ref;
          unflatten(p, {&x2, &r2});
          return dot(ref_attention(x2, r2, w), probe);
        },
        flat, analytic);
    CHECK(err < 1e-4);
  }
  SUBCASE("temporal attention") {
    const Tensor embs = g.tensor({3, 3});
    std::vector<AttentionCache> caches;
    temporal_attention(x, embs, w, &caches);
    AttentionWeights gw = w.zeros_like();
    Tensor gemb;
    const Tensor dx = temporal_attention_backward(caches, w, probe, gw, gemb);
    const auto flat = flatten({&x, &embs, &w.wq, &w.bo});
    const auto analytic = flatten({&dx, &gemb, &gw.wq, &gw.bo});
    const double err = grad_check(
        [&](std::span<const double> p) {
          Tensor x2 = x, e2 = embs;
          AttentionWeights w2 = w;
          unflatten(p, {&x2, &e2, &w2.wq, &w2.bo});
          return dot(temporal_attention(x2, e2, w2), probe);
        },
        flat, analytic);
    CHECK(err < 1e-4);
  }
  SUBCASE("env cross attention") {
    const Tensor env = g.tensor({5, 3});
    std::vector<AttentionCache> caches;
    env_cross_attention(x, env, w, &caches);
    AttentionWeights gw = w.zeros_like();
    Tensor genv;
    const Tensor dx = env_cross_attention_backward(caches, w, probe, gw, genv);
    const auto flat = flatten({&x, &env});
    const auto analytic = flatten({&dx, &genv});
    const double err = grad_check(
        [&](std::span<const double> p) {
          Tensor x2 = x, e2 = env;
          unflatten(p, {&x2, &e2});
          return dot(env_cross_attention(x2, e2, w), probe);
        },
        flat, analytic);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("env encoder") {
  const EnvEncoder enc = EnvEncoder::make(3, 12, 5, 70);
  SUBCASE("zero frame gives zero tokens") {
    const Tensor t = env_encode(Image(32, 24, 3), enc);
    CHECK(t.shape() == Shape{16, 5});
    for (double v : t.values()) CHECK(v == 0.0);
  }
  SUBCASE("identical frames give identical tokens") {
    const Image img = testing::Gen(71).image(40, 30, 3);
    CHECK(env_encode(img, enc) == env_encode(img, enc));
  }
  SUBCASE("the frozen extractor depends only on the seed") {
    CHECK(EnvEncoder::make(3, 12, 5, 70).extractor == enc.extractor);
    CHECK(!(EnvEncoder::make(3, 12, 5, 72).extractor == enc.extractor));
  }
  SUBCASE("projection gradient matches finite differences") {
    testing::Gen g(73);
    const Image img = g.image(20, 20, 3);
    const Tensor feats = env_features(img, enc);
    const Tensor probe = g.tensor({16, 5});
    EnvEncoder grad = enc;
    grad.proj_w = Tensor{};
    grad.proj_b = Tensor{};
    env_encode_backward(feats, probe, grad);
    const double err = grad_check(
        [&](std::span<const double> p) {
          EnvEncoder e2 = enc;
          unflatten(p, e2.params());
          return dot(env_encode(img, e2), probe);
        },
        flatten({&enc.proj_w, &enc.proj_b}), flatten({&grad.proj_w, &grad.proj_b}));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("pose encoder") {
  std::mt19937_64 rng(74);
  PoseEncoder enc = PoseEncoder::make(3, 6, 5, rng);
  SUBCASE("output is a quarter of the input resolution") {
    CHECK(pose_encode(Image(64, 64, 3), enc).shape() == Shape{256, 5});
  }
  SUBCASE("zero pose with zero biases gives zero features") {
    const Tensor out = pose_encode(Image(16, 16, 3), enc);
    for (double v : out.values()) CHECK(v == 0.0);
  }
  SUBCASE("convolution matches a sliding-window oracle") {
    testing::Gen g(75);
    const Tensor in = g.tensor({3, 6, 6});
    const Tensor out = conv2d(in, enc.conv1_w, g.tensor({6}), 1, 0);
    CHECK(out.shape() == Shape{6, 4, 4});
    const Tensor bias = g.tensor({6});
    const Tensor out2 = conv2d(in, enc.conv1_w, bias, 1, 0);
    double worst = 0.0;
    for (std::size_t co = 0; co < 6; ++co) {
      for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < 3; ++ci) {
            for (std::size_t ky = 0; ky < 3; ++ky) {
              for (std::size_t kx = 0; kx < 3; ++kx) {
                acc += in[(ci * 6 + y + ky) * 6 + x + kx] * enc.conv1_w[((co * 3 + ci) * 3 + ky) * 3 + kx];
              }
            }
          }
          worst = std::max(worst, std::abs(acc - out2[(co * 4 + y) * 4 + x]));
        }
      }
    }
    CHECK(worst < 1e-9);
  }
  SUBCASE("gradients match finite differences") {
    testing::Gen g(76);
    for (Tensor* t : enc.params()) {
      for (double& v : t->data()) v += g.normal(0.1);
    }
    const Tensor pose = g.tensor({3, 8, 8});
    PoseCache cache;
    const Tensor out = pose_encode(pose, enc, &cache);
    const Tensor probe = g.tensor(out.shape());
    PoseEncoder grad;
    pose_encode_backward(cache, enc, probe, grad);
    std::vector<const Tensor*> ps, gs;
    for (Tensor* t : enc.params()) ps.push_back(t);
    for (Tensor* t : grad.params()) gs.push_back(t);
    const double err = grad_check(
        [&](std::span<const double> p) {
          PoseEncoder e2 = enc;
          unflatten(p, e2.params());
          return dot(pose_encode(pose, e2), probe);
        },
        flatten(ps), flatten(gs));
    CHECK(err < 1e-4);
  }
  SUBCASE("channel mismatch") { CHECK_THROWS_AS(pose_encode(Image(8, 8, 1), enc), Error); }
}

TEST_CASE("sinusoidal encode") {
  const auto zero = sinusoidal_encode(0.0, 8, 1e4);
  for (std::size_t i = 0; i < 8; ++i) CHECK(zero[i] == (i % 2 ? 1.0 : 0.0));
  const auto one = sinusoidal_encode(1.3, 2, 1e4);
  CHECK(one[0] == doctest::Approx(std::sin(1.3)));
  CHECK(one[1] == doctest::Approx(std::cos(1.3)));
  const auto seven = sinusoidal_encode(7.0, 4, 1e4);
  const double w1 = 1.0 / 100.0;
  CHECK(std::abs(seven[0] - std::sin(7.0)) < 1e-12);
  CHECK(std::abs(seven[1] - std::cos(7.0)) < 1e-12);
  CHECK(std::abs(seven[2] - std::sin(7.0 * w1)) < 1e-12);
  CHECK(std::abs(seven[3] - std::cos(7.0 * w1)) < 1e-12);
  CHECK_THROWS_AS(sinusoidal_encode(1.0, 3, 1e4), Error);
}

namespace {

// Straight-line evaluation of the tunnel embedding.
std::vector<double> embedding_oracle(const TunnelTriplet& t, const EmbeddingParams& p) {
  const double vals[6] = {t.orig_w, t.orig_h, t.center_x, t.center_y, t.tunnel_w, t.tunnel_h};
  const std::size_t d = p.freq_dim, out = p.weight.dim(1);
  std::vector<double> result(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = p.bias[o];
    for (int s = 0; s < 6; ++s) {
      for (std::size_t k = 0; k < d / 2; ++k) {
        const double w = std::exp(-std::log(p.base) * 2.0 * k / d);
        acc += std::sin(vals[s] * w) * p.weight.at(s * d + 2 * k, o);
        acc += std::cos(vals[s] * w) * p.weight.at(s * d + 2 * k + 1, o);
      }
    }
    result[o] = acc / (1.0 + std::exp(-acc));
  }
  return result;
}

}  // namespace

TEST_CASE("tunnel embedding") {
  std::mt19937_64 rng(77);
  const TunnelTriplet t{640, 480, 300.5, 210.25, 180, 180};
  SUBCASE("zero parameters give zero") {
    EmbeddingParams p = EmbeddingParams::random(8, rng);
    p.weight = zeros_like(p.weight);
    for (double v : tunnel_embedding(t, p)) CHECK(v == 0.0);
  }
  SUBCASE("a selector weight picks one sinusoid channel") {
    EmbeddingParams p = EmbeddingParams::random(1, rng, 4);
    p.weight = zeros_like(p.weight);
    p.weight.at(2 * 4 + 1, 0) = 1.0;  // cos of center_x at the lowest index
    const double want = std::cos(300.5);
    CHECK(tunnel_embedding(t, p)[0] == doctest::Approx(silu(want)).epsilon(1e-12));
  }
  SUBCASE("random parameters match the straight-line oracle") {
    const EmbeddingParams p = EmbeddingParams::random(16, rng);
    const auto got = tunnel_embedding(t, p);
    const auto want = embedding_oracle(t, p);
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-9);
  }
  SUBCASE("equal triplets give equal embeddings") {
    const EmbeddingParams p = EmbeddingParams::random(16, rng);
    const Tensor e = tunnel_embeddings({t, t}, p);
    for (std::size_t k = 0; k < 16; ++k) CHECK(e.at(0, k) == e.at(1, k));
  }
  SUBCASE("lipschitz bound in the center coordinate") {
    const EmbeddingParams p = EmbeddingParams::random(16, rng);
    double wnorm = 0.0;
    for (double v : p.weight.values()) wnorm += v * v;
    wnorm = std::sqrt(wnorm);
    testing::Gen g(78);
    for (int trial = 0; trial < 50; ++trial) {
      TunnelTriplet a{640, 480, g.uniform(0, 640), g.uniform(0, 480), 100, 100};
      TunnelTriplet b = a;
      const double delta = g.uniform(-2, 2);
      b.center_x += delta;
      const Tensor pa = tunnel_embedding_preactivation(a, p), pb = tunnel_embedding_preactivation(b, p);
      double diff = 0.0;
      for (std::size_t i = 0; i < pa.size(); ++i) diff += (pa[i] - pb[i]) * (pa[i] - pb[i]);
      CHECK(std::sqrt(diff) <= wnorm * std::sqrt(64.0) * std::abs(delta) * 1.0 + 1e-12);
    }
  }
  SUBCASE("linear-layer gradients match finite differences") {
    EmbeddingParams p = EmbeddingParams::random(6, rng, 8);
    p.bias = testing::Gen(79).tensor({6}, 0.3);
    const std::vector<TunnelTriplet> frames{{64, 48, 1.3, 0.7, 0.9, 1.1}, {64, 48, 0.2, -0.4, 1.5, 0.8}};
    const Tensor probe = testing::Gen(80).tensor({2, 6});
    Tensor gw, gb;
    tunnel_embeddings_backward(frames, p, probe, gw, gb);
    const double err = grad_check(
        [&](std::span<const double> v) {
          EmbeddingParams q = p;
          unflatten(v, {&q.weight, &q.bias});
          return dot(tunnel_embeddings(frames, q), probe);
        },
        flatten({&p.weight, &p.bias}), flatten({&gw, &gb}));
    CHECK(err < 1e-4);
  }
  SUBCASE("dimension mismatch") {
    EmbeddingParams p = EmbeddingParams::random(4, rng, 8);
    p.freq_dim = 16;
    CHECK_THROWS_AS(tunnel_embedding(t, p), Error);
  }
}

TEST_CASE("flatten and unflatten round trip") {
  testing::Gen g(81);
  Tensor a = g.tensor({2, 3}), b = g.tensor({4});
  const auto flat = flatten({&a, &b});
  Tensor a2({2, 3}), b2({4});
  unflatten(flat, {&a2, &b2});
  CHECK(a2 == a);
  CHECK(b2 == b);
  CHECK_THROWS_AS(unflatten(std::span<const double>(flat).first(5), {&a2, &b2}), Error);
}

#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tunnel/denoiser.hpp"
#include "tunnel/diffusion.hpp"
#include "tunnel/error.hpp"

using namespace tunnel;
using namespace tunnel::diffusion;

TEST_CASE("schedule") {
  CHECK(make_schedule(1, 0.0, 0.0).alpha_bar(1) == 1.0);
  const auto two = NoiseSchedule::from_betas({0.1, 0.2});
  CHECK(two.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(two.alpha_bar(0) == 1.0);
  const auto big = make_schedule(1000, 1e-4, 0.02);
  double direct = 1.0;
  for (int t = 0; t < 1000; ++t) direct *= 1.0 - (1e-4 + (0.02 - 1e-4) * t / 999.0);
  CHECK(big.alpha_bar(1000) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(std::abs(big.alpha_bar(1000) / 4.0e-5 - 1.0) < 0.1);
  for (int t = 1; t < 1000; ++t) CHECK(big.alpha_bar(t + 1) < big.alpha_bar(t));
  CHECK(big.beta(1) == doctest::Approx(1e-4));
  CHECK(big.beta(1000) == doctest::Approx(0.02));
  CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), Error);
}

TEST_CASE("add noise endpoints and interpolation") {
  testing::Gen g(91);
  const Tensor z0 = g.tensor({2, 4, 3, 3}), eps = g.tensor({2, 4, 3, 3});
  CHECK(add_noise(z0, eps, 1.0) == z0);
  CHECK(add_noise(z0, eps, 0.0) == eps);
  const auto s = make_schedule(10, 0.1, 0.3);
  const Tensor zt = add_noise(z0, eps, 4, s);
  for (std::size_t i = 0; i < zt.size(); ++i) {
    CHECK(zt[i] == doctest::Approx(std::sqrt(s.alpha_bar(4)) * z0[i] + std::sqrt(1 - s.alpha_bar(4)) * eps[i]));
  }
  CHECK_THROWS_AS(add_noise(z0, g.tensor({3}), 0.5), Error);
  CHECK_THROWS_AS(add_noise(z0, eps, 0, s), Error);
  CHECK_THROWS_AS(add_noise(z0, eps, 11, s), Error);
}

TEST_CASE("add noise preserves unit variance") {
  std::mt19937_64 rng(92);
  const auto s = make_schedule(50, 0.01, 0.2);
  for (int t : {1, 10, 25, 50}) {
    const Tensor z0 = gaussian_like({100000}, rng), eps = gaussian_like({100000}, rng);
    const Tensor zt = add_noise(z0, eps, t, s);
    double mean = 0.0, sq = 0.0;
    for (double v : zt.values()) mean += v;
    mean /= zt.size();
    for (double v : zt.values()) sq += (v - mean) * (v - mean);
    CHECK(std::abs(sq / zt.size() - 1.0) < 0.05);
  }
}

TEST_CASE("ldm loss") {
  testing::Gen g(93);
  const Tensor eps = g.tensor({3, 4, 2, 2});
  CHECK(ldm_loss(eps, eps) == 0.0);
  Tensor shifted = eps;
  for (double& v : shifted.data()) v += 1.0;
  CHECK(ldm_loss(shifted, eps) == doctest::Approx(1.0).epsilon(1e-14));
  const Tensor other = g.tensor({3, 4, 2, 2});
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) acc += (other[i] - eps[i]) * (other[i] - eps[i]);
  CHECK(std::abs(ldm_loss(other, eps) - acc / eps.size()) < 1e-12);
  CHECK_THROWS_AS(ldm_loss(eps, Tensor({2})), Error);
}

TEST_CASE("toy codec") {
  testing::Gen g(94);
  const Image img = g.image(8, 6, 3);
  const Tensor z = toy_encode(img);
  CHECK(z.shape() == Shape{12, 3, 4});
  const Image back = toy_decode(z, 3);
  double worst = 0.0, n_img = 0.0, n_lat = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    worst = std::max(worst, std::abs(back.data[i] - img.data[i]));
    n_img += img.data[i] * img.data[i];
  }
  for (double v : z.values()) n_lat += v * v;
  CHECK(worst < 1e-12);
  CHECK(std::abs(std::sqrt(n_img) - std::sqrt(n_lat)) < 1e-12);
  CHECK_THROWS_AS(toy_encode(Image(5, 4, 1)), Error);
  CHECK_THROWS_AS(toy_decode(z, 2), Error);
}

TEST_CASE("toy codec on a 4x4 image matches the hand projection") {
  testing::Gen g(95);
  const Image img = g.image(4, 4, 1);
  const Tensor z = toy_encode(img);
  for (int py = 0; py < 2; ++py) {
    for (int px = 0; px < 2; ++px) {
      const double a = img.at(2 * px, 2 * py), b = img.at(2 * px + 1, 2 * py);
      const double c = img.at(2 * px, 2 * py + 1), d = img.at(2 * px + 1, 2 * py + 1);
      const double want[4] = {(a + b + c + d) / 2, (a - b + c - d) / 2, (a + b - c - d) / 2, (a - b - c + d) / 2};
      for (int k = 0; k < 4; ++k) CHECK(std::abs(z[(k * 2 + py) * 2 + px] - want[k]) < 1e-15);
    }
  }
}

TEST_CASE("assemble and split inputs") {
  testing::Gen g(96);
  const Tensor a = g.tensor({4, 3, 5}), b = g.tensor({4, 3, 5}), m = g.tensor({1, 3, 5});
  const Tensor x = assemble_inputs(a, b, m);
  CHECK(x.shape() == Shape{9, 3, 5});
  const auto parts = split_inputs(x);
  CHECK(parts.masked_latent == a);
  CHECK(parts.noise_latent == b);
  CHECK(parts.mask == m);
  CHECK_THROWS_AS(assemble_inputs(a, b, Tensor({1, 3, 4})), Error);
}

TEST_CASE("temporal aggregation") {
  testing::Gen g(97);
  const Tensor a = g.tensor({6, 2, 2});
  CHECK(max_abs_diff(temporal_aggregate({{0, a}}, AggregateWeights::Triangular), a) < 1e-15);
  const Tensor both = temporal_aggregate({{0, a}, {0, a}}, AggregateWeights::Triangular);
  CHECK(max_abs_diff(both, a) < 1e-15);

  const Tensor zeros({8, 3}), ones({8, 3}, 1.0);
  const Tensor mix = temporal_aggregate({{0, zeros}, {4, ones}}, AggregateWeights::Uniform);
  CHECK(mix.dim(0) == 12);
  for (std::size_t f = 0; f < 12; ++f) {
    const double want = f < 4 ? 0.0 : (f < 8 ? 0.5 : 1.0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(mix[f * 3 + k] == want);
  }
  CHECK_THROWS_AS(temporal_aggregate({{0, zeros}, {10, ones}}, AggregateWeights::Uniform), Error);
  CHECK_THROWS_AS(temporal_aggregate({}, AggregateWeights::Uniform), Error);
}

TEST_CASE("aggregation weights are normalized per frame") {
  for (auto mode : {AggregateWeights::Uniform, AggregateWeights::Triangular}) {
    // Aggregating constant-one clips reproduces the normalized weight sum.
    std::vector<PlacedClip> clips;
    for (std::size_t s : clip_starts(23, 8, 4)) clips.push_back({s, Tensor({8, 1}, 1.0)});
    const Tensor out = temporal_aggregate(clips, mode);
    CHECK(out.dim(0) == 23);
    for (double v : out.values()) CHECK(std::abs(v - 1.0) < 1e-12);
  }
  CHECK(aggregate_weight(0, 8, AggregateWeights::Triangular) == 1.0);
  CHECK(aggregate_weight(3, 8, AggregateWeights::Triangular) == 4.0);
  CHECK(aggregate_weight(7, 8, AggregateWeights::Triangular) == 1.0);
}

TEST_CASE("clip starts cover the sequence") {
  CHECK(clip_starts(5, 8, 4) == std::vector<std::size_t>{0});
  CHECK(clip_starts(16, 8, 4) == std::vector<std::size_t>{0, 4, 8});
  CHECK(clip_starts(17, 8, 4) == std::vector<std::size_t>{0, 4, 8, 9});
}

TEST_CASE("ddpm step") {
  const auto s = make_schedule(20, 0.01, 0.2);
  testing::Gen g(98);
  const Tensor z0 = g.tensor({2, 4, 2, 2}), eps = g.tensor({2, 4, 2, 2});
  SUBCASE("teacher-forced step matches the forward posterior mean") {
    for (int t : {2, 7, 20}) {
      const Tensor zt = add_noise(z0, eps, t, s);
      const Tensor prev = ddpm_step(zt, eps, t, s, nullptr);
      const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1), beta = s.beta(t), alpha = s.alpha(t);
      for (std::size_t i = 0; i < z0.size(); ++i) {
        const double mean =
            std::sqrt(ab_prev) * beta / (1 - ab) * z0[i] + std::sqrt(alpha) * (1 - ab_prev) / (1 - ab) * zt[i];
        CHECK(std::abs(prev[i] - mean) < 1e-6);
      }
    }
  }
  SUBCASE("final step recovers z0 exactly") {
    const Tensor z1 = add_noise(z0, eps, 1, s);
    CHECK(max_abs_diff(ddpm_step(z1, eps, 1, s, nullptr), z0) < 1e-12);
  }
}

TEST_CASE("denoise loop") {
  const auto s = make_schedule(10, 0.01, 0.2);
  testing::Gen g(99);
  const Tensor zT = g.tensor({2, 4, 2, 2});
  const NoisePredictor zero = [](const Tensor& z, int) { return zeros_like(z); };
  CHECK(denoise_loop(zero, zT, s, 0) == zT);
  SamplerOptions det;
  det.deterministic = true;
  const Tensor out = denoise_loop(zero, zT, s, 10, det);
  Tensor want = zT;
  for (int t = 10; t >= 1; --t) want *= 1.0 / std::sqrt(s.alpha(t));
  CHECK(max_abs_diff(out, want) < 1e-12);
  CHECK_THROWS_AS(denoise_loop(zero, zT, s, 11), Error);
  SamplerOptions seeded;
  seeded.seed = 5;
  CHECK(denoise_loop(zero, zT, s, 10, seeded) == denoise_loop(zero, zT, s, 10, seeded));
}

TEST_CASE("zero-weight denoiser follows the closed-form trajectory") {
  DenoiserConfig cfg;
  cfg.channels = 8;
  const ToyDenoiser model = ToyDenoiser::make(cfg).zeros_like();
  auto clip = synthetic_clip(model, 3, 4, 3);
  testing::Gen g(100);
  clip.conditions.noise_latent = g.tensor(clip.z0.shape());
  const auto s = make_schedule(8, 0.01, 0.2);
  SamplerOptions det;
  det.deterministic = true;
  const Tensor out = denoise_clip(model, clip.conditions, s, 8, det);
  Tensor want = clip.conditions.noise_latent;
  for (int t = 8; t >= 1; --t) want *= 1.0 / std::sqrt(s.alpha(t));
  CHECK(max_abs_diff(out, want) < 1e-12);
  CHECK(denoise_clip(model, clip.conditions, s, 0, det) == clip.conditions.noise_latent);
}

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "tunnel/kernels.hpp"
#include "tunnel/metrics.hpp"
#include "tunnel/zoom.hpp"

using namespace tunnel;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

Image random_image(int w, int h, int c, std::uint64_t seed) {
  Image img(w, h, c);
  img.data = random_values(img.data.size(), seed);
  for (double& x : img.data) x = 0.5 + 0.5 * x;
  return img;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2), bias = random_values(n, 3);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::matmul(a, b, bias, c, n, n, n);
    } else {
      kernels::serial::matmul(a, b, bias, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 32;
  const auto q = random_values(n * d, 4), k = random_values(n * d, 5), v = random_values(n * d, 6);
  std::vector<double> probs(n * n), out(n * d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::attention(q, k, v, probs, out, n, n, d, d, scale);
    } else {
      kernels::serial::attention(q, k, v, probs, out, n, n, d, d, scale);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Conv2d(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  kernels::ConvShape s{8, 16, side, side, 3, 2, 1};
  const auto in = random_values(8 * side * side, 7), w = random_values(16 * 8 * 9, 8), b = random_values(16, 9);
  std::vector<double> out(16 * s.out_height() * s.out_width());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::conv2d(in, w, b, out, s);
    } else {
      kernels::serial::conv2d(in, w, b, out, s);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Resample(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Image src = random_image(640, 480, 3, 10);
  kernels::ResampleSpec spec;
  spec.out_width = side;
  spec.out_height = side;
  spec.x = {100.3, 300.0 / side};
  spec.y = {80.7, 300.0 / side};
  spec.clamp_x = {100.0, 400.0};
  spec.clamp_y = {80.0, 380.0};
  for (auto _ : state) {
    Image out = Parallel ? kernels::omp::resample(src, spec) : kernels::serial::resample(src, spec);
    benchmark::DoNotOptimize(out.data.data());
  }
}

template <bool Parallel>
void BM_Blur(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto plane = random_values(static_cast<std::size_t>(side) * side, 11);
  const auto taps = gaussian_taps(3.0);
  std::vector<double> out(plane.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::blur_separable(plane, out, side, side, taps);
    } else {
      kernels::serial::blur_separable(plane, out, side, side, taps);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Ssim(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Image a = random_image(side, side, 3, 12), b = random_image(side, side, 3, 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? metrics::ssim(a, b) : metrics::ssim_serial(a, b));
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/omp")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_Attention<false>)->Name("attention/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_Attention<true>)->Name("attention/omp")->Arg(64)->Arg(512)->UseRealTime();
BENCHMARK(BM_Conv2d<false>)->Name("conv2d/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv2d<true>)->Name("conv2d/omp")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_Resample<false>)->Name("resample/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_Resample<true>)->Name("resample/omp")->Arg(128)->Arg(512)->UseRealTime();
BENCHMARK(BM_Blur<false>)->Name("blur/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_Blur<true>)->Name("blur/omp")->Arg(256)->Arg(1024)->UseRealTime();
BENCHMARK(BM_Ssim<false>)->Name("ssim/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_Ssim<true>)->Name("ssim/omp")->Arg(128)->Arg(512)->UseRealTime();

BENCHMARK_MAIN();

#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "tunnel/geometry.hpp"
#include "tunnel/image.hpp"
#include "tunnel/nn.hpp"
#include "tunnel/tensor.hpp"
#include "tunnel/tunnel_extract.hpp"

namespace testing {

using Matrix = std::vector<std::vector<double>>;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  tunnel::Tensor tensor(tunnel::Shape shape, double sd = 1.0);
  tunnel::Image image(int w, int h, int c);
};

Matrix to_matrix(const tunnel::Tensor& t);
tunnel::Tensor from_matrix(const Matrix& m);

// Straight-line evaluation of single-head attention with explicit loops.
Matrix dense_attention(const Matrix& q, const Matrix& k, const Matrix& v, const tunnel::nn::AttentionWeights& w);

// Bilinear sample at index coordinates (pixel i centered at i), clamped to the image.
double bilinear(const tunnel::Image& img, double x, double y, int c);

// Smooth test image built from a few low-frequency cosines.
tunnel::Image smooth_image(int w, int h, int channels, std::uint64_t seed);

// Upper-body COCO keypoints of a figure centered at (cx, cy) with torso half-width hw.
std::vector<tunnel::Keypoint> figure(double cx, double cy, double hw, double conf = 0.9);

// Tunnel of identical boxes with independent N(0, sigma) center noise per frame.
tunnel::Tunnel noisy_tunnel(std::size_t frames, double sigma, std::uint64_t seed);

double mean_abs_diff(const tunnel::Image& a, const tunnel::Image& b);

struct WalkingFixture {
  std::filesystem::path frames_dir;
  std::filesystem::path poses;
  int frames = 16;
  tunnel::FrameSize size{96, 80};
};

// Writes frame_%06d.png files and a pose JSON for a figure walking left to right
// with a little keypoint jitter.
WalkingFixture write_walking_fixture(const std::filesystem::path& root, int frames = 16, std::uint64_t seed = 7);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace testing

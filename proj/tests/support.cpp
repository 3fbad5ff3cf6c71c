#include "support.hpp"

#include <cmath>

#include "tunnel/io.hpp"

namespace testing {

using namespace tunnel;

Tensor Gen::tensor(Shape shape, double sd) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(sd);
  return t;
}

Image Gen::image(int w, int h, int c) {
  Image img(w, h, c);
  for (double& v : img.data) v = uniform(0.0, 1.0);
  return img;
}

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  }
  return m;
}

Tensor from_matrix(const Matrix& m) {
  Tensor t({m.size(), m.empty() ? 0 : m[0].size()});
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) t.at(i, j) = m[i][j];
  }
  return t;
}

namespace {

Matrix project(const Matrix& x, const Tensor& w, const Tensor& b) {
  Matrix out(x.size(), std::vector<double>(w.dim(1), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < w.dim(1); ++j) {
      double s = b.empty() ? 0.0 : b[j];
      for (std::size_t k = 0; k < x[i].size(); ++k) s += x[i][k] * w.at(k, j);
      out[i][j] = s;
    }
  }
  return out;
}

}  // namespace

Matrix dense_attention(const Matrix& q, const Matrix& k, const Matrix& v, const nn::AttentionWeights& w) {
  const Matrix qp = project(q, w.wq, w.bq);
  const Matrix kp = project(k, w.wk, w.bk);
  const Matrix vp = project(v, w.wv, w.bv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.wq.dim(1)));
  Matrix mixed(q.size(), std::vector<double>(w.wv.dim(1), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> logits(k.size());
    double top = -1e300;
    for (std::size_t j = 0; j < k.size(); ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < qp[i].size(); ++d) s += qp[i][d] * kp[j][d];
      logits[j] = s * scale;
      top = std::max(top, logits[j]);
    }
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - top));
    for (std::size_t j = 0; j < k.size(); ++j) {
      for (std::size_t d = 0; d < vp[j].size(); ++d) mixed[i][d] += logits[j] / z * vp[j][d];
    }
  }
  return project(mixed, w.wo, w.bo);
}

double bilinear(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, img.width - 1.0);
  y = std::clamp(y, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c)) +
         fy * ((1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c));
}

Image smooth_image(int w, int h, int channels, std::uint64_t seed) {
  Gen g(seed);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<std::vector<Wave>> waves(channels);
  for (auto& ws : waves) {
    for (int i = 0; i < 3; ++i) ws.push_back({g.uniform(0.0, 0.08), g.uniform(0.0, 0.08), g.uniform(0, 6.3), 0.12});
  }
  Image img(w, h, channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        double v = 0.5;
        for (const auto& wv : waves[c]) v += wv.amp * std::cos(wv.fx * x + wv.fy * y + wv.phase);
        img.at(x, y, c) = v;
      }
    }
  }
  return img;
}

std::vector<Keypoint> figure(double cx, double cy, double hw, double conf) {
  return {
      {"nose", cx, cy - 2.2 * hw, conf},
      {"left_shoulder", cx - hw, cy - 1.5 * hw, conf},
      {"right_shoulder", cx + hw, cy - 1.5 * hw, conf},
      {"left_elbow", cx - 1.3 * hw, cy - 0.5 * hw, conf},
      {"right_elbow", cx + 1.3 * hw, cy - 0.5 * hw, conf},
      {"left_wrist", cx - 1.2 * hw, cy + 0.4 * hw, conf},
      {"right_wrist", cx + 1.2 * hw, cy + 0.4 * hw, conf},
      {"left_hip", cx - 0.7 * hw, cy + 0.6 * hw, conf},
      {"right_hip", cx + 0.7 * hw, cy + 0.6 * hw, conf},
      {"left_knee", cx - 0.7 * hw, cy + 1.6 * hw, conf},
      {"right_knee", cx + 0.7 * hw, cy + 1.6 * hw, conf},
  };
}

Tunnel noisy_tunnel(std::size_t frames, double sigma, std::uint64_t seed) {
  Gen g(seed);
  Tunnel t{{640, 480}, {}};
  for (std::size_t i = 0; i < frames; ++i) {
    t.boxes.push_back(BBox::from_center(320 + g.normal(sigma), 240 + g.normal(sigma), 160, 160));
  }
  return t;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

WalkingFixture write_walking_fixture(const std::filesystem::path& root, int frames, std::uint64_t seed) {
  WalkingFixture fx;
  fx.frames = frames;
  fx.frames_dir = root / "frames";
  fx.poses = root / "poses.json";
  std::filesystem::create_directories(fx.frames_dir);
  Gen g(seed);
  const Image background = smooth_image(fx.size.width, fx.size.height, 3, seed);
  std::vector<PoseFrame> poses;
  for (int i = 0; i < frames; ++i) {
    const double cx = 30.0 + 2.0 * i, cy = 44.0, hw = 9.0;
    Image img = background;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const double dx = (x + 0.5 - cx) / hw, dy = (y + 0.5 - cy) / (1.6 * hw);
        if (dx * dx + dy * dy <= 1.0) {
          img.at(x, y, 0) = 0.85;
          img.at(x, y, 1) = 0.2;
          img.at(x, y, 2) = 0.25;
        }
      }
    }
    io::write_png(fx.frames_dir / io::frame_name(i), img);
    PoseFrame p{i, fx.size, figure(cx, cy, hw)};
    for (auto& k : p.keypoints) {
      k.x += g.normal(1.5);
      k.y += g.normal(1.5);
    }
    poses.push_back(std::move(p));
  }
  io::write_file_atomic(fx.poses, io::poses_json(poses));
  return fx;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tunnel_tests_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing

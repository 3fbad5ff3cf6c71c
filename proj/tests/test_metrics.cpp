#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "support.hpp"
#include "tunnel/error.hpp"
#include "tunnel/metrics.hpp"
#include "tunnel/tunnel_smooth.hpp"

using namespace tunnel;
using namespace tunnel::metrics;

namespace {

// Direct evaluation: Gaussian-weighted local statistics at every full window.
double ssim_oracle(const Image& a, const Image& b) {
  const int r = 5;
  double wsum = 0.0;
  double w2[11][11];
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      w2[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * 1.5 * 1.5));
      wsum += w2[i][j];
    }
  }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int y = r; y < a.height - r; ++y) {
    for (int x = r; x < a.width - r; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double w = w2[i][j] / wsum;
          const double va = a.at(x + j - r, y + i - r), vb = b.at(x + j - r, y + i - r);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace

TEST_CASE("ssim basics") {
  testing::Gen g(111);
  const Image a = g.image(32, 24, 1), b = g.image(32, 24, 1);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
  CHECK(ssim(Image(20, 20, 1, 0.0), Image(20, 20, 1, 1.0)) == doctest::Approx(1e-4 / 1.0001).epsilon(1e-9));
  const double s = ssim(a, b);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
  CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-9);
  CHECK(std::abs(ssim(a, b) - ssim_serial(a, b)) < 1e-12);
}

TEST_CASE("ssim of color images uses luma") {
  testing::Gen g(112);
  const Image a = g.image(20, 20, 3), b = g.image(20, 20, 3);
  CHECK(std::abs(ssim(a, b) - ssim(to_luma(a), to_luma(b))) < 1e-15);
}

TEST_CASE("ssim is one only for identical images") {
  testing::Gen g(113);
  for (int trial = 0; trial < 20; ++trial) {
    const Image a = testing::smooth_image(24, 24, 1, 200 + trial);
    Image b = a;
    b.at(g.integer(0, 23), g.integer(0, 23)) += 0.05;
    CHECK(ssim(a, b) < 1.0);
  }
}

TEST_CASE("ssim errors") {
  CHECK_THROWS_AS(ssim(Image(20, 20, 1), Image(21, 20, 1)), Error);
  CHECK_THROWS_AS(ssim(Image(8, 8, 1), Image(8, 8, 1)), Error);
}

TEST_CASE("stability report") {
  const Tunnel raw = testing::noisy_tunnel(64, 4.0, 1);
  SUBCASE("identical tunnels") {
    const auto r = tunnel_stability_report(raw, raw);
    CHECK(r.max_displacement == 0.0);
    CHECK(r.jitter_raw->total() == r.jitter_smoothed->total());
  }
  SUBCASE("static raw tunnel smooths to zero jitter") {
    const Tunnel still{{640, 480}, std::vector<BBox>(10, BBox{10, 10, 110, 110})};
    const auto r = tunnel_stability_report(still, smooth_tunnel(still));
    CHECK(r.jitter_smoothed->total() == doctest::Approx(0.0));
  }
  SUBCASE("smoothing halves jitter over 100 seeds") {
    double ratio = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Tunnel t = testing::noisy_tunnel(64, 4.0, seed);
      const auto r = tunnel_stability_report(t, smooth_tunnel(t));
      ratio += (r.jitter_smoothed->cx + r.jitter_smoothed->cy) / (r.jitter_raw->cx + r.jitter_raw->cy);
    }
    CHECK(1.0 - ratio / 100 >= 0.5);
  }
  SUBCASE("max displacement is the largest center distance") {
    Tunnel moved = raw;
    moved.boxes[5] = BBox::from_center(raw.boxes[5].cx() + 3, raw.boxes[5].cy() + 4, 160, 160);
    CHECK(tunnel_stability_report(raw, moved).max_displacement == doctest::Approx(5.0));
  }
  SUBCASE("short tunnels have no jitter") {
    const Tunnel two{{100, 100}, {{0, 0, 10, 10}, {1, 1, 11, 11}}};
    CHECK(!tunnel_stability_report(two, two).jitter_raw);
  }
  SUBCASE("length mismatch") {
    Tunnel shorter = raw;
    shorter.boxes.pop_back();
    CHECK_THROWS_AS(tunnel_stability_report(raw, shorter), Error);
  }
}

TEST_CASE("report json layout") {
  EvaluationReport r;
  r.ssim_per_frame = {0.5, 1.0};
  const Tunnel t = testing::noisy_tunnel(8, 2.0, 3);
  r.stability = tunnel_stability_report(t, smooth_tunnel(t));
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["ssim_mean"].get<double>() == doctest::Approx(0.75));
  CHECK(j["ssim_per_frame"].size() == 2);
  CHECK(j["jitter_raw"].contains("cx"));
  CHECK(j["jitter_smoothed"].contains("h"));
  CHECK(j.contains("max_displacement"));
  CHECK(j["lpips"].is_null());
  CHECK(j["vfid"].is_null());
}

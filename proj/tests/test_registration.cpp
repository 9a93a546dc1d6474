#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "panovid/error.hpp"
#include "panovid/registration.hpp"

using namespace panovid;

namespace {

Mat3 yaw(double deg) {
  const double a = deg * M_PI / 180.0;
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

Mat3 pitch(double deg) {
  const double a = deg * M_PI / 180.0;
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

Vec2 project(const Mat3& h, const Vec2& p) {
  const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

double corner_error(const Mat3& a, const Mat3& b, int w, int h) {
  double worst = 0.0;
  for (const Vec2& c : {Vec2(0, 0), Vec2(w, 0), Vec2(0, h), Vec2(w, h)}) {
    worst = std::max(worst, (project(a, c) - project(b, c)).norm());
  }
  return worst;
}

std::vector<Match> planted_matches(const Mat3& h, int n, double outlier_fraction, double noise, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ux(0, 320), uy(0, 240);
  std::normal_distribution<double> g(0.0, noise);
  std::vector<Match> out;
  for (int i = 0; i < n; ++i) {
    Match m;
    m.src = {ux(rng), uy(rng)};
    if (i < static_cast<int>(outlier_fraction * n)) {
      m.dst = {ux(rng), uy(rng)};
    } else {
      m.dst = project(h, m.src) + Vec2(g(rng), g(rng));
    }
    out.push_back(m);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace

TEST_CASE("DLT recovers an exact homography from clean correspondences") {
  Mat3 h;
  h << 1.1, 0.05, 12, -0.02, 0.95, -7, 1e-4, -2e-4, 1;
  std::vector<Match> ms;
  for (int i = 0; i < 6; ++i) {
    const Vec2 p(10.0 + 37.0 * i, 5.0 + 23.0 * ((i * 7) % 5));
    ms.push_back({p, project(h, p), 1.0f});
  }
  CHECK(corner_error(fit_homography_dlt(ms), h, 320, 240) < 1e-6);
}

TEST_CASE("RANSAC with 30% outliers recovers a 5 degree yaw within half a pixel") {
  const Intrinsics k = Intrinsics::centered(300, 320, 240);
  const Mat3 h = k.matrix() * yaw(5) * k.matrix().inverse();
  const auto ms = planted_matches(h, 200, 0.3, 0.3, 4);
  const Mat3 est = estimate_pair_homography(ms, {}, "pair");
  CHECK(corner_error(est, h, 320, 240) <= 0.5);
}

TEST_CASE("too few matches and collinear inliers are reported") {
  const auto few = planted_matches(Mat3::Identity(), 5, 0.0, 0.0, 1);
  try {
    estimate_pair_homography(few, {}, "frames 3-4");
    FAIL("expected a registration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Registration);
    CHECK(std::string(e.what()).find("frames 3-4") != std::string::npos);
  }
  std::vector<Match> line;
  for (int i = 0; i < 30; ++i) {
    const Vec2 p(5.0 * i, 2.0 * i + 1.0);
    line.push_back({p, p + Vec2(3, 0), 1.0f});
  }
  try {
    estimate_pair_homography(line, {}, "frames 0-1");
    FAIL("expected a degeneracy error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degeneracy);
  }
}

TEST_CASE("rotation homographies decompose back to their rotation") {
  const Intrinsics k = Intrinsics::centered(400, 320, 240);
  const Mat3 r = yaw(12) * pitch(-4);
  const RotationFit fit = decompose_rotation(3.0 * k.matrix() * r * k.matrix().inverse(), k);
  CHECK((fit.rotation - r).norm() < 1e-9);
  CHECK(fit.residual < 1e-9);
}

TEST_CASE("focal length is recovered from rotations about two axes") {
  const Intrinsics k = Intrinsics::centered(350, 320, 240);
  std::vector<Mat3> hs{Mat3::Identity()};
  for (int t = 1; t < 5; ++t) hs.push_back(k.matrix() * (yaw(6.0 * t) * pitch(2.0 * t)) * k.matrix().inverse());
  const auto f = estimate_focal(hs, 320, 240);
  REQUIRE(f.has_value());
  CHECK(*f == doctest::Approx(350).epsilon(1e-3));
  const std::vector<Mat3> none{Mat3::Identity(), Mat3::Identity()};
  CHECK_FALSE(estimate_focal(none, 320, 240).has_value());
}

TEST_CASE("angles and rays are inverse and canvas pixels map back to their angles") {
  for (double th : {-0.4, 0.0, 0.3}) {
    for (double ph : {-1.0, 0.2, 2.5}) {
      const Vec2 a = angles_from_ray(3.0 * ray_from_angles(th, ph));
      CHECK(a(0) == doctest::Approx(th));
      CHECK(a(1) == doctest::Approx(ph));
    }
  }
  CanvasGeometry g;
  g.phi_min = -0.5;
  g.theta_max = 0.25;
  g.pixels_per_radian = 100;
  const Vec2 a = g.angles_at(10, 4);
  const Vec2 p = g.pixel_of(a(0), a(1));
  CHECK(p(0) == doctest::Approx(10));
  CHECK(p(1) == doctest::Approx(4));
  CHECK(a(1) == doctest::Approx(-0.5 + 10.5 / 100));
}

TEST_CASE("a +10 degree per frame pan puts frame 2's centre at 20 degrees") {
  const int w = 96, h = 64;
  const double f = 300;
  Video v(3, h, w, 3, 0.0f);
  for (int t = 0; t < 3; ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = x + 0.5 - 0.5 * w, dy = y + 0.5 - 0.5 * h;
        const float g = static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2 * 2.5 * 2.5)));
        for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = g;
      }
  CameraModel cam;
  cam.intrinsics = Intrinsics::centered(f, w, h);
  for (int t = 0; t < 3; ++t) cam.rotations.push_back(yaw(10.0 * t));
  const CanvasGeometry geom = auto_fit_canvas(cam, w, h);
  const CanvasProjection proj = project_to_canvas(v, cam, geom);
  double sw = 0, sc = 0, sr = 0;
  for (int r = 0; r < geom.height; ++r)
    for (int c = 0; c < geom.width; ++c) {
      const double val = proj.canvas.at(2, r, c, 0);
      sw += val;
      sc += val * c;
      sr += val * r;
    }
  const Vec2 a = geom.angles_at(sc / sw, sr / sw);
  CHECK(std::abs(a(1) * 180.0 / M_PI - 20.0) <= 0.1);
  CHECK(std::abs(a(0)) * 180.0 / M_PI <= 0.1);
}

TEST_CASE("canvas-crop cameras place frames at their offsets") {
  const Video v = testing::random_video(2, 4, 5, 3);
  CameraModel cam;
  cam.mode = CameraMode::CanvasCrop;
  cam.intrinsics = Intrinsics::centered(5, 5, 4);
  cam.canvas_width = 12;
  cam.canvas_height = 6;
  cam.rotations = {Mat3::Identity(), Mat3::Identity()};
  cam.canvas_offsets = {{{0, 1}}, {{7, 2}}};
  const CanvasProjection p = project_to_canvas(v, cam, auto_fit_canvas(cam, 5, 4));
  REQUIRE(p.canvas.width() == 12);
  CHECK(p.mask.count() == 40u);
  CHECK(p.canvas.at(1, 2 + 3, 7 + 4, 2) == v.at(1, 3, 4, 2));
  CHECK(p.mask.at(0, 0, 0) == 0);

  const CameraModel back = camera_from_json(camera_to_json(cam));
  CHECK(back.mode == CameraMode::CanvasCrop);
  CHECK(back.canvas_offsets == cam.canvas_offsets);
  CHECK(back.canvas_width == 12);
}

TEST_CASE("rotation camera paths survive a JSON round trip") {
  testing::TempDir dir("cam");
  CameraModel cam;
  cam.intrinsics = Intrinsics::centered(250, 200, 100);
  cam.rotations = {Mat3::Identity(), yaw(3) * pitch(1)};
  save_camera_path(cam, dir.path / "camera.json");
  const CameraModel back = load_camera_path(dir.path / "camera.json");
  REQUIRE(back.frames() == 2);
  CHECK((back.rotations[1] - cam.rotations[1]).norm() < 1e-12);
  CHECK(back.intrinsics.focal == doctest::Approx(250));
}

TEST_CASE("a translating textured clip registers to pure translations") {
  const int w = 120, h = 90;
  Video v(3, h, w, 3);
  for (int t = 0; t < 3; ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double X = x + 3.0 * t, Y = y;
        const double val = 0.5 + 0.2 * std::sin(X * 0.31) * std::cos(Y * 0.23) + 0.15 * std::sin(X * 0.07 + Y * 0.11) +
                           0.1 * std::cos(X * 0.53 - Y * 0.41);
        for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = static_cast<float>(val);
      }
  const auto hs = estimate_homographies(v);
  REQUIRE(hs.size() == 3u);
  // Frame t content at x sits at x + 3t in frame 0.
  for (int t = 1; t < 3; ++t) {
    const Vec2 c = project(hs[t], Vec2(60, 45));
    CHECK(c.x() == doctest::Approx(60 + 3.0 * t).epsilon(0.01));
    CHECK(c.y() == doctest::Approx(45).epsilon(0.01));
  }
}

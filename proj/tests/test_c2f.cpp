#include <doctest.h>

#include "helpers.hpp"
#include "panovid/c2f.hpp"
#include "panovid/error.hpp"

using namespace panovid;

namespace {

BackendDescriptor small(int frames, int h, int w, int steps) {
  BackendDescriptor d = BackendDescriptor::gaussian_defaults();
  d.context_frames = frames;
  d.native_height = h;
  d.native_width = w;
  d.sampling_steps = steps;
  return d;
}

}  // namespace

TEST_CASE("fast-motion pinning ends at one eighth of the chain") {
  const Mask m(3, 2, 2);
  const MaskSchedule fast = build_mask_schedule(m, {1}, 256, ScheduleMode::FastMotion);
  CHECK(fast.frame_full(31, 1));
  CHECK_FALSE(fast.frame_full(32, 1));
  CHECK_FALSE(fast.frame_full(0, 0));
  const MaskSchedule standard = build_mask_schedule(m, {1}, 256, ScheduleMode::Standard);
  CHECK(standard.frame_full(255, 1));
  CHECK_THROWS_AS(build_mask_schedule(m, {3}, 256, ScheduleMode::Standard), Error);
  CHECK(parse_schedule_mode("fast-motion") == ScheduleMode::FastMotion);
  CHECK_THROWS_AS(parse_schedule_mode("slow"), Error);
}

TEST_CASE("temporal upsampling interpolates between coarse timestamps") {
  Video coarse(2, 1, 1, 3);
  for (int c = 0; c < 3; ++c) {
    coarse.at(0, 0, 0, c) = 0.0f;
    coarse.at(1, 0, 0, c) = 1.0f;
  }
  const std::vector<double> ct{0.5, 2.5}, ft{0, 1, 2, 3};
  const Video blend = upsample_temporal(coarse, ct, ft);
  CHECK(blend.at(0, 0, 0, 0) == 0.0f);
  CHECK(blend.at(1, 0, 0, 0) == doctest::Approx(0.25));
  CHECK(blend.at(2, 0, 0, 0) == doctest::Approx(0.75));
  CHECK(blend.at(3, 0, 0, 0) == 1.0f);
  const Video rep = upsample_temporal(coarse, ct, ft, UpsampleMode::Repeat);
  CHECK(rep.at(1, 0, 0, 0) == 0.0f);
  CHECK(rep.at(2, 0, 0, 0) == 1.0f);
}

TEST_CASE("coincident frames are the nearest fine frames, earlier on ties") {
  CHECK(coarse_coincident_frames({0.5, 2.5}, {0, 1, 2, 3}) == std::vector<int>{0, 2});
  CHECK(coarse_coincident_frames({1.0, 3.2}, {0, 1, 2, 3, 4}) == std::vector<int>{1, 3});
}

TEST_CASE("merging takes input where valid and the upsampled level elsewhere") {
  const Video x = testing::random_video(2, 3, 4, 1);
  const Video up = testing::random_video(2, 3, 4, 2);
  Mask m(2, 3, 4);
  m.at(1, 2, 3) = 1;
  const Video out = merge_input(x, m, up);
  CHECK(out.at(1, 2, 3, 1) == x.at(1, 2, 3, 1));
  CHECK(out.at(0, 0, 0, 2) == up.at(0, 0, 0, 2));
}

TEST_CASE("coarse-to-fine with the oracle returns ground truth at every level") {
  const int n = 16, h = 8, w = 32;
  // Static in time: coincident frames are pinned to box-filtered content,
  // which only equals the frame itself when nothing moves.
  const Video still = testing::random_video(1, h, w, 3, false);
  Video gt(n, h, w, 3);
  for (int t = 0; t < n; ++t)
    std::copy(still.data().begin(), still.data().end(), gt.data().begin() + t * still.data().size());
  Mask m(n, h, w);
  for (int t = 0; t < n; ++t)
    for (int y = 0; y < h; ++y)
      for (int x = t; x < t + 12; ++x) m.at(t, y, x) = 1;
  Video in = composite(gt, m, Video(n, h, w, 3, 0.0f));
  const TemporalPyramid p = build_pyramid(in, m, 4);
  REQUIRE(p.levels.size() == 3u);
  Backend b;
  b.gaussian = std::make_shared<OracleBackend>(small(4, 8, 16, 4), gt);
  CoarseToFineOptions o;
  o.completion.spatial_stride = 8;
  testing::TempDir dir("c2f");
  o.checkpoint_dir = dir.path;
  const CoarseToFineResult r = run_coarse_to_fine(p, b, o, 5, true);
  for (std::size_t i = 0; i < gt.data().size(); ++i) CHECK(r.output.data()[i] == doctest::Approx(gt.data()[i]).epsilon(1e-5));
  for (std::size_t p2 = 0; p2 < m.data().size(); ++p2)
    if (m.data()[p2])
      for (int c = 0; c < 3; ++c) CHECK(r.output.data()[p2 * 3 + c] == in.data()[p2 * 3 + c]);
  REQUIRE(r.levels.size() == 3u);
  CHECK(r.levels[0].up.frames() == n);
  CHECK(std::filesystem::exists(dir.path / "level_0" / "merge"));
  CHECK(std::filesystem::exists(dir.path / "level_1" / "up"));
}

TEST_CASE("coarse-to-fine output is identical across thread counts") {
  const Video in = testing::random_video(12, 8, 24, 6);
  Mask m(12, 8, 24);
  for (int t = 0; t < 12; ++t)
    for (int y = 0; y < 8; ++y)
      for (int x = t; x < t + 10; ++x) m.at(t, y, x) = 1;
  const TemporalPyramid p = build_pyramid(in, m, 3);
  Backend b;
  b.gaussian = std::make_shared<DiffusionMockBackend>(small(3, 8, 12, 8));
  CoarseToFineOptions a;
  a.completion.spatial_stride = 6;
  a.schedule = ScheduleMode::FastMotion;
  CoarseToFineOptions c = a;
  c.completion.threads = 4;
  CHECK(run_coarse_to_fine(p, b, a, 9).output.data() == run_coarse_to_fine(p, b, c, 9).output.data());
}

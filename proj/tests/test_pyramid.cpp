#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "panovid/error.hpp"
#include "panovid/pyramid.hpp"

using namespace panovid;

TEST_CASE("level sizes halve until the context window fits") {
  CHECK(pyramid_level_sizes(88, 11) == std::vector<int>{88, 44, 22, 11});
  CHECK(pyramid_level_sizes(172, 11) == std::vector<int>{172, 86, 43, 22, 11});
  CHECK(pyramid_level_sizes(88, 80) == std::vector<int>{88, 44});
  CHECK(pyramid_level_sizes(10, 11) == std::vector<int>{10});
  CHECK_THROWS_AS(pyramid_level_sizes(10, 1), Error);
}

TEST_CASE("spans of an 8-frame clip at 4 frames are consecutive pairs") {
  const auto spans = level_spans(8, 4);
  REQUIRE(spans.size() == 4u);
  for (int j = 0; j < 4; ++j) {
    CHECK(spans[j].first == 2 * j);
    CHECK(spans[j].last == 2 * j + 2);
    CHECK(spans[j].center_time() == doctest::Approx(2 * j + 0.5));
  }
}

TEST_CASE("88 frames at an 11-frame context give filter widths 1, 2, 4, 8") {
  const Video x = testing::random_video(88, 2, 3, 5);
  const TemporalPyramid p = build_pyramid(x, testing::full_mask(88, 2, 3), 11);
  REQUIRE(p.sizes() == std::vector<int>{88, 44, 22, 11});
  const int widths[] = {1, 2, 4, 8};
  for (int k = 0; k < 4; ++k) {
    CHECK(p.levels[k].filter_width == widths[k]);
    for (const auto& s : p.levels[k].spans) CHECK(s.last - s.first == widths[k]);
  }
  const auto times = level_frame_times(p, 3);
  CHECK(times.front() == doctest::Approx(3.5));
  CHECK(times.back() == doctest::Approx(83.5));
}

TEST_CASE("box filtering preserves the temporal mean of always-valid pixels") {
  const Video x = testing::random_video(88, 4, 4, 9, false);
  const TemporalPyramid p = build_pyramid(x, testing::full_mask(88, 4, 4), 11);
  for (int k = 1; k <= p.coarsest(); ++k) {
    const auto& lv = p.levels[k];
    for (int y = 0; y < 4; ++y) {
      for (int c = 0; c < 3; ++c) {
        // Average of the level over its windows vs. the level-0 frames those windows cover.
        double coarse = 0.0, fine = 0.0;
        int fine_n = 0;
        for (int j = 0; j < lv.frames(); ++j) {
          coarse += lv.video.at(j, y, 1, c);
          for (int t = lv.spans[j].first; t < lv.spans[j].last; ++t, ++fine_n) fine += x.at(t, y, 1, c);
        }
        CHECK(std::abs(coarse / lv.frames() - fine / fine_n) <= 1e-5);
      }
    }
  }
}

TEST_CASE("masked averaging ignores invalid samples and the mask follows the centre frame") {
  Video x(4, 1, 2, 3, 0.0f);
  Mask m(4, 1, 2, 1);
  for (int t = 0; t < 4; ++t) {
    for (int c = 0; c < 3; ++c) {
      x.at(t, 0, 0, c) = 0.1f * (t + 1);
      x.at(t, 0, 1, c) = 0.9f;
    }
  }
  m.at(1, 0, 0) = 0;  // frame 1 pixel 0 unknown
  const TemporalPyramid p = build_pyramid(x, m, 2);
  REQUIRE(p.sizes() == std::vector<int>{4, 2});
  const auto& lv = p.levels[1];
  CHECK(lv.video.at(0, 0, 0, 0) == doctest::Approx(0.1));  // only frame 0 counts
  CHECK(lv.video.at(1, 0, 0, 0) == doctest::Approx(0.35));
  CHECK(lv.video.at(0, 0, 1, 2) == doctest::Approx(0.9));
  for (int j = 0; j < 2; ++j) {
    for (int xx = 0; xx < 2; ++xx) CHECK(lv.mask.at(j, 0, xx) == m.at(lv.center_indices[j], 0, xx));
  }
}

TEST_CASE("short inputs produce a single level") {
  const Video x = testing::random_video(5, 2, 2, 1);
  const Mask m = testing::full_mask(5, 2, 2);
  const TemporalPyramid p = build_pyramid(x, m, 11);
  REQUIRE(p.levels.size() == 1u);
  CHECK(p.levels[0].video.data() == x.data());
  CHECK(level_frame_times(p, 0) == std::vector<double>{0, 1, 2, 3, 4});
}

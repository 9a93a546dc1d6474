#include <doctest.h>

#include "helpers.hpp"
#include "panovid/complete.hpp"
#include "panovid/error.hpp"

using namespace panovid;

namespace {

BackendDescriptor gaussian(int frames, int h, int w, int steps = 4) {
  BackendDescriptor d = BackendDescriptor::gaussian_defaults();
  d.context_frames = frames;
  d.native_height = h;
  d.native_width = w;
  d.sampling_steps = steps;
  return d;
}

BackendDescriptor token(int frames, int h, int w, bool causal) {
  BackendDescriptor d = BackendDescriptor::token_defaults();
  d.context_frames = frames;
  d.native_height = h;
  d.native_width = w;
  d.patch_size = 4;
  d.vocabulary_size = 16;
  d.causal = causal;
  return d;
}

// A band of valid columns moving right by `speed` px per frame.
Mask pan_mask(int frames, int h, int w, int band, int speed) {
  Mask m(frames, h, w);
  for (int t = 0; t < frames; ++t)
    for (int y = 0; y < h; ++y)
      for (int x = t * speed; x < std::min(w, t * speed + band); ++x) m.at(t, y, x) = 1;
  return m;
}

void check_fidelity(const Video& out, const Video& in, const Mask& m) {
  std::size_t bad = 0;
  for (std::size_t p = 0; p < m.data().size(); ++p) {
    if (!m.data()[p]) continue;
    for (int c = 0; c < 3; ++c) bad += out.data()[p * 3 + c] != in.data()[p * 3 + c];
  }
  CHECK(bad == 0u);
}

}  // namespace

TEST_CASE("working size keeps the aspect ratio at the native height") {
  const WorkingSize a = working_size(gaussian(8, 32, 32), 128, 512);
  CHECK(a.height == 32);
  CHECK(a.width == 128);
  const WorkingSize b = working_size(token(4, 16, 32, false), 100, 310);
  CHECK(b.height == 16);
  CHECK(b.width % 4 == 0);
  CHECK(b.width == 48);  // 49.6 rounds to the 4-px lattice
  CHECK_THROWS_AS(working_size(gaussian(8, 32, 64), 128, 128), Error);
}

TEST_CASE("a token is valid only when its whole patch is") {
  Mask m(2, 4, 8, 1);
  m.at(0, 3, 5) = 0;
  const Mask t = derive_token_mask(m, 4);
  CHECK(t.frames() == 2);
  CHECK(t.at(0, 0, 0) == 1);
  CHECK(t.at(0, 0, 1) == 0);
  CHECK(t.at(1, 0, 1) == 1);
  const Mask grouped = derive_token_mask(m, 4, 2);
  CHECK(grouped.frames() == 1);
  CHECK(grouped.at(0, 0, 1) == 0);
  CHECK_THROWS_AS(derive_token_mask(Mask(1, 3, 8), 4), Error);
}

TEST_CASE("forward assignment matches a first-valid-frame scan") {
  const Mask m = pan_mask(6, 2, 20, 5, 3);
  const Mask f = forward_assignment(m);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 20; ++x) {
      int first = -1;
      for (int t = 0; t < 6 && first < 0; ++t)
        if (m.at(t, y, x)) first = t;
      for (int t = 0; t < 6; ++t) CHECK(f.at(t, y, x) == (first >= 0 && t >= first ? 1 : 0));
    }
}

TEST_CASE("oracle completion reproduces ground truth and keeps observed pixels") {
  const Video gt = testing::random_video(6, 8, 32, 2);
  const Mask m = pan_mask(6, 8, 32, 10, 4);
  Video in = gt;
  for (std::size_t p = 0; p < m.data().size(); ++p)
    if (!m.data()[p])
      for (int c = 0; c < 3; ++c) in.data()[p * 3 + c] = 0.0f;
  Backend b;
  b.gaussian = std::make_shared<OracleBackend>(gaussian(4, 8, 16), gt);
  const LevelInput li{in, m, level_spans(6, 6), 0, false};
  CompletionOptions o;
  o.spatial_stride = 8;
  const Video out = complete_base(li, b, o, 1);
  check_fidelity(out, in, m);
  for (std::size_t i = 0; i < gt.data().size(); ++i) CHECK(out.data()[i] == doctest::Approx(gt.data()[i]).epsilon(1e-5));
}

TEST_CASE("gaussian completion is independent of the thread count") {
  const Video in = testing::random_video(7, 8, 24, 5);
  const Mask m = pan_mask(7, 8, 24, 8, 2);
  Backend b;
  b.gaussian = std::make_shared<DiffusionMockBackend>(gaussian(4, 8, 12, 6));
  const LevelInput li{in, m, {}, 0, false};
  CompletionOptions one, many;
  one.spatial_stride = many.spatial_stride = 4;
  many.threads = 3;
  const Video a = complete_base(li, b, one, 11);
  const Video c = complete_base(li, b, many, 11);
  CHECK(a.data() == c.data());
  check_fidelity(a, in, m);
}

TEST_CASE("interpolation completion fills temporally and honours a custom overlap") {
  Video in(6, 4, 8, 3, 0.0f);
  Mask m(6, 4, 8);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) {
        in.at(0, y, x, c) = 0.2f;
        in.at(5, y, x, c) = 0.7f;
        m.at(0, y, x) = m.at(5, y, x) = 1;
      }
  Backend b;
  b.gaussian = std::make_shared<InterpolationBackend>(gaussian(6, 4, 8));
  CompletionOptions o;
  o.spatial_stride = 4;
  const Video out = complete_base({in, m, {}, 0, false}, b, o, 3);
  for (int t = 0; t < 6; ++t) CHECK(out.at(t, 1, 3, 0) == doctest::Approx(0.2 + 0.1 * t));
  check_fidelity(out, in, m);

  o.temporal_overlap = 2;
  Backend small;
  small.gaussian = std::make_shared<InterpolationBackend>(gaussian(4, 4, 8));
  check_fidelity(complete_base({in, m, {}, 0, false}, small, o, 3), in, m);
}

TEST_CASE("token completion keeps observed pixels and is thread-independent") {
  const Video in = testing::random_video(6, 16, 48, 8);
  const Mask m = pan_mask(6, 16, 48, 20, 4);
  auto kb = std::make_shared<KMeansTokenBackend>(token(4, 16, 16, false));
  kb->prepare(in, m);
  Backend b;
  b.token = kb;
  CompletionOptions one, many;
  one.spatial_stride = many.spatial_stride = 8;
  one.token_iterations = many.token_iterations = 4;
  many.threads = 2;
  const LevelInput li{in, m, {}, 0, false};
  const Video a = complete_base(li, b, one, 4);
  CHECK(a.data() == complete_base(li, b, many, 4).data());
  check_fidelity(a, in, m);
}

TEST_CASE("causal completion takes each pixel from exactly one pass") {
  const Video in = testing::random_video(6, 16, 48, 9);
  const Mask m = pan_mask(6, 16, 48, 20, 4);
  Backend plain;
  plain.token = std::make_shared<KMeansTokenBackend>(token(4, 16, 16, false));
  CHECK_THROWS_AS(complete_base_causal({in, m, {}, 0, false}, plain, {}, 1), Error);

  auto kb = std::make_shared<KMeansTokenBackend>(token(4, 16, 16, true));
  kb->prepare(in, m);
  Backend b;
  b.token = kb;
  CompletionOptions o;
  o.spatial_stride = 8;
  o.token_iterations = 3;
  const LevelInput li{in, m, {}, 0, false};
  const CausalCompletion cc = complete_base_causal(li, b, o, 2);
  CHECK(cc.forward.data() == forward_assignment(m).data());
  check_fidelity(cc.video, in, m);
  const Video fwd = complete_base(li, b, o, 2);
  for (std::size_t p = 0; p < cc.forward.data().size(); ++p)
    if (cc.forward.data()[p])
      for (int c = 0; c < 3; ++c) CHECK(cc.video.data()[p * 3 + c] == fwd.data()[p * 3 + c]);
}

TEST_CASE("mismatched schedules are rejected") {
  const Video in(4, 4, 8, 3);
  const Mask m(4, 4, 8);
  Backend b;
  b.gaussian = std::make_shared<InterpolationBackend>(gaussian(4, 4, 8));
  CompletionOptions o;
  o.spatial_stride = 4;
  CHECK_THROWS_AS(sample_level({in, m, {}, 0, false}, MaskSchedule::constant(Mask(3, 4, 8), 4), b, o, 0), Error);
}

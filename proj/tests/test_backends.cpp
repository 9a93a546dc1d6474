#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "panovid/backends.hpp"
#include "panovid/error.hpp"
#include "panovid/pyramid.hpp"

using namespace panovid;

namespace {

BackendDescriptor small_gaussian(int frames = 4, int h = 4, int w = 6, int steps = 16) {
  BackendDescriptor d = BackendDescriptor::gaussian_defaults();
  d.context_frames = frames;
  d.native_height = h;
  d.native_width = w;
  d.sampling_steps = steps;
  return d;
}

BackendDescriptor small_token(int frames = 3, int h = 8, int w = 16, int vocab = 8, bool causal = false) {
  BackendDescriptor d = BackendDescriptor::token_defaults();
  d.context_frames = frames;
  d.native_height = h;
  d.native_width = w;
  d.vocabulary_size = vocab;
  d.patch_size = 4;
  d.causal = causal;
  return d;
}

// Returns a fixed field regardless of the request.
class ConstantBackend final : public GaussianBackend {
 public:
  ConstantBackend(BackendDescriptor d, float mean, float var) : d_(d), mean_(mean), var_(var) {}
  const BackendDescriptor& descriptor() const override { return d_; }
  GaussianField predict(const GaussianRequest& r) const override {
    ++calls;
    seen_frames = r.window.frames();
    const Video& w = r.window;
    return {Video(w.frames(), w.height(), w.width(), 3, mean_), Video(w.frames(), w.height(), w.width(), 3, var_)};
  }
  mutable int calls = 0;
  mutable int seen_frames = 0;

 private:
  BackendDescriptor d_;
  float mean_, var_;
};

}  // namespace

TEST_CASE("linear noise schedule matches the closed form") {
  const NoiseSchedule s = NoiseSchedule::linear(1000);
  CHECK(s.steps() == 1000);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(0.02));
  double bar = 1.0;
  for (int t = 1; t <= 1000; ++t) bar *= 1.0 - (1e-4 + (t - 1) / 999.0 * (0.02 - 1e-4));
  CHECK(s.alpha_bar(1000) == doctest::Approx(bar).epsilon(1e-9));
  CHECK(s.alpha_bar(0) == 1.0);

  const NoiseSchedule short_chain = NoiseSchedule::linear(256);
  CHECK(short_chain.beta(1) == doctest::Approx(1e-4 * 1000.0 / 256.0));
  CHECK(short_chain.beta(256) == doctest::Approx(0.02 * 1000.0 / 256.0));
  const int t = 100;
  const double want = short_chain.beta(t) * (1 - short_chain.alpha_bar(t - 1)) / (1 - short_chain.alpha_bar(t));
  CHECK(short_chain.posterior_variance(t) == doctest::Approx(want));
  CHECK_THROWS_AS(NoiseSchedule::linear(0), Error);
}

TEST_CASE("mask schedules pin whole frames for their first steps") {
  Mask base(3, 2, 2);
  base.at(1, 0, 0) = 1;
  const MaskSchedule s(base, {0, 5, 16}, 16);
  CHECK_FALSE(s.pinned(0, 0, 1, 1));
  CHECK(s.pinned(4, 1, 1, 1));
  CHECK_FALSE(s.pinned(5, 1, 1, 1));
  CHECK(s.pinned(5, 1, 0, 0));
  CHECK(s.at_step(15).count() == 1u + 4u);
  CHECK(s.final_mask().data() == s.at_step(15).data());
  CHECK(s.slice(1, 3).full_frame_steps() == std::vector<int>{5, 16});
  CHECK_THROWS_AS(MaskSchedule(base, {0, 0}, 16), Error);
}

TEST_CASE("zero-variance samples copy the mean exactly") {
  GaussianField f{Video(1, 2, 3, 3, 0.25f), Video(1, 2, 3, 3, 0.0f)};
  Video out;
  sample_gaussian(f, CounterRng(1, {2}), out);
  CHECK(out.data() == f.mean.data());
}

TEST_CASE("gaussian draws have the requested moments") {
  const int n = 20000;
  GaussianField f{Video(1, 1, n, 1, 0.3f), Video(1, 1, n, 1, 0.04f)};
  Video out;
  sample_gaussian(f, CounterRng(9, {}), out);
  double s = 0, s2 = 0;
  for (float v : out.data()) {
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean - 0.3) < 4 * 0.2 / std::sqrt(n));
  CHECK(std::abs(var / 0.04 - 1.0) < 0.05);
}

TEST_CASE("the final step reproduces pinned content bit-exactly") {
  const BackendDescriptor d = small_gaussian();
  const DiffusionMockBackend mock(d);
  const Video window = testing::random_video(4, 4, 6, 3);
  Mask pinned(4, 4, 6);
  for (int t = 0; t < 4; ++t)
    for (int y = 0; y < 4; ++y) pinned.at(t, y, t) = 1;
  const Video out = ddpm_sample(mock, window, MaskSchedule::constant(pinned, 16), 5);
  for (std::size_t p = 0; p < pinned.data().size(); ++p) {
    if (!pinned.data()[p]) continue;
    for (int c = 0; c < 3; ++c) CHECK(out.data()[p * 3 + c] == window.data()[p * 3 + c]);
  }
  for (float v : out.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("the single-step shortcut equals the full chain for state-independent predictors") {
  const BackendDescriptor d = small_gaussian(3, 4, 6, 24);
  const InterpolationBackend interp(d, 0.01f);
  REQUIRE(interp.descriptor().state_independent);
  Video window = testing::random_video(3, 4, 6, 8);
  Mask pinned(3, 4, 6);
  for (int y = 0; y < 4; ++y) {
    pinned.at(0, y, 0) = pinned.at(2, y, 5) = pinned.at(1, y, 2) = 1;
  }
  const MaskSchedule sched(pinned, {0, 6, 0}, 24);
  const NoiseSchedule noise = NoiseSchedule::linear(24);
  int calls = 0;
  FieldPredictor predict = [&](const Video& state, int step, int timestep) {
    ++calls;
    const Mask pins = sched.at_step(step);
    return gaussian_predict(interp, {window, pins, state, step, timestep, noise, {}, 3});
  };
  const Video full = ddpm_sample_loop(window, sched, noise, predict, {3, 0, 0}, false);
  CHECK(calls == 24);
  calls = 0;
  const Video fast = ddpm_sample_loop(window, sched, noise, predict, {3, 0, 0}, true);
  CHECK(calls == 1);
  CHECK(fast.data() == full.data());
}

TEST_CASE("the mock sampler is reproducible and ends on its inpainting target") {
  const BackendDescriptor d = small_gaussian();
  const DiffusionMockBackend mock(d);
  const Video window = testing::random_video(4, 4, 6, 1);
  const Mask none(4, 4, 6);
  const MaskSchedule s = MaskSchedule::constant(none, 16);
  CHECK(ddpm_sample(mock, window, s, 1).data() == ddpm_sample(mock, window, s, 1).data());
  // The t=1 posterior mean is the x0 estimate itself and carries no noise.
  const Video fill = interpolation_fill(window, none);
  const Video out = ddpm_sample(mock, window, s, 2);
  for (std::size_t i = 0; i < out.data().size(); ++i) CHECK(out.data()[i] == doctest::Approx(fill.data()[i]).epsilon(1e-5));
}

TEST_CASE("short windows are padded to the context and trimmed afterwards") {
  const ConstantBackend b(small_gaussian(5), 0.5f, 0.0f);
  const Video w(2, 4, 6, 3);
  const Mask m(2, 4, 6);
  const NoiseSchedule noise = NoiseSchedule::linear(16);
  const GaussianField f = gaussian_predict(b, {w, m, w, 0, 16, noise, {}, 0});
  CHECK(b.seen_frames == 5);
  CHECK(f.mean.frames() == 2);
}

TEST_CASE("contract violations are rejected") {
  const NoiseSchedule noise = NoiseSchedule::linear(16);
  const ConstantBackend b(small_gaussian(), 0.5f, -1.0f);
  const Video w(4, 4, 6, 3);
  const Mask m(4, 4, 6);
  try {
    gaussian_predict(b, {w, m, w, 0, 16, noise, {}, 0});
    FAIL("negative variance accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Contract);
  }
  const Video wrong(4, 5, 6, 3);
  const Mask wrong_m(4, 5, 6);
  CHECK_THROWS_AS(gaussian_predict(b, {wrong, wrong_m, wrong, 0, 16, noise, {}, 0}), Error);
  const Video too_long(5, 4, 6, 3);
  const Mask too_long_m(5, 4, 6);
  CHECK_THROWS_AS(gaussian_predict(b, {too_long, too_long_m, too_long, 0, 16, noise, {}, 0}), Error);
}

TEST_CASE("interpolation fill blends the nearest observed samples in time") {
  Video w(5, 1, 3, 3, 0.0f);
  Mask m(5, 1, 3);
  for (int c = 0; c < 3; ++c) {
    w.at(0, 0, 0, c) = 0.2f;
    w.at(4, 0, 0, c) = 0.6f;
    w.at(3, 0, 1, c) = 0.9f;
  }
  m.at(0, 0, 0) = m.at(4, 0, 0) = m.at(3, 0, 1) = 1;
  const Video f = interpolation_fill(w, m);
  for (int t = 0; t < 5; ++t) CHECK(f.at(t, 0, 0, 1) == doctest::Approx(0.2 + 0.1 * t));
  CHECK(f.at(0, 0, 1, 0) == doctest::Approx(0.9));  // before the only sample: nearest
  CHECK(f.at(4, 0, 1, 0) == doctest::Approx(0.9));
  // Column 2 is never observed: row fill from its left neighbour.
  CHECK(f.at(2, 0, 2, 0) == doctest::Approx(f.at(2, 0, 1, 0)));

  // Non-uniform timestamps weight by time, not index.
  const Video g = interpolation_fill(w, m, {0, 1, 2, 3, 8});
  CHECK(g.at(2, 0, 0, 0) == doctest::Approx(0.2 + 0.4 * 2.0 / 8.0));
}

TEST_CASE("linear interpolation baseline keeps observed pixels") {
  const Video x = testing::random_video(4, 3, 3, 2);
  Mask m(4, 3, 3);
  m.at(0, 1, 1) = m.at(3, 1, 1) = m.at(2, 0, 0) = 1;
  const Video y = linear_interpolation_baseline(x, m);
  CHECK(y.at(0, 1, 1, 0) == x.at(0, 1, 1, 0));
  CHECK(y.at(2, 0, 0, 2) == x.at(2, 0, 0, 2));
  CHECK(y.at(1, 1, 1, 1) == doctest::Approx(x.at(0, 1, 1, 1) + (x.at(3, 1, 1, 1) - x.at(0, 1, 1, 1)) / 3.0f));
}

TEST_CASE("oracle backend returns span-averaged ground truth at the window offset") {
  const Video gt = testing::random_video(4, 4, 10, 7, false);
  const OracleBackend oracle(small_gaussian(2, 4, 6), gt);
  const Video w(2, 4, 6, 3);
  const Mask m(2, 4, 6);
  WindowContext ctx;
  ctx.spans = {{0, 2}, {2, 4}};
  ctx.x_offset = 3;
  ctx.working_width = 10;
  ctx.working_height = 4;
  const NoiseSchedule noise = NoiseSchedule::linear(16);
  const GaussianField f = gaussian_predict(oracle, {w, m, w, 0, 16, noise, ctx, 0});
  CHECK(f.mean.at(1, 2, 1, 2) == doctest::Approx(0.5 * (gt.at(2, 2, 4, 2) + gt.at(3, 2, 4, 2))));
  for (float v : f.variance.data()) CHECK(v == 0.0f);
}

TEST_CASE("k-means codebook keeps distinct patches when they fit the vocabulary") {
  KMeansTokenBackend b(small_token(2, 8, 16, 8));
  Video canvas(2, 8, 16, 3, 0.0f);
  // Four distinct flat patches laid out on the lattice.
  for (int t = 0; t < 2; ++t)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) canvas.at(t, y, x, c) = 0.1f * (x / 4) + 0.05f * c;
  b.prepare(canvas, testing::full_mask(2, 8, 16));
  CHECK(b.codebook_size() == 4);  // vocabulary shrinks to the distinct patches
  CHECK(b.descriptor().vocabulary_size == 4);
  const TokenGrid g = token_encode(b, canvas);
  CHECK(g.frames == 2);
  CHECK(g.width == 4);
  CHECK(token_decode(b, g).data() == canvas.data());
  std::set<int> ids(g.ids.begin(), g.ids.end());
  CHECK(ids.size() == 4u);
}

TEST_CASE("k-means training is deterministic when patches outnumber the vocabulary") {
  const Video canvas = testing::random_video(2, 8, 16, 4);
  KMeansTokenBackend a(small_token(2, 8, 16, 4)), b(small_token(2, 8, 16, 4));
  a.prepare(canvas, testing::full_mask(2, 8, 16));
  b.prepare(canvas, testing::full_mask(2, 8, 16));
  CHECK(a.codebook() == b.codebook());
  CHECK(a.codebook_size() == 4);
  // Every patch maps to its nearest codeword.
  const TokenGrid g = a.encode(canvas);
  const Video back = a.decode(g);
  CHECK(back.same_shape(canvas));
}

TEST_CASE("neighbourhood predictor: one-hot where known, histogram or uniform elsewhere") {
  KMeansTokenBackend b(small_token(3, 8, 16, 4), {1, 0.0f, 10, 4096, 7});
  b.prepare(testing::random_video(3, 8, 16, 2), testing::full_mask(3, 8, 16));
  TokenGrid t(3, 2, 4, 0);
  Mask known(3, 2, 4);
  t.at(0, 0, 0) = 2;
  known.at(0, 0, 0) = 1;
  t.at(2, 1, 3) = 3;
  known.at(2, 1, 3) = 1;
  const CategoricalField f = token_predict(b, t, known);
  CHECK(f.at(f.position(0, 0, 0))[2] == 1.0f);
  CHECK(f.at(f.position(1, 1, 1))[2] == doctest::Approx(1.0));  // sees only (0,0,0) within radius 1
  CHECK(f.at(f.position(0, 1, 1))[3] == 0.0f);                 // (2,1,3) is two frames away
  for (float p : f.at(f.position(0, 0, 3))) CHECK(p == doctest::Approx(0.25));  // empty neighbourhood

  KMeansTokenBackend causal(small_token(3, 8, 16, 4, true), {1, 0.0f, 10, 4096, 7});
  causal.prepare(testing::random_video(3, 8, 16, 2), testing::full_mask(3, 8, 16));
  const CategoricalField g = token_predict(causal, t, known);
  for (float p : g.at(g.position(1, 1, 3))) CHECK(p == doctest::Approx(0.25));  // future frame ignored
}

TEST_CASE("iterative sampling follows the cosine unmasking schedule") {
  const int n_unknown = 40, iterations = 5;
  TokenGrid t(1, 5, 10, 0);
  Mask known(1, 5, 10);
  for (int x = 0; x < 10; ++x) known.at(0, 0, x) = 1;  // 10 known, 40 unknown
  std::vector<std::size_t> known_counts;
  CategoricalPredictor predict = [&](const TokenGrid& tokens, const Mask& k) {
    known_counts.push_back(k.count());
    CategoricalField f(tokens.frames, tokens.height, tokens.width, 3);
    for (std::size_t p = 0; p < f.positions(); ++p) {
      f.at(p)[0] = 0.2f;
      f.at(p)[1] = 0.3f + 0.001f * static_cast<float>(p % 7);
      f.at(p)[2] = 0.5f - 0.001f * static_cast<float>(p % 7);
    }
    return f;
  };
  const TokenGrid out = iterative_token_sample(t, known, iterations, predict, {1, 0, 0});
  REQUIRE(known_counts.size() == static_cast<std::size_t>(iterations));
  for (int r = 1; r < iterations; ++r) {
    const auto open = static_cast<std::size_t>(std::floor(n_unknown * std::cos(M_PI / 2 * r / iterations)));
    CHECK(known_counts[r] == 10 + (n_unknown - open));
  }
  for (int x = 0; x < 10; ++x) CHECK(out.at(0, 0, x) == 0);
  for (auto id : out.ids) CHECK((id >= 0 && id < 3));
}

TEST_CASE("token predictions must be normalized") {
  class Bad final : public TokenBackend {
   public:
    BackendDescriptor d = small_token(1, 4, 4, 2);
    const BackendDescriptor& descriptor() const override { return d; }
    TokenGrid encode(const Video&) const override { return TokenGrid(1, 1, 1); }
    Video decode(const TokenGrid&) const override { return Video(1, 4, 4, 3); }
    CategoricalField predict(const TokenGrid& t, const Mask&, const WindowContext&) const override {
      CategoricalField f(t.frames, t.height, t.width, 2);
      for (float& p : f.probs) p = 0.7f;
      return f;
    }
  } bad;
  try {
    token_predict(bad, TokenGrid(1, 1, 1), Mask(1, 1, 1));
    FAIL("unnormalized probabilities accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Contract);
  }
  CHECK_THROWS_AS(token_decode(bad, TokenGrid(1, 1, 1, 5)), Error);
}

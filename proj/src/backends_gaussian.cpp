#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "panovid/backends.hpp"
#include "panovid/error.hpp"
#include "panovid/image_ops.hpp"

namespace panovid {

const char* to_string(Flavor flavor) { return flavor == Flavor::Gaussian ? "gaussian-iterative" : "token-categorical"; }

Flavor parse_flavor(const std::string& name) {
  if (name == "gaussian" || name == "gaussian-iterative") return Flavor::Gaussian;
  if (name == "token" || name == "token-categorical") return Flavor::Token;
  fail(ErrorKind::Config, "unknown backend flavor '" + name + "'");
}

void BackendDescriptor::validate() const {
  if (context_frames < 2) fail(ErrorKind::Config, "backend context window must be >= 2 frames");
  if (native_height < 1 || native_width < 1) fail(ErrorKind::Config, "backend native size must be positive");
  if (flavor == Flavor::Gaussian && sampling_steps < 1) fail(ErrorKind::Config, "sampling_steps must be >= 1");
  if (flavor == Flavor::Token) {
    if (vocabulary_size < 2) fail(ErrorKind::Config, "vocabulary_size must be >= 2");
    if (patch_size < 1 || native_height % patch_size || native_width % patch_size) {
      fail(ErrorKind::Config, "patch_size must divide the native dimensions");
    }
    if (token_frames < 1) fail(ErrorKind::Config, "token_frames must be >= 1");
  }
}

BackendDescriptor BackendDescriptor::gaussian_defaults() {
  BackendDescriptor d;
  d.flavor = Flavor::Gaussian;
  d.context_frames = 80;
  d.native_height = 128;
  d.native_width = 128;
  d.sampling_steps = 256;
  return d;
}

BackendDescriptor BackendDescriptor::token_defaults() {
  BackendDescriptor d;
  d.flavor = Flavor::Token;
  d.context_frames = 11;
  d.native_height = 96;
  d.native_width = 160;
  d.vocabulary_size = 256;
  d.patch_size = 8;
  d.token_frames = 1;
  return d;
}

// ------------------------------------------------------------ schedules

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) fail(ErrorKind::Config, "noise schedule needs at least one step");
  // Endpoints are specified for a 1000-step chain and rescaled so that any
  // step count reaches a comparable terminal noise level.
  const double scale = 1000.0 / steps;
  NoiseSchedule s;
  double bar = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    const double b = std::min(0.999, scale * (beta_start + f * (beta_end - beta_start)));
    s.betas_.push_back(b);
    bar *= 1.0 - b;
    s.alpha_bars_.push_back(bar);
  }
  return s;
}

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

MaskSchedule::MaskSchedule(Mask base, std::vector<int> full_frame_steps, int steps)
    : base_(std::move(base)), full_frame_steps_(std::move(full_frame_steps)), steps_(steps) {
  if (static_cast<int>(full_frame_steps_.size()) != base_.frames()) {
    fail(ErrorKind::Contract, "mask schedule: one full-frame step count per frame required");
  }
  if (steps_ < 1) fail(ErrorKind::Contract, "mask schedule: steps must be >= 1");
}

MaskSchedule MaskSchedule::constant(const Mask& pinned, int steps) {
  return MaskSchedule(pinned, std::vector<int>(pinned.frames(), 0), steps);
}

Mask MaskSchedule::at_step(int step) const {
  Mask m = base_;
  for (int t = 0; t < frames(); ++t) {
    if (!frame_full(step, t)) continue;
    std::fill(m.data().begin() + t * m.frame_size(), m.data().begin() + (t + 1) * m.frame_size(), 1);
  }
  return m;
}

MaskSchedule MaskSchedule::slice(int begin, int end) const {
  return MaskSchedule(slice_frames(base_, begin, end),
                      std::vector<int>(full_frame_steps_.begin() + begin, full_frame_steps_.begin() + end), steps_);
}

MaskSchedule MaskSchedule::crop_columns(int x0, int width) const {
  Mask m(frames(), height(), width);
  for (int t = 0; t < frames(); ++t) {
    for (int y = 0; y < height(); ++y) {
      for (int x = 0; x < width; ++x) m.at(t, y, x) = base_.at(t, y, x0 + x);
    }
  }
  return MaskSchedule(std::move(m), full_frame_steps_, steps_);
}

MaskSchedule MaskSchedule::resized(int height, int width) const {
  return MaskSchedule(resize_mask(base_, height, width), full_frame_steps_, steps_);
}

// ------------------------------------------------------------ contract wrapper

namespace {

Video pad_frames(const Video& v, int frames) {
  if (v.frames() >= frames) return v;
  Video out(frames, v.height(), v.width(), v.channels());
  std::copy(v.data().begin(), v.data().end(), out.data().begin());
  auto last = v.frame(v.frames() - 1);
  for (int t = v.frames(); t < frames; ++t) std::copy(last.begin(), last.end(), out.frame(t).begin());
  return out;
}

Mask pad_frames(const Mask& m, int frames) {
  if (m.frames() >= frames) return m;
  Mask out(frames, m.height(), m.width());
  std::copy(m.data().begin(), m.data().end(), out.data().begin());
  for (int t = m.frames(); t < frames; ++t) {
    std::copy(m.data().end() - m.frame_size(), m.data().end(), out.data().begin() + t * m.frame_size());
  }
  return out;
}

void check_field(const GaussianField& f, const Video& like, const char* who) {
  if (!f.mean.same_shape(like) || !f.variance.same_shape(like)) {
    fail(ErrorKind::Contract, std::string(who) + ": prediction shape does not match the window");
  }
  for (float v : f.variance.data()) {
    if (!(v >= 0.0f) || !std::isfinite(v)) fail(ErrorKind::Contract, std::string(who) + ": invalid variance");
  }
  for (float v : f.mean.data()) {
    if (!std::isfinite(v)) fail(ErrorKind::Contract, std::string(who) + ": non-finite mean");
  }
}

}  // namespace

GaussianField gaussian_predict(const GaussianBackend& backend, const GaussianRequest& request) {
  const auto& d = backend.descriptor();
  const Video& w = request.window;
  if (w.height() != d.native_height || w.width() != d.native_width || w.channels() != 3) {
    fail(ErrorKind::Contract, "window " + std::to_string(w.width()) + "x" + std::to_string(w.height()) +
                                  " does not match backend native size " + std::to_string(d.native_width) + "x" +
                                  std::to_string(d.native_height));
  }
  if (w.frames() > d.context_frames) {
    fail(ErrorKind::Contract, "window of " + std::to_string(w.frames()) + " frames exceeds context of " +
                                  std::to_string(d.context_frames));
  }
  if (!request.state.same_shape(w)) fail(ErrorKind::Contract, "sampler state does not match the window");
  require_same_dims(w, request.pinned, "gaussian_predict");

  if (w.frames() == d.context_frames) {
    GaussianField f = backend.predict(request);
    check_field(f, w, "gaussian_predict");
    return f;
  }

  const int n = w.frames();
  const Video window = pad_frames(w, d.context_frames);
  const Mask pinned = pad_frames(request.pinned, d.context_frames);
  const Video state = pad_frames(request.state, d.context_frames);
  WindowContext ctx = request.context;
  if (!ctx.spans.empty()) {
    while (static_cast<int>(ctx.spans.size()) < d.context_frames) ctx.spans.push_back(ctx.spans.back());
  }
  const GaussianRequest padded{window, pinned, state, request.step, request.timestep, request.schedule, ctx,
                               request.seed};
  GaussianField f = backend.predict(padded);
  check_field(f, window, "gaussian_predict");
  return {slice_frames(f.mean, 0, n), slice_frames(f.variance, 0, n)};
}

// ------------------------------------------------------------ sampling

void sample_gaussian(const GaussianField& field, const CounterRng& rng, Video& out) {
  if (!out.same_shape(field.mean)) out = field.mean;
  const auto& mean = field.mean.data();
  const auto& var = field.variance.data();
  auto& dst = out.data();
  const std::size_t n = mean.size();
  for (std::size_t i = 0; i < n; i += 2) {
    const bool second = i + 1 < n;
    const float v0 = var[i], v1 = second ? var[i + 1] : 0.0f;
    if (v0 == 0.0f && v1 == 0.0f) {
      dst[i] = mean[i];
      if (second) dst[i + 1] = mean[i + 1];
      continue;
    }
    const auto [e0, e1] = rng.normal_pair(i / 2);
    dst[i] = mean[i] + std::sqrt(v0) * static_cast<float>(e0);
    if (second) dst[i + 1] = mean[i + 1] + std::sqrt(v1) * static_cast<float>(e1);
  }
}

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kPinStream = 0x9193;
constexpr std::uint64_t kSampleStream = 0x5a3e;

// Resets pinned samples to the observed content noised to `timestep`.
void apply_pins(Video& state, const Video& observed, const MaskSchedule& schedule, int step, int timestep,
                const NoiseSchedule& noise, const SamplerKey& key) {
  const double ab = noise.alpha_bar(timestep);
  const float a = static_cast<float>(std::sqrt(ab)), b = static_cast<float>(std::sqrt(1.0 - ab));
  const CounterRng rng(key.seed, {static_cast<std::uint64_t>(key.level), static_cast<std::uint64_t>(key.stream),
                                  kPinStream, static_cast<std::uint64_t>(step)});
  const int ch = state.channels();
  const std::size_t plane = static_cast<std::size_t>(state.height()) * state.width();
  for (int t = 0; t < state.frames(); ++t) {
    const bool full = schedule.frame_full(step, t);
    const auto* base = schedule.base().data().data() + t * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      if (!full && !base[p]) continue;
      const std::size_t i0 = (t * plane + p) * ch;
      for (int c = 0; c < ch; ++c) {
        const std::size_t i = i0 + c;
        if (timestep == 0) {
          state.data()[i] = observed.data()[i];
        } else {
          const auto e = rng.normal_pair(i);
          state.data()[i] = a * observed.data()[i] + b * static_cast<float>(e.first);
        }
      }
    }
  }
}

}  // namespace

Video ddpm_sample_loop(const Video& observed, const MaskSchedule& schedule, const NoiseSchedule& noise,
                       const FieldPredictor& predict, const SamplerKey& key, bool state_independent) {
  const int steps = noise.steps();
  if (schedule.steps() != steps) {
    fail(ErrorKind::Contract, "mask schedule has " + std::to_string(schedule.steps()) + " steps, sampler has " +
                                  std::to_string(steps));
  }
  if (schedule.frames() != observed.frames() || schedule.height() != observed.height() ||
      schedule.width() != observed.width()) {
    fail(ErrorKind::Contract, "mask schedule does not match the sampled volume");
  }

  if (state_independent) {
    GaussianField field = predict(observed, steps - 1, 1);
    if (!field.mean.same_shape(observed)) fail(ErrorKind::Contract, "predicted field does not match the sampler state");
    Video out = std::move(field.mean);
    apply_pins(out, observed, schedule, steps - 1, 0, noise, key);
    for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
    out.frame_rate = observed.frame_rate;
    out.color_space = observed.color_space;
    out.bit_depth = observed.bit_depth;
    return out;
  }

  Video state(observed.frames(), observed.height(), observed.width(), observed.channels());
  {
    const CounterRng rng(key.seed, {static_cast<std::uint64_t>(key.level), static_cast<std::uint64_t>(key.stream),
                                    kInitStream});
    auto& d = state.data();
    for (std::size_t i = 0; i < d.size(); i += 2) {
      const auto [e0, e1] = rng.normal_pair(i / 2);
      d[i] = static_cast<float>(e0);
      if (i + 1 < d.size()) d[i + 1] = static_cast<float>(e1);
    }
  }
  apply_pins(state, observed, schedule, 0, steps, noise, key);

  Video next;
  for (int s = 0; s < steps; ++s) {
    const int t = steps - s;
    GaussianField field = predict(state, s, t);
    if (!field.mean.same_shape(state) || !field.variance.same_shape(state)) {
      fail(ErrorKind::Contract, "predicted field does not match the sampler state");
    }
    if (t > 1) {
      const CounterRng rng(key.seed, {static_cast<std::uint64_t>(key.level), static_cast<std::uint64_t>(key.stream),
                                      kSampleStream, static_cast<std::uint64_t>(s)});
      sample_gaussian(field, rng, next);
    } else {
      next = std::move(field.mean);
    }
    apply_pins(next, observed, schedule, s, t - 1, noise, key);
    std::swap(state, next);
  }
  for (float& v : state.data()) v = std::clamp(v, 0.0f, 1.0f);
  state.frame_rate = observed.frame_rate;
  state.color_space = observed.color_space;
  state.bit_depth = observed.bit_depth;
  return state;
}

Video ddpm_sample(const GaussianBackend& backend, const Video& window, const MaskSchedule& schedule,
                  std::uint64_t seed, const WindowContext& context) {
  const NoiseSchedule noise = NoiseSchedule::linear(backend.descriptor().sampling_steps);
  FieldPredictor predict = [&](const Video& state, int step, int timestep) {
    const Mask pins = schedule.at_step(step);
    const GaussianRequest req{window, pins, state, step, timestep, noise, context, seed};
    return gaussian_predict(backend, req);
  };
  return ddpm_sample_loop(window, schedule, noise, predict, {seed, context.level, 0},
                          backend.descriptor().state_independent);
}

// ------------------------------------------------------------ interpolation

Video interpolation_fill(const Video& window, const Mask& valid, const std::vector<double>& times_in) {
  require_same_dims(window, valid, "interpolation_fill");
  const int n = window.frames(), h = window.height(), w = window.width(), ch = window.channels();
  std::vector<double> times = times_in;
  if (times.empty()) {
    for (int t = 0; t < n; ++t) times.push_back(t);
  }
  Video out = window;
  Mask filled(n, h, w);

  std::vector<int> prev(n), next(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int last = -1;
      for (int t = 0; t < n; ++t) {
        if (valid.at(t, y, x)) last = t;
        prev[t] = last;
      }
      last = -1;
      for (int t = n - 1; t >= 0; --t) {
        if (valid.at(t, y, x)) last = t;
        next[t] = last;
      }
      for (int t = 0; t < n; ++t) {
        const int a = prev[t], b = next[t];
        if (a < 0 && b < 0) continue;
        filled.at(t, y, x) = 1;
        if (a == t) continue;  // observed sample stays as is
        for (int c = 0; c < ch; ++c) {
          float v;
          if (a < 0) {
            v = window.at(b, y, x, c);
          } else if (b < 0) {
            v = window.at(a, y, x, c);
          } else {
            const float va = window.at(a, y, x, c), vb = window.at(b, y, x, c);
            const float s = static_cast<float>((times[t] - times[a]) / (times[b] - times[a]));
            v = va + s * (vb - va);
          }
          out.at(t, y, x, c) = v;
        }
      }
    }
  }

  // Spatial fill for pixels never observed in the window.
  double global_sum[4] = {0, 0, 0, 0};
  std::size_t global_count = 0;
  for (int t = 0; t < n; ++t) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!filled.at(t, y, x)) continue;
        ++global_count;
        for (int c = 0; c < ch && c < 4; ++c) global_sum[c] += out.at(t, y, x, c);
      }
    }
  }
  for (int t = 0; t < n; ++t) {
    std::vector<std::uint8_t> row_done(h, 0);
    for (int y = 0; y < h; ++y) {
      std::vector<int> xs;
      for (int x = 0; x < w; ++x) {
        if (filled.at(t, y, x)) xs.push_back(x);
      }
      if (xs.empty()) continue;
      row_done[y] = 1;
      if (static_cast<int>(xs.size()) == w) continue;
      std::size_t k = 0;
      for (int x = 0; x < w; ++x) {
        while (k < xs.size() && xs[k] < x) ++k;
        if (k < xs.size() && xs[k] == x) continue;
        const int right = k < xs.size() ? xs[k] : -1;
        const int left = k > 0 ? xs[k - 1] : -1;
        for (int c = 0; c < ch; ++c) {
          float v;
          if (left < 0) {
            v = out.at(t, y, right, c);
          } else if (right < 0) {
            v = out.at(t, y, left, c);
          } else {
            const float s = static_cast<float>(x - left) / static_cast<float>(right - left);
            v = out.at(t, y, left, c) + s * (out.at(t, y, right, c) - out.at(t, y, left, c));
          }
          out.at(t, y, x, c) = v;
        }
      }
    }
    // Rows with nothing observed copy the nearest completed row.
    for (int y = 0; y < h; ++y) {
      if (row_done[y]) continue;
      int best = -1;
      for (int d = 1; d < h && best < 0; ++d) {
        if (y - d >= 0 && row_done[y - d]) best = y - d;
        else if (y + d < h && row_done[y + d]) best = y + d;
      }
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < ch; ++c) {
          out.at(t, y, x, c) = best >= 0 ? out.at(t, best, x, c)
                                         : (global_count ? static_cast<float>(global_sum[std::min(c, 3)] / global_count)
                                                         : 0.5f);
        }
      }
    }
  }
  return out;
}

Video linear_interpolation_baseline(const Video& x0, const Mask& m0) {
  Video filled = interpolation_fill(x0, m0);
  return composite(x0, m0, filled);
}

// ------------------------------------------------------------ reference backends

OracleBackend::OracleBackend(BackendDescriptor descriptor, Video ground_truth)
    : descriptor_(std::move(descriptor)), ground_truth_(std::move(ground_truth)) {
  descriptor_.flavor = Flavor::Gaussian;
  descriptor_.state_independent = true;
  descriptor_.validate();
}

const Video& OracleBackend::working_frame_cache(const FrameSpan& span, int height, int width) const {
  std::lock_guard lock(cache_mutex_);
  const auto key = std::make_tuple(span.first, span.last, height, width);
  auto it = cache_.find(key);
  if (it != cache_.end()) return *it->second;
  if (span.first < 0 || span.last > ground_truth_.frames()) {
    fail(ErrorKind::Contract, "oracle backend: span outside the ground-truth video");
  }
  const Video avg = box_filter_spans(ground_truth_, nullptr, {span});
  auto frame = std::make_unique<Video>(resize_video(avg, height, width));
  return *cache_.emplace(key, std::move(frame)).first->second;
}

GaussianField OracleBackend::predict(const GaussianRequest& request) const {
  const WindowContext& ctx = request.context;
  const Video& w = request.window;
  if (static_cast<int>(ctx.spans.size()) != w.frames()) {
    fail(ErrorKind::Contract, "oracle backend needs one level-0 span per window frame");
  }
  const int wh = ctx.working_height > 0 ? ctx.working_height : ground_truth_.height();
  const int ww = ctx.working_width > 0 ? ctx.working_width : ground_truth_.width();
  GaussianField f{Video(w.frames(), w.height(), w.width(), 3), Video(w.frames(), w.height(), w.width(), 3, 0.0f)};
  for (int t = 0; t < w.frames(); ++t) {
    const Video& gt = working_frame_cache(ctx.spans[t], wh, ww);
    if (ctx.x_offset + w.width() > gt.width() || w.height() > gt.height()) {
      fail(ErrorKind::Contract, "oracle backend: window outside the working canvas");
    }
    for (int y = 0; y < w.height(); ++y) {
      const float* src = &gt.data()[gt.index(0, y, ctx.x_offset)];
      std::copy(src, src + w.width() * 3, &f.mean.data()[f.mean.index(t, y, 0)]);
    }
  }
  return f;
}

InterpolationBackend::InterpolationBackend(BackendDescriptor descriptor, float variance)
    : descriptor_(std::move(descriptor)), variance_(variance) {
  descriptor_.flavor = Flavor::Gaussian;
  descriptor_.state_independent = true;
  descriptor_.validate();
  if (variance_ < 0.0f) fail(ErrorKind::Config, "interpolation backend variance must be >= 0");
}

GaussianField InterpolationBackend::predict(const GaussianRequest& request) const {
  const auto times = span_times(request.context.spans);
  GaussianField f;
  f.mean = interpolation_fill(request.window, request.pinned,
                              static_cast<int>(times.size()) == request.window.frames() ? times : std::vector<double>{});
  f.variance = Video(f.mean.frames(), f.mean.height(), f.mean.width(), 3, variance_);
  return f;
}

DiffusionMockBackend::DiffusionMockBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.flavor = Flavor::Gaussian;
  descriptor_.validate();
}

GaussianField DiffusionMockBackend::predict(const GaussianRequest& request) const {
  const auto times = span_times(request.context.spans);
  const Video target = interpolation_fill(
      request.window, request.pinned,
      static_cast<int>(times.size()) == request.window.frames() ? times : std::vector<double>{});
  const NoiseSchedule& s = request.schedule;
  const int t = request.timestep;
  const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1);
  const float c0 = static_cast<float>(std::sqrt(ab_prev) * s.beta(t) / (1.0 - ab));
  const float c1 = static_cast<float>(std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab));
  GaussianField f{target, Video(target.frames(), target.height(), target.width(), 3,
                                static_cast<float>(s.posterior_variance(t)))};
  auto& mean = f.mean.data();
  const auto& state = request.state.data();
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = c0 * target.data()[i] + c1 * state[i];
  return f;
}

}  // namespace panovid

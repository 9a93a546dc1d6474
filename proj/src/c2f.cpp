#include "panovid/c2f.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "panovid/error.hpp"
#include "panovid/image_ops.hpp"
#include "panovid/video_io.hpp"

namespace panovid {

UpsampleMode parse_upsample_mode(const std::string& name) {
  if (name == "blend") return UpsampleMode::Blend;
  if (name == "repeat") return UpsampleMode::Repeat;
  fail(ErrorKind::Config, "unknown upsample mode '" + name + "' (expected blend|repeat)");
}

ScheduleMode parse_schedule_mode(const std::string& name) {
  if (name == "standard") return ScheduleMode::Standard;
  if (name == "fast-motion") return ScheduleMode::FastMotion;
  fail(ErrorKind::Config, "unknown mask schedule '" + name + "' (expected standard|fast-motion)");
}

const char* to_string(UpsampleMode mode) { return mode == UpsampleMode::Blend ? "blend" : "repeat"; }
const char* to_string(ScheduleMode mode) { return mode == ScheduleMode::Standard ? "standard" : "fast-motion"; }

Video upsample_temporal(const Video& coarse, const std::vector<double>& coarse_times,
                        const std::vector<double>& fine_times, UpsampleMode mode) {
  if (static_cast<int>(coarse_times.size()) != coarse.frames()) {
    fail(ErrorKind::Dimension, "one timestamp per coarse frame required");
  }
  const int n = static_cast<int>(fine_times.size());
  Video out(n, coarse.height(), coarse.width(), coarse.channels());
  out.frame_rate = coarse.frame_rate;
  out.color_space = coarse.color_space;
  out.bit_depth = coarse.bit_depth;
  const int last = coarse.frames() - 1;
  auto copy_frame = [&](int src, int dst) {
    auto f = coarse.frame(src);
    std::copy(f.begin(), f.end(), out.frame(dst).begin());
  };
  for (int t = 0; t < n; ++t) {
    const double tau = fine_times[t];
    const auto it = std::lower_bound(coarse_times.begin(), coarse_times.end(), tau);
    const int hi = static_cast<int>(it - coarse_times.begin());
    if (hi <= 0) {
      copy_frame(0, t);
      continue;
    }
    if (hi > last) {
      copy_frame(last, t);
      continue;
    }
    if (coarse_times[hi] == tau) {
      copy_frame(hi, t);
      continue;
    }
    const int lo = hi - 1;
    const double s = (tau - coarse_times[lo]) / (coarse_times[hi] - coarse_times[lo]);
    if (mode == UpsampleMode::Repeat) {
      copy_frame(s <= 0.5 ? lo : hi, t);
      continue;
    }
    const float w = static_cast<float>(s);
    auto a = coarse.frame(lo), b = coarse.frame(hi);
    auto dst = out.frame(t);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a[i] + w * (b[i] - a[i]);
  }
  return out;
}

std::vector<int> coarse_coincident_frames(const std::vector<double>& coarse_times,
                                          const std::vector<double>& fine_times) {
  std::vector<int> out;
  for (double c : coarse_times) {
    int best = 0;
    for (int t = 1; t < static_cast<int>(fine_times.size()); ++t) {
      if (std::abs(fine_times[t] - c) < std::abs(fine_times[best] - c)) best = t;
    }
    if (out.empty() || out.back() != best) out.push_back(best);
  }
  return out;
}

Video merge_input(const Video& x, const Mask& m, const Video& up, const AlignOptions* align, int threads) {
  if (!x.same_shape(up)) fail(ErrorKind::Dimension, "merge: input and upsampled video differ in shape");
  require_same_dims(x, m, "merge");
  if (!align) return composite(x, m, up);
  const Aligned a = align_to(x, m, up, *align, threads);
  return composite(a.video, m, up);
}

MaskSchedule build_mask_schedule(const Mask& m, const std::vector<int>& coincident, int steps, ScheduleMode mode) {
  if (steps < 1) fail(ErrorKind::Config, "mask schedule needs at least one step");
  const int full = mode == ScheduleMode::Standard ? steps : steps / 8;
  std::vector<int> full_steps(m.frames(), 0);
  for (int f : coincident) {
    if (f < 0 || f >= m.frames()) fail(ErrorKind::Dimension, "coincident frame index out of range");
    full_steps[f] = full;
  }
  return MaskSchedule(m, std::move(full_steps), steps);
}

Video resynthesize(const Video& merged, const Mask& m, const std::vector<FrameSpan>& spans, int level,
                   const Backend& backend, const MaskSchedule& schedule, const CompletionOptions& options,
                   std::uint64_t seed) {
  const LevelInput in{merged, m, spans, level};
  if (backend.flavor() == Flavor::Token) return sample_level(in, MaskSchedule::constant(m, 1), backend, options, seed);
  return sample_level(in, schedule, backend, options, seed);
}

namespace {

void checkpoint(const CoarseToFineOptions& o, int level, const char* name, const Video& v) {
  if (!o.checkpoint_dir) return;
  save_video(v, *o.checkpoint_dir / ("level_" + std::to_string(level)) / name, VideoFormat::PngDir);
}

}  // namespace

CoarseToFineResult run_coarse_to_fine(const TemporalPyramid& pyramid, const Backend& backend,
                                      const CoarseToFineOptions& options, std::uint64_t seed, bool keep_levels) {
  if (pyramid.levels.empty()) fail(ErrorKind::Config, "empty pyramid");
  const BackendDescriptor& d = backend.descriptor();
  const PyramidLevel& base = pyramid.levels.front();
  {
    const WorkingSize ws = working_size(d, base.video.height(), base.video.width());
    backend.prepare(resize_video(base.video, ws.height, ws.width), resize_mask(base.mask, ws.height, ws.width));
  }

  CoarseToFineResult result;
  if (keep_levels) result.levels.resize(pyramid.levels.size());
  const int top = pyramid.coarsest();
  const PyramidLevel& coarse = pyramid.levels[top];
  spdlog::info("base completion at level {} ({} frames)", top, coarse.frames());
  const LevelInput in{coarse.video, coarse.mask, coarse.spans, top};
  Video y = d.causal ? complete_base_causal(in, backend, options.completion, seed).video
                     : complete_base(in, backend, options.completion, seed);
  checkpoint(options, top, "out", y);
  if (keep_levels) result.levels[top].out = y;

  const int steps = d.flavor == Flavor::Gaussian ? d.sampling_steps : 1;
  for (int k = top - 1; k >= 0; --k) {
    const PyramidLevel& lv = pyramid.levels[k];
    const auto coarse_times = level_frame_times(pyramid, k + 1);
    const auto fine_times = level_frame_times(pyramid, k);
    spdlog::info("level {}: upsample {} -> {} frames, resynthesize", k, coarse_times.size(), fine_times.size());
    Video up = upsample_temporal(y, coarse_times, fine_times, options.upsample);
    Video merge = merge_input(lv.video, lv.mask, up, options.align ? &options.align_options : nullptr,
                              options.completion.threads);
    const MaskSchedule schedule =
        build_mask_schedule(lv.mask, coarse_coincident_frames(coarse_times, fine_times), steps, options.schedule);
    y = resynthesize(merge, lv.mask, lv.spans, k, backend, schedule, options.completion, seed);
    checkpoint(options, k, "up", up);
    checkpoint(options, k, "merge", merge);
    checkpoint(options, k, "out", y);
    if (keep_levels) result.levels[k] = {std::move(up), std::move(merge), y};
  }
  result.output = composite(base.video, base.mask, y);
  result.output.frame_rate = base.video.frame_rate;
  result.output.color_space = base.video.color_space;
  result.output.bit_depth = base.video.bit_depth;
  return result;
}

}  // namespace panovid

#include "panovid/complete.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "panovid/error.hpp"
#include "panovid/image_ops.hpp"
#include "panovid/parallel.hpp"

namespace panovid {

WorkingSize working_size(const BackendDescriptor& d, int canvas_height, int canvas_width) {
  WorkingSize s;
  s.height = d.native_height;
  const double exact = static_cast<double>(canvas_width) * d.native_height / canvas_height;
  s.width = static_cast<int>(std::lround(exact));
  if (d.flavor == Flavor::Token) {
    s.width = std::max(d.patch_size, static_cast<int>(std::lround(exact / d.patch_size)) * d.patch_size);
  }
  if (s.width < d.native_width) {
    fail(ErrorKind::Config, "canvas " + std::to_string(canvas_width) + "x" + std::to_string(canvas_height) +
                                " is narrower than one backend window after scaling to height " +
                                std::to_string(d.native_height));
  }
  return s;
}

Mask derive_token_mask(const Mask& m, int patch_size, int token_frames) {
  if (patch_size < 1 || m.height() % patch_size || m.width() % patch_size) {
    fail(ErrorKind::Dimension, "mask size is not a multiple of the patch size");
  }
  const int tf = (m.frames() + token_frames - 1) / token_frames;
  Mask out(tf, m.height() / patch_size, m.width() / patch_size, 1);
  for (int t = 0; t < m.frames(); ++t) {
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (!m.at(t, y, x)) out.at(t / token_frames, y / patch_size, x / patch_size) = 0;
      }
    }
  }
  return out;
}

Mask forward_assignment(const Mask& m) {
  Mask out(m.frames(), m.height(), m.width());
  const std::size_t plane = m.frame_size();
  for (std::size_t p = 0; p < plane; ++p) {
    std::uint8_t seen = 0;
    for (int t = 0; t < m.frames(); ++t) {
      seen |= m.data()[t * plane + p];
      out.data()[t * plane + p] = seen;
    }
  }
  return out;
}

namespace {

Video crop(const Video& v, const FrameRange& r, int x0, int width) {
  Video out(r.size(), v.height(), width, v.channels());
  for (int t = 0; t < r.size(); ++t) {
    for (int y = 0; y < v.height(); ++y) {
      const float* src = &v.data()[v.index(r.begin + t, y, x0)];
      std::copy(src, src + width * v.channels(), &out.data()[out.index(t, y, 0)]);
    }
  }
  return out;
}

Mask crop(const Mask& m, const FrameRange& r, int x0, int width) {
  Mask out(r.size(), m.height(), width);
  for (int t = 0; t < r.size(); ++t) {
    for (int y = 0; y < m.height(); ++y) {
      const auto* src = &m.data()[m.index(r.begin + t, y, x0)];
      std::copy(src, src + width, &out.data()[out.index(t, y, 0)]);
    }
  }
  return out;
}

TokenGrid crop(const TokenGrid& g, const FrameRange& r, int x0, int width) {
  TokenGrid out(r.size(), g.height, width);
  for (int t = 0; t < r.size(); ++t) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < width; ++x) out.at(t, y, x) = g.at(r.begin + t, y, x0 + x);
    }
  }
  return out;
}

std::vector<FrameSpan> slice_spans(const std::vector<FrameSpan>& spans, const FrameRange& r) {
  if (spans.empty()) return {};
  return {spans.begin() + r.begin, spans.begin() + r.end};
}

int batch_size(const BackendDescriptor& d, int threads) {
  int b = std::max(1, threads);
  if (d.max_concurrency > 0) b = std::min(b, d.max_concurrency);
  return b;
}

struct Job {
  int range;
  int window;
};

Video sample_gaussian_level(const LevelInput& in, const Video& work, const MaskSchedule& sched,
                            const WindowLayout& layout, const GaussianBackend& backend,
                            const CompletionOptions& options, std::uint64_t seed) {
  const auto& d = backend.descriptor();
  const int n = work.frames();
  const auto ranges = temporal_windows(n, d.context_frames, options.temporal_overlap);
  const auto tw = range_ramps(ranges, n, options.weights);
  std::vector<Job> jobs;
  for (int j = 0; j < static_cast<int>(ranges.size()); ++j) {
    for (int i = 0; i < layout.windows(); ++i) jobs.push_back({j, i});
  }
  const NoiseSchedule noise = NoiseSchedule::linear(d.sampling_steps);
  const int batch = batch_size(d, options.threads);

  FieldPredictor predict = [&](const Video& state, int step, int timestep) {
    GaussianAccumulator acc(n, work.height(), work.width(), 3);
    const Mask pins = sched.at_step(step);
    for (std::size_t start = 0; start < jobs.size(); start += batch) {
      const std::size_t count = std::min<std::size_t>(batch, jobs.size() - start);
      std::vector<GaussianField> results(count);
      parallel_for(count, options.threads, [&](std::size_t b) {
        const Job& job = jobs[start + b];
        const FrameRange& r = ranges[job.range];
        const int x0 = layout.offsets[job.window];
        const Video window = crop(work, r, x0, layout.native_width);
        const Mask pinned = crop(pins, r, x0, layout.native_width);
        const Video st = crop(state, r, x0, layout.native_width);
        WindowContext ctx{in.level, slice_spans(in.spans, r), x0, work.width(), work.height(), in.time_reversed};
        const GaussianRequest req{window, pinned, st, step, timestep, noise, std::move(ctx), seed};
        results[b] = gaussian_predict(backend, req);
      });
      // Fixed reduction order keeps the sum independent of the thread count.
      for (std::size_t b = 0; b < count; ++b) {
        const Job& job = jobs[start + b];
        acc.add(results[b].mean, &results[b].variance, layout.ramps[job.window], layout.offsets[job.window],
                ranges[job.range].begin, tw[job.range]);
      }
    }
    return acc.finish();
  };
  return ddpm_sample_loop(work, sched, noise, predict, {seed, in.level, 0}, d.state_independent);
}

Video sample_token_level(const LevelInput& in, const Video& work, const Mask& valid, const WindowLayout& layout,
                         const TokenBackend& backend, const CompletionOptions& options, std::uint64_t seed) {
  const auto& d = backend.descriptor();
  const int p = d.patch_size, g = d.token_frames;
  const int n = work.frames();
  const Mask known0 = derive_token_mask(valid, p, g);
  const int nt = known0.frames(), th = known0.height(), twid = known0.width();
  const int ctx_tok = (d.context_frames + g - 1) / g;
  const auto ranges = temporal_windows(nt, ctx_tok, options.temporal_overlap < 0 ? -1 : options.temporal_overlap / g);
  const auto weights = token_weights(layout, p);
  const int wtok = layout.native_width / p;
  const int batch = batch_size(d, options.threads);
  auto pixel_range = [&](const FrameRange& r) { return FrameRange{r.begin * g, std::min(n, r.end * g)}; };

  // Encode: each token position comes from its highest-weight window.
  TokenGrid canvas(nt, th, twid);
  {
    std::vector<float> best(canvas.size(), -1.0f);
    for (std::size_t j = 0; j < ranges.size(); ++j) {
      const FrameRange pr = pixel_range(ranges[j]);
      std::vector<TokenGrid> encoded(layout.windows());
      for (int start = 0; start < layout.windows(); start += batch) {
        const int count = std::min(batch, layout.windows() - start);
        parallel_for(count, options.threads, [&](std::size_t b) {
          const int i = start + static_cast<int>(b);
          encoded[i] = token_encode(backend, crop(work, pr, layout.offsets[i], layout.native_width));
        });
      }
      for (int i = 0; i < layout.windows(); ++i) {
        const int x0 = layout.offsets[i] / p;
        for (int f = 0; f < encoded[i].frames; ++f) {
          for (int y = 0; y < th; ++y) {
            for (int x = 0; x < wtok; ++x) {
              const std::size_t idx = canvas.index(ranges[j].begin + f, y, x0 + x);
              if (weights[i][x] > best[idx]) {
                best[idx] = weights[i][x];
                canvas.ids[idx] = encoded[i].at(f, y, x);
              }
            }
          }
        }
      }
    }
  }

  // Sample each temporal range in order; overlaps with the previous range are
  // pinned to its committed tokens.
  int committed_until = 0;
  for (std::size_t j = 0; j < ranges.size(); ++j) {
    const FrameRange r = ranges[j];
    const FrameRange whole{r.begin, r.end};
    TokenGrid slab = crop(canvas, whole, 0, twid);
    Mask known = crop(known0, whole, 0, twid);
    for (int f = r.begin; f < std::min(r.end, committed_until); ++f) {
      std::fill(known.data().begin() + (f - r.begin) * known.frame_size(),
                known.data().begin() + (f - r.begin + 1) * known.frame_size(), 1);
    }
    const std::vector<FrameSpan> spans = slice_spans(in.spans, pixel_range(r));
    CategoricalPredictor predict = [&](const TokenGrid& tokens, const Mask& k) {
      std::vector<CategoricalField> fields(layout.windows());
      for (int start = 0; start < layout.windows(); start += batch) {
        const int count = std::min(batch, layout.windows() - start);
        parallel_for(count, options.threads, [&](std::size_t b) {
          const int i = start + static_cast<int>(b);
          const FrameRange all{0, tokens.frames};
          WindowContext ctx{in.level, spans, layout.offsets[i], work.width(), work.height(), in.time_reversed};
          fields[i] = token_predict(backend, crop(tokens, all, layout.offsets[i] / p, wtok),
                                    crop(k, all, layout.offsets[i] / p, wtok), ctx);
        });
      }
      return aggregate_categorical(fields, layout, p);
    };
    const TokenGrid done =
        iterative_token_sample(slab, known, options.token_iterations, predict, {seed, in.level, static_cast<int>(j)});
    for (int f = 0; f < done.frames; ++f) {
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < twid; ++x) canvas.at(r.begin + f, y, x) = done.at(f, y, x);
      }
    }
    committed_until = r.end;
  }

  // Decode per window; frames come from the first range holding them.
  GaussianAccumulator out(n, work.height(), work.width(), 3);
  std::vector<int> owner(nt, -1);
  for (int j = static_cast<int>(ranges.size()) - 1; j >= 0; --j) {
    for (int f = ranges[j].begin; f < ranges[j].end; ++f) owner[f] = j;
  }
  for (std::size_t j = 0; j < ranges.size(); ++j) {
    std::vector<Video> decoded(layout.windows());
    for (int start = 0; start < layout.windows(); start += batch) {
      const int count = std::min(batch, layout.windows() - start);
      parallel_for(count, options.threads, [&](std::size_t b) {
        const int i = start + static_cast<int>(b);
        decoded[i] = token_decode(backend, crop(canvas, ranges[j], layout.offsets[i] / p, wtok));
      });
    }
    // Frames owned by this range (the earliest covering one).
    const FrameRange pr = pixel_range(ranges[j]);
    std::vector<double> frame_ramps(pr.size(), 0.0);
    bool any = false;
    for (int t = pr.begin; t < pr.end; ++t) {
      if (owner[t / g] == static_cast<int>(j)) frame_ramps[t - pr.begin] = 1.0, any = true;
    }
    if (!any) continue;
    for (int i = 0; i < layout.windows(); ++i) {
      const Video& v = decoded[i];
      const Video part = v.frames() == pr.size() ? v : crop(v, FrameRange{0, pr.size()}, 0, v.width());
      out.add(part, nullptr, layout.ramps[i], layout.offsets[i], pr.begin, frame_ramps);
    }
  }
  return out.finish().mean;
}

}  // namespace

Video sample_level(const LevelInput& in, const MaskSchedule& schedule, const Backend& backend,
                   const CompletionOptions& options, std::uint64_t seed) {
  require_same_dims(in.video, in.mask, "sample_level");
  if (schedule.frames() != in.video.frames() || schedule.height() != in.video.height() ||
      schedule.width() != in.video.width()) {
    fail(ErrorKind::Dimension, "mask schedule does not match the level video");
  }
  if (!in.spans.empty() && static_cast<int>(in.spans.size()) != in.video.frames()) {
    fail(ErrorKind::Dimension, "one span per level frame required");
  }
  const BackendDescriptor& d = backend.descriptor();
  const WorkingSize ws = working_size(d, in.video.height(), in.video.width());
  const Video work = resize_video(in.video, ws.height, ws.width);
  const MaskSchedule sched = schedule.resized(ws.height, ws.width);
  const WindowLayout layout = make_layout(ws.width, d.native_width, options.spatial_stride, options.weights);
  spdlog::debug("level {}: {} frames at {}x{}, {} spatial windows", in.level, work.frames(), ws.width, ws.height,
                layout.windows());

  Video result = backend.gaussian
                     ? sample_gaussian_level(in, work, sched, layout, *backend.gaussian, options, seed)
                     : sample_token_level(in, work, sched.final_mask(), layout, *backend.token, options, seed);
  Video up = resize_video(result, in.video.height(), in.video.width());
  Video out = composite(in.video, schedule.final_mask(), up);
  out.frame_rate = in.video.frame_rate;
  out.color_space = in.video.color_space;
  out.bit_depth = in.video.bit_depth;
  return out;
}

Video complete_base(const LevelInput& in, const Backend& backend, const CompletionOptions& options,
                    std::uint64_t seed) {
  const int steps = backend.flavor() == Flavor::Gaussian ? backend.descriptor().sampling_steps : 1;
  return sample_level(in, MaskSchedule::constant(in.mask, steps), backend, options, seed);
}

CausalCompletion complete_base_causal(const LevelInput& in, const Backend& backend, const CompletionOptions& options,
                                      std::uint64_t seed) {
  if (!backend.descriptor().causal) fail(ErrorKind::Config, "forward/backward completion needs a causal backend");
  const Video fwd = complete_base(in, backend, options, seed);

  const Video rv = reverse_frames(in.video);
  const Mask rm = reverse_frames(in.mask);
  std::vector<FrameSpan> rspans(in.spans.rbegin(), in.spans.rend());
  const LevelInput reversed{rv, rm, std::move(rspans), in.level, !in.time_reversed};
  const Video bwd = reverse_frames(complete_base(reversed, backend, options, seed));

  CausalCompletion out;
  out.forward = forward_assignment(in.mask);
  out.video = composite(fwd, out.forward, bwd);
  return out;
}

}  // namespace panovid

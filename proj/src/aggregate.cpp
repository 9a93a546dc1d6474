#include "panovid/aggregate.hpp"

#include <algorithm>

#include "panovid/error.hpp"

namespace panovid {

WeightMode parse_weight_mode(const std::string& name) {
  if (name == "tent") return WeightMode::Tent;
  if (name == "uniform") return WeightMode::Uniform;
  fail(ErrorKind::Config, "unknown aggregation weights '" + name + "' (expected tent|uniform)");
}

const char* to_string(WeightMode mode) { return mode == WeightMode::Tent ? "tent" : "uniform"; }

std::vector<std::vector<double>> interval_ramps(const std::vector<int>& starts, int length, int domain,
                                                WeightMode mode) {
  std::vector<std::vector<double>> raw(starts.size(), std::vector<double>(length, 1.0));
  std::vector<double> total(domain, 0.0);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const int a = starts[i];
    const bool left_open = a > 0, right_open = a + length < domain;
    for (int k = 0; k < length; ++k) {
      if (mode == WeightMode::Tent && (left_open || right_open)) {
        double r = 1e30;
        if (left_open) r = std::min(r, k + 0.5);
        if (right_open) r = std::min(r, length - k - 0.5);
        raw[i][k] = r;
      }
      total[a + k] += raw[i][k];
    }
  }
  for (int x = 0; x < domain; ++x) {
    if (total[x] <= 0.0) fail(ErrorKind::Layout, "position " + std::to_string(x) + " is not covered by any window");
  }
  return raw;
}

std::vector<std::vector<float>> interval_weights(const std::vector<int>& starts, int length, int domain,
                                                 WeightMode mode) {
  const auto raw = interval_ramps(starts, length, domain, mode);
  std::vector<double> total(domain, 0.0);
  for (std::size_t i = 0; i < starts.size(); ++i)
    for (int k = 0; k < length; ++k) total[starts[i] + k] += raw[i][k];
  std::vector<std::vector<float>> out(starts.size(), std::vector<float>(length));
  for (std::size_t i = 0; i < starts.size(); ++i) {
    for (int k = 0; k < length; ++k) out[i][k] = static_cast<float>(raw[i][k] / total[starts[i] + k]);
  }
  return out;
}

WindowLayout make_layout(int canvas_width, int native_width, int stride, WeightMode mode) {
  if (native_width < 1 || native_width > canvas_width) {
    fail(ErrorKind::Layout, "window width " + std::to_string(native_width) + " does not fit canvas width " +
                                std::to_string(canvas_width));
  }
  if (stride < 1 || stride > native_width) {
    fail(ErrorKind::Layout, "stride " + std::to_string(stride) + " leaves gaps between windows of width " +
                                std::to_string(native_width));
  }
  WindowLayout l;
  l.canvas_width = canvas_width;
  l.native_width = native_width;
  l.stride = stride;
  l.mode = mode;
  for (int x = 0; x + native_width < canvas_width; x += stride) l.offsets.push_back(x);
  l.offsets.push_back(canvas_width - native_width);
  l.weights = interval_weights(l.offsets, native_width, canvas_width, mode);
  l.ramps = interval_ramps(l.offsets, native_width, canvas_width, mode);
  return l;
}

std::vector<std::vector<float>> token_weights(const WindowLayout& layout, int patch_size) {
  std::vector<std::vector<float>> out;
  for (int i = 0; i < layout.windows(); ++i) {
    std::vector<float> w(layout.native_width / patch_size, 0.0f);
    for (int k = 0; k < static_cast<int>(w.size()); ++k) {
      double s = 0.0;
      for (int x = 0; x < patch_size; ++x) s += layout.weights[i][k * patch_size + x];
      w[k] = static_cast<float>(s / patch_size);
    }
    out.push_back(std::move(w));
  }
  return out;
}

GaussianAccumulator::GaussianAccumulator(int frames, int height, int width, int channels)
    : frames_(frames), height_(height), width_(width), channels_(channels) {
  reset();
}

void GaussianAccumulator::reset() {
  const std::size_t n = static_cast<std::size_t>(frames_) * height_ * width_ * channels_;
  mean_.assign(n, 0.0);
  var_.assign(n, 0.0);
  weight_.assign(static_cast<std::size_t>(frames_) * width_, 0.0);
}

void GaussianAccumulator::add(const Video& mean, const Video* variance, const std::vector<double>& column_ramps,
                              int x_offset, int frame_offset, const std::vector<double>& frame_ramps) {
  if (mean.channels() != channels_ || mean.height() != height_ || x_offset < 0 || frame_offset < 0 ||
      x_offset + mean.width() > width_ || frame_offset + mean.frames() > frames_ ||
      static_cast<int>(column_ramps.size()) != mean.width() ||
      (!frame_ramps.empty() && static_cast<int>(frame_ramps.size()) != mean.frames())) {
    fail(ErrorKind::Layout, "window field does not fit the accumulator");
  }
  const int ch = channels_;
  for (int t = 0; t < mean.frames(); ++t) {
    const double wt = frame_ramps.empty() ? 1.0 : frame_ramps[t];
    const std::size_t tt = static_cast<std::size_t>(t + frame_offset);
    for (int x = 0; x < mean.width(); ++x) weight_[tt * width_ + x_offset + x] += wt * column_ramps[x];
    for (int y = 0; y < height_; ++y) {
      const float* m = &mean.data()[mean.index(t, y, 0)];
      const float* v = variance ? &variance->data()[variance->index(t, y, 0)] : nullptr;
      const std::size_t base = ((tt * height_ + y) * width_ + x_offset) * ch;
      for (int x = 0; x < mean.width(); ++x) {
        const double w = wt * column_ramps[x];
        for (int c = 0; c < ch; ++c) {
          mean_[base + x * ch + c] += w * m[x * ch + c];
          if (v) var_[base + x * ch + c] += w * v[x * ch + c];
        }
      }
    }
  }
}

GaussianField GaussianAccumulator::finish() const {
  GaussianField out{Video(frames_, height_, width_, channels_), Video(frames_, height_, width_, channels_)};
  for (int t = 0; t < frames_; ++t) {
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const double w = weight_[static_cast<std::size_t>(t) * width_ + x];
        if (w <= 0.0) fail(ErrorKind::Layout, "accumulator position is not covered by any window");
        const std::size_t i = ((static_cast<std::size_t>(t) * height_ + y) * width_ + x) * channels_;
        for (int c = 0; c < channels_; ++c) {
          out.mean.data()[i + c] = static_cast<float>(mean_[i + c] / w);
          out.variance.data()[i + c] = static_cast<float>(var_[i + c] / w);
        }
      }
    }
  }
  return out;
}

GaussianField aggregate_gaussian(const std::vector<GaussianField>& fields, const WindowLayout& layout) {
  if (static_cast<int>(fields.size()) != layout.windows()) {
    fail(ErrorKind::Layout, "expected one field per layout window");
  }
  const Video& first = fields.front().mean;
  GaussianAccumulator acc(first.frames(), first.height(), layout.canvas_width, first.channels());
  for (int i = 0; i < layout.windows(); ++i) {
    const Video& m = fields[i].mean;
    if (m.width() != layout.native_width || m.frames() != first.frames() || m.height() != first.height() ||
        !fields[i].variance.same_shape(m)) {
      fail(ErrorKind::Layout, "window field " + std::to_string(i) + " does not match the layout");
    }
    acc.add(fields[i].mean, &fields[i].variance, layout.ramps[i], layout.offsets[i], 0, {});
  }
  return acc.finish();
}

CategoricalField aggregate_categorical(const std::vector<CategoricalField>& fields, const WindowLayout& layout,
                                       int patch_size) {
  if (static_cast<int>(fields.size()) != layout.windows()) {
    fail(ErrorKind::Layout, "expected one field per layout window");
  }
  if (patch_size < 1 || layout.native_width % patch_size || layout.canvas_width % patch_size) {
    fail(ErrorKind::Layout, "window widths are not multiples of the patch size");
  }
  for (int off : layout.offsets) {
    if (off % patch_size) {
      fail(ErrorKind::Layout, "window at column " + std::to_string(off) + " is off the " +
                                  std::to_string(patch_size) + "-pixel token lattice");
    }
  }
  const auto tw = token_weights(layout, patch_size);
  const CategoricalField& first = fields.front();
  const int vocab = first.vocabulary;
  CategoricalField out(first.frames, first.height, layout.canvas_width / patch_size, vocab);
  for (int i = 0; i < layout.windows(); ++i) {
    const CategoricalField& f = fields[i];
    if (f.frames != first.frames || f.height != first.height || f.width != layout.native_width / patch_size ||
        f.vocabulary != vocab) {
      fail(ErrorKind::Layout, "token field " + std::to_string(i) + " does not match the layout");
    }
    const int x0 = layout.offsets[i] / patch_size;
    for (int t = 0; t < f.frames; ++t) {
      for (int y = 0; y < f.height; ++y) {
        for (int x = 0; x < f.width; ++x) {
          const auto src = f.at(f.position(t, y, x));
          auto dst = out.at(out.position(t, y, x0 + x));
          const float w = tw[i][x];
          for (int v = 0; v < vocab; ++v) dst[v] += w * src[v];
        }
      }
    }
  }
  for (std::size_t p = 0; p < out.positions(); ++p) {
    auto probs = out.at(p);
    double s = 0.0;
    for (float v : probs) s += v;
    if (s <= 0.0) {
      std::fill(probs.begin(), probs.end(), 1.0f / vocab);
      continue;
    }
    for (float& v : probs) v = static_cast<float>(v / s);
  }
  return out;
}

std::vector<FrameRange> temporal_windows(int frames, int context, int overlap) {
  if (context < 1) fail(ErrorKind::Config, "temporal window length must be >= 1");
  if (overlap < 0) overlap = context / 2;
  if (overlap >= context) {
    fail(ErrorKind::Config, "temporal overlap " + std::to_string(overlap) + " must be below the window length " +
                                std::to_string(context));
  }
  if (frames <= context) return {{0, frames}};
  const int stride = context - overlap;
  std::vector<FrameRange> out;
  for (int s = 0; s + context < frames; s += stride) out.push_back({s, s + context});
  out.push_back({frames - context, frames});
  return out;
}

std::vector<std::vector<float>> range_weights(const std::vector<FrameRange>& ranges, int frames, WeightMode mode) {
  if (ranges.empty()) fail(ErrorKind::Layout, "no temporal windows");
  std::vector<int> starts;
  const int len = ranges.front().size();
  for (const auto& r : ranges) {
    if (r.size() != len) fail(ErrorKind::Layout, "temporal windows must share one length");
    starts.push_back(r.begin);
  }
  return interval_weights(starts, len, frames, mode);
}

std::vector<std::vector<double>> range_ramps(const std::vector<FrameRange>& ranges, int frames, WeightMode mode) {
  if (ranges.empty()) fail(ErrorKind::Layout, "no temporal windows");
  std::vector<int> starts;
  const int len = ranges.front().size();
  for (const auto& r : ranges) {
    if (r.size() != len) fail(ErrorKind::Layout, "temporal windows must share one length");
    starts.push_back(r.begin);
  }
  return interval_ramps(starts, len, frames, mode);
}

GaussianField stitch_temporal_gaussian(const std::vector<GaussianField>& fields, const std::vector<FrameRange>& ranges,
                                       int frames, WeightMode mode) {
  if (fields.size() != ranges.size()) fail(ErrorKind::Layout, "expected one field per temporal window");
  const auto ramps = range_ramps(ranges, frames, mode);
  const Video& first = fields.front().mean;
  GaussianAccumulator acc(frames, first.height(), first.width(), first.channels());
  const std::vector<double> ones(first.width(), 1.0);
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (fields[j].mean.frames() != ranges[j].size() || fields[j].mean.width() != first.width()) {
      fail(ErrorKind::Layout, "temporal field " + std::to_string(j) + " does not match its range");
    }
    acc.add(fields[j].mean, &fields[j].variance, ones, 0, ranges[j].begin, ramps[j]);
  }
  return acc.finish();
}

TokenGrid stitch_temporal_tokens(const std::vector<TokenGrid>& windows, const std::vector<FrameRange>& ranges) {
  if (windows.size() != ranges.size() || windows.empty()) fail(ErrorKind::Layout, "expected one grid per window");
  int frames = 0;
  for (const auto& r : ranges) frames = std::max(frames, r.end);
  TokenGrid out(frames, windows.front().height, windows.front().width, -1);
  for (std::size_t j = 0; j < windows.size(); ++j) {
    const TokenGrid& g = windows[j];
    if (g.frames != ranges[j].size() || g.height != out.height || g.width != out.width) {
      fail(ErrorKind::Layout, "token window " + std::to_string(j) + " does not match its range");
    }
    for (int f = 0; f < g.frames; ++f) {
      for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
          auto& dst = out.at(ranges[j].begin + f, y, x);
          if (dst < 0) dst = g.at(f, y, x);
        }
      }
    }
  }
  for (auto id : out.ids) {
    if (id < 0) fail(ErrorKind::Layout, "temporal windows leave frames uncovered");
  }
  return out;
}

}  // namespace panovid

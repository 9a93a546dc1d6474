#include "panovid/pyramid.hpp"

#include <cmath>

#include "panovid/error.hpp"
#include "panovid/parallel.hpp"

namespace panovid {

std::vector<int> TemporalPyramid::sizes() const {
  std::vector<int> out;
  for (const auto& l : levels) out.push_back(l.frames());
  return out;
}

std::vector<int> pyramid_level_sizes(int frames, int context_frames) {
  if (context_frames < 2) fail(ErrorKind::Config, "context window must be at least 2 frames");
  if (frames < 1) fail(ErrorKind::Dimension, "pyramid input needs at least one frame");
  std::vector<int> sizes{frames};
  while (sizes.back() > context_frames) sizes.push_back((sizes.back() + 1) / 2);
  return sizes;
}

std::vector<FrameSpan> level_spans(int frames, int level_frames) {
  const int stride = static_cast<int>(std::lround(static_cast<double>(frames) / level_frames));
  const int width = stride;
  std::vector<FrameSpan> spans;
  for (int j = 0; j < level_frames; ++j) {
    const int first = std::min(j * stride, frames - 1);
    spans.push_back({first, std::min(first + width, frames)});
  }
  for (std::size_t j = 1; j < spans.size(); ++j) {
    if (spans[j].center_index() <= spans[j - 1].center_index()) {
      fail(ErrorKind::Config, "temporal pyramid: level of " + std::to_string(level_frames) + " frames from " +
                                  std::to_string(frames) + " collapses window centres");
    }
  }
  return spans;
}

Video box_filter_spans(const Video& v, const Mask* valid, const std::vector<FrameSpan>& spans, int threads) {
  Video out(static_cast<int>(spans.size()), v.height(), v.width(), v.channels());
  out.frame_rate = v.frame_rate;
  out.color_space = v.color_space;
  out.bit_depth = v.bit_depth;
  const std::size_t pixels = static_cast<std::size_t>(v.height()) * v.width();
  const int ch = v.channels();
  parallel_for(spans.size(), threads, [&](std::size_t j) {
    const FrameSpan s = spans[j];
    auto dst = out.frame(static_cast<int>(j));
    if (s.last - s.first == 1) {
      auto src = v.frame(s.first);
      std::copy(src.begin(), src.end(), dst.begin());
      return;
    }
    std::vector<double> sum(pixels * ch);
    std::vector<int> count(pixels);
    for (int t = s.first; t < s.last; ++t) {
      auto src = v.frame(t);
      for (std::size_t p = 0; p < pixels; ++p) {
        if (valid && !valid->data()[t * valid->frame_size() + p]) continue;
        ++count[p];
        for (int c = 0; c < ch; ++c) sum[p * ch + c] += src[p * ch + c];
      }
    }
    for (std::size_t p = 0; p < pixels; ++p) {
      for (int c = 0; c < ch; ++c) {
        dst[p * ch + c] = count[p] ? static_cast<float>(sum[p * ch + c] / count[p]) : 0.0f;
      }
    }
  });
  return out;
}

TemporalPyramid build_pyramid(const Video& x0, const Mask& m0, int context_frames, int threads) {
  require_same_dims(x0, m0, "build_pyramid");
  const auto sizes = pyramid_level_sizes(x0.frames(), context_frames);
  TemporalPyramid pyr;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    PyramidLevel level;
    if (k == 0) {
      level.video = x0;
      level.mask = m0;
      for (int t = 0; t < x0.frames(); ++t) level.spans.push_back({t, t + 1});
    } else {
      level.spans = level_spans(x0.frames(), sizes[k]);
      // Each level is filtered directly from level 0.
      level.video = box_filter_spans(x0, &m0, level.spans, threads);
      level.mask = Mask(sizes[k], m0.height(), m0.width());
      for (int j = 0; j < sizes[k]; ++j) {
        const int c = level.spans[j].center_index();
        std::copy(m0.data().begin() + c * m0.frame_size(), m0.data().begin() + (c + 1) * m0.frame_size(),
                  level.mask.data().begin() + j * m0.frame_size());
      }
    }
    for (const auto& s : level.spans) level.center_indices.push_back(s.center_index());
    level.stride = static_cast<int>(std::lround(static_cast<double>(x0.frames()) / sizes[k]));
    level.filter_width = level.stride;
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

std::vector<double> span_times(const std::vector<FrameSpan>& spans) {
  std::vector<double> out;
  for (const auto& s : spans) out.push_back(s.center_time());
  return out;
}

std::vector<double> level_frame_times(const TemporalPyramid& pyramid, int level) {
  return span_times(pyramid.levels.at(level).spans);
}

}  // namespace panovid

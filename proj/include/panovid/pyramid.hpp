#pragma once

#include <utility>
#include <vector>

#include "panovid/video.hpp"

namespace panovid {

// Level-0 frame range [first, last) averaged into one retained frame.
struct FrameSpan {
  int first = 0;
  int last = 1;

  double center_time() const { return 0.5 * (first + last - 1); }
  int center_index() const { return first + (last - first - 1) / 2; }
  bool operator==(const FrameSpan&) const = default;
};

struct PyramidLevel {
  Video video;
  Mask mask;
  std::vector<FrameSpan> spans;
  std::vector<int> center_indices;
  int filter_width = 1;
  int stride = 1;

  int frames() const { return video.frames(); }
};

struct TemporalPyramid {
  std::vector<PyramidLevel> levels;

  int coarsest() const { return static_cast<int>(levels.size()) - 1; }
  std::vector<int> sizes() const;
};

// N^0, ceil(N^0/2), ... until a level fits in `context_frames`.
std::vector<int> pyramid_level_sizes(int frames, int context_frames);
// Temporal windows for a level of `level_frames` frames filtered from `frames` inputs.
std::vector<FrameSpan> level_spans(int frames, int level_frames);

// Mask-normalized temporal box average of `v` over each span (only frames
// where `valid` is set contribute; all frames when `valid` is null).
Video box_filter_spans(const Video& v, const Mask* valid, const std::vector<FrameSpan>& spans, int threads = 1);

TemporalPyramid build_pyramid(const Video& x0, const Mask& m0, int context_frames, int threads = 1);

// Centre of each retained frame's window, in level-0 frame units.
std::vector<double> level_frame_times(const TemporalPyramid& pyramid, int level);
std::vector<double> span_times(const std::vector<FrameSpan>& spans);

}  // namespace panovid

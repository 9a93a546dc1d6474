#pragma once

#include <string>
#include <vector>

#include "panovid/backends.hpp"

namespace panovid {

enum class WeightMode { Tent, Uniform };

WeightMode parse_weight_mode(const std::string& name);
const char* to_string(WeightMode mode);

// Half-open range of frames (or token frames).
struct FrameRange {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool contains(int t) const { return t >= begin && t < end; }
  bool operator==(const FrameRange&) const = default;
};

// Overlapping 1-D intervals of equal length with normalized blend weights.
// Raw weight of position x in interval [a, a+n) is the distance to the
// nearer interior edge, min(x - a + 0.5, a + n - x - 0.5); an edge lying on
// the domain boundary does not ramp. Weights are normalized over intervals.
std::vector<std::vector<float>> interval_weights(const std::vector<int>& starts, int length, int domain,
                                                 WeightMode mode);
// Unnormalized weights (half-integers for tents, 1 for uniform).
std::vector<std::vector<double>> interval_ramps(const std::vector<int>& starts, int length, int domain,
                                                WeightMode mode);

struct WindowLayout {
  int canvas_width = 0;
  int native_width = 0;
  int stride = 0;
  WeightMode mode = WeightMode::Tent;
  std::vector<int> offsets;                  // left column of each window
  std::vector<std::vector<float>> weights;   // [window][column within window]
  std::vector<std::vector<double>> ramps;    // same, unnormalized

  int windows() const { return static_cast<int>(offsets.size()); }
  float weight(int window, int column) const { return weights[window][column]; }
};

WindowLayout make_layout(int canvas_width, int native_width, int stride, WeightMode mode = WeightMode::Tent);

// Per-token weights: mean of the pixel weights over each patch's columns.
std::vector<std::vector<float>> token_weights(const WindowLayout& layout, int patch_size);

// Weighted sums of window fields in double precision; finish() divides by
// the summed weight. Products of floats and small half-integer ramps are
// exact in double, so windows that agree blend to exactly their value.
class GaussianAccumulator {
 public:
  GaussianAccumulator(int frames, int height, int width, int channels);
  void reset();
  // Adds a window whose top-left sits at (frame_offset, x_offset). Empty
  // frame_ramps means weight 1 for every frame; variance may be null.
  void add(const Video& mean, const Video* variance, const std::vector<double>& column_ramps, int x_offset,
           int frame_offset, const std::vector<double>& frame_ramps);
  GaussianField finish() const;

 private:
  int frames_, height_, width_, channels_;
  std::vector<double> mean_, var_, weight_;  // weight_ is per (frame, column)
};

// Weighted moments of the per-window fields (one per layout window).
GaussianField aggregate_gaussian(const std::vector<GaussianField>& fields, const WindowLayout& layout);

// Probability average over token positions; windows must sit on the patch lattice.
CategoricalField aggregate_categorical(const std::vector<CategoricalField>& fields, const WindowLayout& layout,
                                       int patch_size);

// Windows of `context` frames at stride context - overlap (overlap defaults
// to context/2); the last one is right-aligned to `frames`.
std::vector<FrameRange> temporal_windows(int frames, int context, int overlap = -1);
std::vector<std::vector<float>> range_weights(const std::vector<FrameRange>& ranges, int frames, WeightMode mode);
std::vector<std::vector<double>> range_ramps(const std::vector<FrameRange>& ranges, int frames, WeightMode mode);

// Blends per-range fields (each covering its range) into one field of `frames` frames.
GaussianField stitch_temporal_gaussian(const std::vector<GaussianField>& fields, const std::vector<FrameRange>& ranges,
                                       int frames, WeightMode mode = WeightMode::Tent);

// Concatenates committed windows; overlaps keep the earlier window's tokens.
TokenGrid stitch_temporal_tokens(const std::vector<TokenGrid>& windows, const std::vector<FrameRange>& ranges);

}  // namespace panovid

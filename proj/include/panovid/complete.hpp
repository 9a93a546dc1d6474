#pragma once

#include <cstdint>
#include <vector>

#include "panovid/aggregate.hpp"
#include "panovid/backends.hpp"

namespace panovid {

struct CompletionOptions {
  int spatial_stride = 32;
  WeightMode weights = WeightMode::Tent;
  int temporal_overlap = -1;  // frames shared by neighbouring windows; -1: half the window
  int token_iterations = 12;
  int threads = 1;
};

// Canvas size the backend works at: height = native height, width scaled by
// the same factor (rounded to the patch lattice for token backends).
struct WorkingSize {
  int height = 0;
  int width = 0;
};
WorkingSize working_size(const BackendDescriptor& d, int canvas_height, int canvas_width);

// One level's content as seen by the samplers.
struct LevelInput {
  const Video& video;
  const Mask& mask;
  std::vector<FrameSpan> spans;  // level-0 frames behind each frame (may be empty)
  int level = 0;
  bool time_reversed = false;
};

// Token valid iff every covered pixel of every grouped frame is valid.
Mask derive_token_mask(const Mask& m, int patch_size, int token_frames = 1);

// Multi-window sampling of one level at working resolution; the result is
// upscaled to canvas size and composited with the final-step pinned pixels.
// Gaussian backends run one shared DDPM chain with per-step aggregation over
// spatial windows and temporal ranges; token backends run confidence-ordered
// sampling per temporal range with continuation pinning.
Video sample_level(const LevelInput& in, const MaskSchedule& schedule, const Backend& backend,
                   const CompletionOptions& options, std::uint64_t seed);

Video complete_base(const LevelInput& in, const Backend& backend, const CompletionOptions& options,
                    std::uint64_t seed);

// Per-pixel pass assignment: 1 where some frame t' <= t observed the pixel.
Mask forward_assignment(const Mask& m);

struct CausalCompletion {
  Video video;
  Mask forward;  // 1 = pixel taken from the forward pass
};

CausalCompletion complete_base_causal(const LevelInput& in, const Backend& backend, const CompletionOptions& options,
                                      std::uint64_t seed);

}  // namespace panovid

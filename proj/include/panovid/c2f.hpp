#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "panovid/align.hpp"
#include "panovid/complete.hpp"
#include "panovid/pyramid.hpp"

namespace panovid {

enum class UpsampleMode { Blend, Repeat };
enum class ScheduleMode { Standard, FastMotion };

UpsampleMode parse_upsample_mode(const std::string& name);
ScheduleMode parse_schedule_mode(const std::string& name);
const char* to_string(UpsampleMode mode);
const char* to_string(ScheduleMode mode);

// Linear (or nearest, for Repeat) interpolation in time at each fine
// timestamp; frames outside the coarse time range take the nearest frame.
Video upsample_temporal(const Video& coarse, const std::vector<double>& coarse_times,
                        const std::vector<double>& fine_times, UpsampleMode mode = UpsampleMode::Blend);

// Fine frame nearest in time to each coarse frame (earlier frame on ties).
std::vector<int> coarse_coincident_frames(const std::vector<double>& coarse_times,
                                          const std::vector<double>& fine_times);

// Binary over: m ? x : up. With `align`, x is first warped and color-matched to up.
Video merge_input(const Video& x, const Mask& m, const Video& up, const AlignOptions* align = nullptr,
                  int threads = 1);

// Standard: coincident frames pinned full-frame at every step, others follow m.
// Fast-motion: full-frame pinning only for steps < floor(steps / 8).
MaskSchedule build_mask_schedule(const Mask& m, const std::vector<int>& coincident, int steps, ScheduleMode mode);

Video resynthesize(const Video& merged, const Mask& m, const std::vector<FrameSpan>& spans, int level,
                   const Backend& backend, const MaskSchedule& schedule, const CompletionOptions& options,
                   std::uint64_t seed);

struct CoarseToFineOptions {
  CompletionOptions completion;
  ScheduleMode schedule = ScheduleMode::Standard;
  UpsampleMode upsample = UpsampleMode::Blend;
  bool align = false;
  AlignOptions align_options;
  std::optional<std::filesystem::path> checkpoint_dir;  // level_<k>/{up,merge,out}
};

struct LevelOutputs {
  Video up;
  Video merge;
  Video out;
};

struct CoarseToFineResult {
  Video output;                      // final composite at level 0
  std::vector<LevelOutputs> levels;  // indexed by level; coarsest has only `out`
};

CoarseToFineResult run_coarse_to_fine(const TemporalPyramid& pyramid, const Backend& backend,
                                      const CoarseToFineOptions& options, std::uint64_t seed,
                                      bool keep_levels = false);

}  // namespace panovid

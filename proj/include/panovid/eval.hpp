#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "panovid/align.hpp"
#include "panovid/video.hpp"

namespace panovid {

struct EvalOptions {
  FlowOptions flow;
  float dynamic_threshold = 0.2f;  // px per frame
  int threads = 1;
};

// Refined grid flow from frame t to t+1 on luminance.
std::vector<DenseFlow> consecutive_flows(const Video& v, const FlowOptions& options = {}, int threads = 1);

// 1 = dynamic (flow magnitude above the threshold); the last frame repeats
// the penultimate split.
Mask split_static_dynamic(const Video& gt, const EvalOptions& options = {});
Mask split_from_flows(const std::vector<DenseFlow>& flows, int frames, float threshold);

// 10 log10(1 / MSE) over masked samples, capped at 99 dB; nullopt when empty.
std::optional<double> psnr_region(const Video& out, const Video& gt, const Mask& region);
// Mean L2 difference of consecutive-frame flows over region pixels of frames 0..T-2.
std::optional<double> flow_epe(const Video& out, const Video& gt, const Mask& region, const EvalOptions& options = {});
std::optional<double> flow_epe(const std::vector<DenseFlow>& out_flows, const std::vector<DenseFlow>& gt_flows,
                               const Mask& region);
// Mean luminance SSIM (7x7 box windows) over region pixels. Auxiliary metric.
std::optional<double> ssim_region(const Video& out, const Video& gt, const Mask& region);

// Evaluates `out` on the region outside m0. Without ground truth only input
// fidelity inside m0 is reported.
nlohmann::json evaluate(const Video& out, const Video* gt, const Mask& m0, const Video* input_canvas,
                        const EvalOptions& options = {});

// Side-by-side strips: ground truth above, output below with the input
// window darkened and outlined.
void write_strips(const Video& out, const Video* gt, const Mask& m0, const std::filesystem::path& dir, int count = 4);

}  // namespace panovid

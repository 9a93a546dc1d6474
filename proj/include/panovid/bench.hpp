#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "panovid/registration.hpp"
#include "panovid/video.hpp"

namespace panovid {

// Horizontal crop window moving over a wide source video. The left edge is
// piecewise linear through (frame, left) control points, rounded to pixels.
struct PanTrajectory {
  int frames = 88;
  double frame_rate = 15.0;
  int crop_width = 128;
  int crop_height = 0;  // 0: full source height
  std::vector<std::pair<double, double>> control_points;

  int left(int t) const;
};

std::vector<std::string> trajectory_preset_names();
// Presets: left-right, left-right-left, static. Crop width defaults to a
// quarter of the canvas width.
PanTrajectory trajectory_preset(const std::string& name, int canvas_width, int frames = 88, double frame_rate = 15.0,
                                int crop_width = 0);
PanTrajectory load_trajectory(const std::filesystem::path& path);
void save_trajectory(const PanTrajectory& traj, const std::filesystem::path& path);
nlohmann::json trajectory_to_json(const PanTrajectory& traj);
PanTrajectory trajectory_from_json(const nlohmann::json& j);

struct SyntheticCase {
  Video input;         // per-frame crops
  Mask canvas_mask;    // crop footprint on the canvas
  CameraModel camera;  // canvas-crop mode
  Video ground_truth;  // source frames on the full canvas
};

SyntheticCase make_synthetic(const Video& source, const PanTrajectory& traj);

// Procedural wide scene: a band-limited static texture with a few soft
// blobs drifting slowly across it.
Video make_source_scene(int frames, int height, int width, double frame_rate = 15.0, std::uint64_t seed = 1);

}  // namespace panovid

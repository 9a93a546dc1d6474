#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "panovid/backends.hpp"
#include "panovid/c2f.hpp"
#include "panovid/registration.hpp"
#include "panovid/video_io.hpp"

namespace panovid {

constexpr int kJobSchemaVersion = 1;

// Declarative completion job. Paths are resolved against the directory of the
// config file. Every key has a default except input.video.
struct JobConfig {
  std::filesystem::path video;
  std::optional<std::filesystem::path> mask;    // input.video is already a canvas
  std::optional<std::filesystem::path> camera;  // project input.video with this camera
  std::optional<std::filesystem::path> ground_truth;
  std::optional<double> focal;

  std::filesystem::path output_dir;
  VideoFormat output_format = VideoFormat::PngDir;
  bool checkpoints = true;

  std::string backend_kind;  // oracle | interpolation | diffusion-mock | kmeans-token | external
  std::string endpoint;
  BackendDescriptor descriptor;
  float interpolation_variance = 0.0f;
  double timeout_seconds = 60.0;
  int retries = 1;
  KMeansTokenBackend::Options kmeans;

  CoarseToFineOptions c2f;
  bool overlap_defaulted = false;  // temporal_overlap follows context_frames / 2

  nlohmann::json resolved;  // every field, defaults filled in
};

// Default config (as JSON) for a backend kind; flavor only matters for
// external backends.
nlohmann::json default_job_json(const std::string& backend_kind, Flavor flavor = Flavor::Gaussian);

// Validates against the schema (unknown keys and wrong types rejected) and
// fills defaults.
JobConfig parse_job_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
JobConfig load_job_config(const std::filesystem::path& path);

struct JobInput {
  Video canvas;
  Mask mask;
  std::optional<Video> ground_truth;
  std::optional<CameraModel> camera;
};

// Registers/projects the input as configured.
JobInput load_job_input(const JobConfig& config, int threads = 1);

// Builds the configured backend. External backends replace config.descriptor
// (and the resolved JSON) with the advertised descriptor.
Backend make_backend(JobConfig& config, const JobInput& input);

struct RunOptions {
  std::uint64_t seed = 0;
  int samples = 1;
  int threads = 1;
};

// Writes resolved_config.json, input/{canvas,mask}, and per seed
// seed_<S>/final plus seed_<S>/levels/level_<k>/{up,merge,out}. Returns the
// final-output paths.
std::vector<std::filesystem::path> run_job(JobConfig config, const RunOptions& options);

// Registration without completion: camera.json, canvas/, mask/ under `out`.
CameraModel register_video(const Video& v, std::optional<double> focal, const std::filesystem::path& out,
                           int threads = 1);

}  // namespace panovid

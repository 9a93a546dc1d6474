// panovid: panoramic video completion command line.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <iostream>

#include "panovid/bench.hpp"
#include "panovid/error.hpp"
#include "panovid/eval.hpp"
#include "panovid/job.hpp"
#include "panovid/pyramid.hpp"
#include "panovid/video_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace panovid;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Parse:
    case ErrorKind::Layout:
      return 2;
    case ErrorKind::Registration:
    case ErrorKind::Degeneracy:
      return 3;
    case ErrorKind::Backend:
    case ErrorKind::Handshake:
    case ErrorKind::Contract:
      return 4;
    default:
      return 1;
  }
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  f << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

struct SynthArgs {
  std::string src;
  std::string preset = "left-right-left";
  fs::path out;
  int frames = 88;
  double fps = 15.0;
  int crop_width = 0;
  int scene_width = 512;
  int scene_height = 128;
  std::uint64_t scene_seed = 1;
};

void synth_bench(const SynthArgs& a) {
  Video source;
  if (a.src == "procedural") {
    source = make_source_scene(a.frames, a.scene_height, a.scene_width, a.fps, a.scene_seed);
  } else {
    source = load_video(a.src);
  }
  const PanTrajectory traj = trajectory_preset(a.preset, source.width(), a.frames, a.fps, a.crop_width);
  const SyntheticCase c = make_synthetic(source, traj);
  fs::create_directories(a.out);
  save_video(c.input, a.out / "input", VideoFormat::PngDir);
  save_video(c.ground_truth, a.out / "ground_truth", VideoFormat::PngDir);
  save_mask(c.canvas_mask, a.out / "mask");
  save_camera_path(c.camera, a.out / "camera.json");
  save_trajectory(traj, a.out / "trajectory.json");
  const json job = {{"schema_version", kJobSchemaVersion},
                    {"input", {{"video", "input"}, {"camera", "camera.json"}, {"ground_truth", "ground_truth"}}},
                    {"output", {{"dir", "output"}}},
                    {"backend", {{"kind", "oracle"}}}};
  write_json(job, a.out / "job.json");
  spdlog::info("bench '{}' written to {} ({} frames, canvas {}x{}, crop {})", a.preset, a.out.string(),
               traj.frames, source.width(), source.height(), traj.crop_width);
}

struct CompleteArgs {
  fs::path job;
  std::uint64_t seed = 0;
  int samples = 1;
  int threads = 1;
  std::string agg_weights, upsample, schedule, out;
};

void complete(const CompleteArgs& a) {
  json j = read_json(a.job);
  auto section = [&](const char* name) -> json& {
    if (!j.contains(name)) j[name] = json::object();
    return j[name];
  };
  if (!a.agg_weights.empty()) section("completion")["agg_weights"] = a.agg_weights;
  if (!a.upsample.empty()) section("completion")["upsample"] = a.upsample;
  if (!a.schedule.empty()) section("completion")["schedule"] = a.schedule;
  const fs::path base = a.job.has_parent_path() ? a.job.parent_path() : fs::path(".");
  JobConfig config = parse_job_config(j, base);
  if (!a.out.empty()) {
    config.output_dir = a.out;
    config.resolved["output"]["dir"] = a.out;
  }
  for (const auto& p : run_job(std::move(config), {a.seed, a.samples, a.threads})) std::cout << p.string() << "\n";
}

struct EvaluateArgs {
  fs::path out, gt, mask, input, metrics, strips;
  int threads = 1;
  int strip_count = 4;
  EvalOptions options;
};

void evaluate_cmd(EvaluateArgs a) {
  const Video out = load_video(a.out);
  const Mask m0 = load_mask(a.mask, out);
  std::optional<Video> gt, input;
  if (!a.gt.empty()) gt = load_video(a.gt);
  if (!a.input.empty()) input = load_video(a.input);
  if (!gt && !input) fail(ErrorKind::Config, "evaluate needs --gt or --input");
  a.options.threads = a.threads;
  const json report = evaluate(out, gt ? &*gt : nullptr, m0, input ? &*input : nullptr, a.options);
  fs::path metrics = a.metrics;
  if (metrics.empty()) {
    const fs::path o = fs::absolute(a.out);
    metrics = (o.has_parent_path() ? o.parent_path() : fs::path(".")) / "metrics.json";
  }
  write_json(report, metrics);
  if (!a.strips.empty()) write_strips(out, gt ? &*gt : nullptr, m0, a.strips, a.strip_count);
  std::cout << report.dump(2) << "\n";
}

void inspect(const fs::path& job_dir, int level, fs::path out) {
  const json resolved = read_json(job_dir / "resolved_config.json");
  const int context = resolved.at("backend").at("context_frames").get<int>();
  const Video canvas = load_video(job_dir / "input" / "canvas");
  const Mask mask = load_mask(job_dir / "input" / "mask", canvas);
  const TemporalPyramid pyr = build_pyramid(canvas, mask, context);
  if (level < 0 || level > pyr.coarsest()) {
    fail(ErrorKind::Config, "level " + std::to_string(level) + " outside [0, " + std::to_string(pyr.coarsest()) + "]");
  }
  if (out.empty()) out = job_dir / "inspect" / ("level_" + std::to_string(level));
  const PyramidLevel& lv = pyr.levels[level];
  save_video(lv.video, out / "video", VideoFormat::PngDir);
  save_mask(lv.mask, out / "mask");
  json spans = json::array();
  for (const auto& s : lv.spans) spans.push_back({s.first, s.last});
  json checkpoints = json::array();
  for (const auto& entry : fs::directory_iterator(job_dir)) {
    const fs::path lvl = entry.path() / "levels" / ("level_" + std::to_string(level));
    if (entry.is_directory() && fs::exists(lvl)) {
      for (const char* name : {"up", "merge", "out"}) {
        if (fs::exists(lvl / name)) checkpoints.push_back((lvl / name).string());
      }
    }
  }
  std::sort(checkpoints.begin(), checkpoints.end());
  const json info = {{"level", level},
                     {"levels", pyr.sizes()},
                     {"frames", lv.frames()},
                     {"filter_width", lv.filter_width},
                     {"stride", lv.stride},
                     {"spans", spans},
                     {"frame_times", level_frame_times(pyr, level)},
                     {"center_indices", lv.center_indices},
                     {"checkpoints", checkpoints}};
  write_json(info, out / "level.json");
  std::cout << info.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panovid: panoramic video completion"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth-bench", "Build a synthetic pan benchmark from a wide source video");
  cmd_synth->add_option("--src", synth.src, "Source video, or 'procedural'")->required();
  cmd_synth->add_option("--preset", synth.preset, "left-right | left-right-left | static")->capture_default_str();
  cmd_synth->add_option("--out", synth.out, "Output directory")->required();
  cmd_synth->add_option("--frames", synth.frames)->capture_default_str();
  cmd_synth->add_option("--fps", synth.fps)->capture_default_str();
  cmd_synth->add_option("--crop-width", synth.crop_width, "0: a quarter of the source width");
  cmd_synth->add_option("--scene-width", synth.scene_width)->capture_default_str();
  cmd_synth->add_option("--scene-height", synth.scene_height)->capture_default_str();
  cmd_synth->add_option("--scene-seed", synth.scene_seed)->capture_default_str();

  fs::path reg_in, reg_out;
  double focal = 0.0;
  int reg_threads = 1;
  auto* cmd_reg = app.add_subcommand("register", "Estimate the camera path and project onto a panorama canvas");
  cmd_reg->add_option("--in", reg_in, "Input video (PNG dir or .y4m)")->required();
  cmd_reg->add_option("--focal", focal, "Focal length in pixels (estimated when omitted)");
  cmd_reg->add_option("--out", reg_out, "Output directory")->required();
  cmd_reg->add_option("--threads", reg_threads)->check(CLI::PositiveNumber);

  CompleteArgs comp;
  auto* cmd_comp = app.add_subcommand("complete", "Run a completion job");
  cmd_comp->add_option("--job", comp.job, "Job config (JSON)")->required();
  cmd_comp->add_option("--seed", comp.seed)->capture_default_str();
  cmd_comp->add_option("--samples", comp.samples, "Outputs with seeds S..S+N-1")->check(CLI::PositiveNumber);
  cmd_comp->add_option("--threads", comp.threads)->check(CLI::PositiveNumber);
  cmd_comp->add_option("--agg-weights", comp.agg_weights, "tent | uniform");
  cmd_comp->add_option("--upsample", comp.upsample, "blend | repeat");
  cmd_comp->add_option("--schedule", comp.schedule, "standard | fast-motion");
  cmd_comp->add_option("--out", comp.out, "Override output.dir");

  EvaluateArgs ev;
  auto* cmd_eval = app.add_subcommand("evaluate", "Score a completed video");
  cmd_eval->add_option("--out", ev.out, "Completed video")->required();
  cmd_eval->add_option("--gt", ev.gt, "Ground-truth video");
  cmd_eval->add_option("--mask", ev.mask, "Input mask directory")->required();
  cmd_eval->add_option("--input", ev.input, "Input canvas, for fidelity checks without ground truth");
  cmd_eval->add_option("--metrics", ev.metrics, "Report path (default: metrics.json next to --out)");
  cmd_eval->add_option("--strips", ev.strips, "Write comparison strips here");
  cmd_eval->add_option("--strip-count", ev.strip_count)->capture_default_str();
  cmd_eval->add_option("--threads", ev.threads)->check(CLI::PositiveNumber);
  cmd_eval->add_option("--flow-grid", ev.options.flow.grid)->capture_default_str();
  cmd_eval->add_option("--dynamic-threshold", ev.options.dynamic_threshold)->capture_default_str();

  fs::path insp_job, insp_out;
  int insp_level = 0;
  auto* cmd_insp = app.add_subcommand("inspect", "Dump a pyramid level and list its checkpoints");
  cmd_insp->add_option("--job", insp_job, "Job output directory")->required();
  cmd_insp->add_option("--level", insp_level)->required();
  cmd_insp->add_option("--out", insp_out, "Dump directory (default <job>/inspect/level_<k>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("panovid"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*cmd_synth) synth_bench(synth);
    if (*cmd_reg) {
      const Video v = load_video(reg_in);
      register_video(v, focal > 0.0 ? std::optional<double>(focal) : std::nullopt, reg_out, reg_threads);
    }
    if (*cmd_comp) complete(comp);
    if (*cmd_eval) evaluate_cmd(ev);
    if (*cmd_insp) inspect(insp_job, insp_level, insp_out);
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

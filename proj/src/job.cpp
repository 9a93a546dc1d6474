#include "panovid/job.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

#include "panovid/error.hpp"
#include "panovid/external.hpp"
#include "panovid/pyramid.hpp"

namespace panovid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kBackendKinds = {"oracle", "interpolation", "diffusion-mock", "kmeans-token",
                                                "external"};

Flavor flavor_of(const std::string& kind, Flavor external_flavor) {
  if (kind == "kmeans-token") return Flavor::Token;
  if (kind == "external") return external_flavor;
  if (kind == "oracle" || kind == "interpolation" || kind == "diffusion-mock") return Flavor::Gaussian;
  fail(ErrorKind::Config, "unknown backend kind '" + kind + "'");
}

const char* type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_object()) return "object";
  if (v.is_array()) return "array";
  return "null";
}

// Overlays `user` onto `defaults`, rejecting unknown keys and type changes.
// Null defaults accept any scalar.
void overlay(json& defaults, const json& user, const std::string& where) {
  if (!user.is_object()) fail(ErrorKind::Config, where + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) fail(ErrorKind::Config, "unknown config key '" + path + "'");
    json& slot = defaults[key];
    if (slot.is_object()) {
      overlay(slot, value, path);
      continue;
    }
    if (!slot.is_null() && !value.is_null()) {
      const bool ok = (slot.is_number() && value.is_number()) || (slot.is_boolean() && value.is_boolean()) ||
                      (slot.is_string() && value.is_string());
      if (!ok) {
        fail(ErrorKind::Config, "config key '" + path + "' must be a " + type_name(slot) + ", got " +
                                    type_name(value));
      }
      if (slot.is_number_integer() && !value.is_number_integer()) {
        fail(ErrorKind::Config, "config key '" + path + "' must be an integer");
      }
    }
    if (value.is_object() || value.is_array()) fail(ErrorKind::Config, "config key '" + path + "' must be a scalar");
    slot = value;
  }
}

std::optional<fs::path> opt_path(const json& v, const fs::path& base) {
  if (v.is_null()) return std::nullopt;
  const fs::path p = v.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorKind::Config, msg);
}

}  // namespace

json default_job_json(const std::string& backend_kind, Flavor flavor) {
  const Flavor f = flavor_of(backend_kind, flavor);
  const BackendDescriptor d = f == Flavor::Gaussian ? BackendDescriptor::gaussian_defaults()
                                                    : BackendDescriptor::token_defaults();
  const bool token = f == Flavor::Token;
  const KMeansTokenBackend::Options km;
  const FlowOptions flow;
  return {
      {"schema_version", kJobSchemaVersion},
      {"input", {{"video", nullptr}, {"mask", nullptr}, {"camera", nullptr}, {"ground_truth", nullptr},
                 {"focal", nullptr}}},
      {"output", {{"dir", "output"}, {"format", "png"}, {"checkpoints", true}}},
      {"backend",
       {{"kind", backend_kind},
        {"flavor", to_string(f)},
        {"endpoint", nullptr},
        {"context_frames", d.context_frames},
        {"native_height", d.native_height},
        {"native_width", d.native_width},
        {"causal", d.causal},
        {"sampling_steps", d.sampling_steps},
        {"vocabulary_size", d.vocabulary_size},
        {"patch_size", d.patch_size},
        {"token_frames", d.token_frames},
        {"max_concurrency", d.max_concurrency},
        {"interpolation_variance", 0.0},
        {"timeout_seconds", 60.0},
        {"retries", 1},
        {"kmeans",
         {{"iterations", km.kmeans_iterations},
          {"max_training_patches", km.max_training_patches},
          {"neighborhood_radius", km.neighborhood_radius},
          {"smoothing", km.smoothing},
          {"seed", km.seed}}}}},
      {"completion",
       {{"spatial_stride", token ? 80 : 32},
        {"temporal_overlap", nullptr},
        {"agg_weights", "tent"},
        {"token_iterations", 12},
        {"upsample", "blend"},
        {"schedule", "standard"},
        {"align", token},
        {"color_levels", 0},
        {"flow",
         {{"grid", flow.grid},
          {"octaves", flow.octaves},
          {"iterations", flow.iterations},
          {"max_displacement", flow.max_displacement}}}}}};
}

JobConfig parse_job_config(const json& j, const fs::path& base_dir) {
  require(j.is_object(), "job config must be a JSON object");
  require(j.contains("schema_version"), "job config lacks schema_version");
  require(j["schema_version"].is_number_integer() && j["schema_version"].get<int>() == kJobSchemaVersion,
          "unsupported schema_version " + j["schema_version"].dump() + " (expected " +
              std::to_string(kJobSchemaVersion) + ")");

  std::string kind = "oracle";
  Flavor external_flavor = Flavor::Gaussian;
  if (j.contains("backend") && j["backend"].is_object()) {
    const json& b = j["backend"];
    if (b.contains("kind")) {
      require(b["kind"].is_string(), "backend.kind must be a string");
      kind = b["kind"].get<std::string>();
    }
    if (b.contains("flavor")) {
      require(b["flavor"].is_string(), "backend.flavor must be a string");
      external_flavor = parse_flavor(b["flavor"].get<std::string>());
    }
  }
  json r = default_job_json(kind, external_flavor);
  overlay(r, j, "");
  require(flavor_of(kind, external_flavor) == parse_flavor(r["backend"]["flavor"].get<std::string>()),
          "backend.flavor does not match backend kind '" + kind + "'");

  JobConfig c;
  try {
    const json& in = r["input"];
    require(!in["video"].is_null(), "input.video is required");
    c.video = *opt_path(in["video"], base_dir);
    c.mask = opt_path(in["mask"], base_dir);
    c.camera = opt_path(in["camera"], base_dir);
    c.ground_truth = opt_path(in["ground_truth"], base_dir);
    require(!(c.mask && c.camera), "input.mask and input.camera are mutually exclusive");
    if (!in["focal"].is_null()) {
      c.focal = in["focal"].get<double>();
      require(*c.focal > 0.0, "input.focal must be positive");
    }

    const json& out = r["output"];
    c.output_dir = *opt_path(out["dir"], base_dir);
    const std::string format = out["format"].get<std::string>();
    require(format == "png" || format == "y4m", "output.format must be png or y4m");
    c.output_format = format == "png" ? VideoFormat::PngDir : VideoFormat::Y4m;
    c.checkpoints = out["checkpoints"].get<bool>();

    const json& b = r["backend"];
    c.backend_kind = kind;
    require(std::find(kBackendKinds.begin(), kBackendKinds.end(), kind) != kBackendKinds.end(),
            "unknown backend kind '" + kind + "'");
    if (kind == "external") {
      require(b["endpoint"].is_string(), "backend.endpoint is required for external backends");
      c.endpoint = b["endpoint"].get<std::string>();
    }
    BackendDescriptor& d = c.descriptor;
    d.flavor = parse_flavor(b["flavor"].get<std::string>());
    d.context_frames = b["context_frames"].get<int>();
    d.native_height = b["native_height"].get<int>();
    d.native_width = b["native_width"].get<int>();
    d.causal = b["causal"].get<bool>();
    d.sampling_steps = b["sampling_steps"].get<int>();
    d.vocabulary_size = b["vocabulary_size"].get<int>();
    d.patch_size = b["patch_size"].get<int>();
    d.token_frames = b["token_frames"].get<int>();
    d.max_concurrency = b["max_concurrency"].get<int>();
    d.validate();
    c.interpolation_variance = b["interpolation_variance"].get<float>();
    require(c.interpolation_variance >= 0.0f, "backend.interpolation_variance must be >= 0");
    c.timeout_seconds = b["timeout_seconds"].get<double>();
    require(c.timeout_seconds > 0.0, "backend.timeout_seconds must be positive");
    c.retries = b["retries"].get<int>();
    require(c.retries >= 0, "backend.retries must be >= 0");
    const json& km = b["kmeans"];
    c.kmeans.kmeans_iterations = km["iterations"].get<int>();
    c.kmeans.max_training_patches = km["max_training_patches"].get<int>();
    c.kmeans.neighborhood_radius = km["neighborhood_radius"].get<int>();
    c.kmeans.smoothing = km["smoothing"].get<float>();
    c.kmeans.seed = km["seed"].get<std::uint64_t>();
    require(c.kmeans.kmeans_iterations >= 0 && c.kmeans.max_training_patches >= 1 &&
                c.kmeans.neighborhood_radius >= 0 && c.kmeans.smoothing >= 0.0f && c.kmeans.smoothing < 1.0f,
            "backend.kmeans values out of range");

    json& cp = r["completion"];
    c.overlap_defaulted = cp["temporal_overlap"].is_null();
    if (c.overlap_defaulted) cp["temporal_overlap"] = d.context_frames / 2;
    CompletionOptions& co = c.c2f.completion;
    co.spatial_stride = cp["spatial_stride"].get<int>();
    require(co.spatial_stride >= 1 && co.spatial_stride <= d.native_width,
            "completion.spatial_stride must lie in [1, native_width]");
    co.temporal_overlap = cp["temporal_overlap"].get<int>();
    require(co.temporal_overlap >= 0 && co.temporal_overlap < d.context_frames,
            "completion.temporal_overlap must lie in [0, context_frames)");
    co.weights = parse_weight_mode(cp["agg_weights"].get<std::string>());
    co.token_iterations = cp["token_iterations"].get<int>();
    require(co.token_iterations >= 1, "completion.token_iterations must be >= 1");
    c.c2f.upsample = parse_upsample_mode(cp["upsample"].get<std::string>());
    c.c2f.schedule = parse_schedule_mode(cp["schedule"].get<std::string>());
    c.c2f.align = cp["align"].get<bool>();
    c.c2f.align_options.color_levels = cp["color_levels"].get<int>();
    const json& fl = cp["flow"];
    c.c2f.align_options.flow.grid = fl["grid"].get<int>();
    c.c2f.align_options.flow.octaves = fl["octaves"].get<int>();
    c.c2f.align_options.flow.iterations = fl["iterations"].get<int>();
    c.c2f.align_options.flow.max_displacement = fl["max_displacement"].get<float>();
    require(c.c2f.align_options.flow.grid >= 2 && c.c2f.align_options.flow.octaves >= 1 &&
                c.c2f.align_options.flow.iterations >= 1 && c.c2f.align_options.flow.max_displacement > 0.0f,
            "completion.flow values out of range");
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("job config: ") + e.what());
  }
  c.resolved = r;
  return c;
}

JobConfig load_job_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open job config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return parse_job_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

CameraModel register_video(const Video& v, std::optional<double> focal, const fs::path& out, int threads) {
  const auto hs = estimate_homographies(v);
  double f = v.width();
  if (focal) {
    f = *focal;
  } else if (const auto est = estimate_focal(hs, v.width(), v.height())) {
    f = *est;
  } else {
    spdlog::warn("focal length estimation ill-conditioned; using the frame width ({})", f);
  }
  const CameraModel cam = camera_from_homographies(hs, Intrinsics::centered(f, v.width(), v.height()));
  if (!out.empty()) {
    const CanvasGeometry geom = auto_fit_canvas(cam, v.width(), v.height());
    const CanvasProjection proj = project_to_canvas(v, cam, geom, threads);
    save_camera_path(cam, out / "camera.json");
    save_video(proj.canvas, out / "canvas", VideoFormat::PngDir);
    save_mask(proj.mask, out / "mask");
  }
  return cam;
}

JobInput load_job_input(const JobConfig& config, int threads) {
  JobInput in;
  if (config.mask) {
    in.canvas = load_video(config.video);
    in.mask = load_mask(*config.mask, in.canvas);
  } else {
    const Video v = load_video(config.video);
    const CameraModel cam = config.camera ? load_camera_path(*config.camera) : register_video(v, config.focal, {}, threads);
    if (cam.frames() != v.frames()) {
      fail(ErrorKind::Dimension, "camera path has " + std::to_string(cam.frames()) + " frames, video has " +
                                     std::to_string(v.frames()));
    }
    CanvasProjection proj = project_to_canvas(v, cam, auto_fit_canvas(cam, v.width(), v.height()), threads);
    in.canvas = std::move(proj.canvas);
    in.mask = std::move(proj.mask);
    in.camera = cam;
  }
  in.canvas.frame_rate = in.canvas.frame_rate > 0 ? in.canvas.frame_rate : 15.0;
  if (config.ground_truth) {
    in.ground_truth = load_video(*config.ground_truth);
    if (!in.ground_truth->same_shape(in.canvas)) {
      fail(ErrorKind::Dimension, "ground truth does not match the canvas shape");
    }
  }
  return in;
}

Backend make_backend(JobConfig& config, const JobInput& input) {
  Backend b;
  const std::string& kind = config.backend_kind;
  if (kind == "oracle") {
    if (!input.ground_truth) fail(ErrorKind::Config, "the oracle backend needs input.ground_truth");
    b.gaussian = std::make_shared<OracleBackend>(config.descriptor, *input.ground_truth);
  } else if (kind == "interpolation") {
    b.gaussian = std::make_shared<InterpolationBackend>(config.descriptor, config.interpolation_variance);
  } else if (kind == "diffusion-mock") {
    b.gaussian = std::make_shared<DiffusionMockBackend>(config.descriptor);
  } else if (kind == "kmeans-token") {
    b.token = std::make_shared<KMeansTokenBackend>(config.descriptor, config.kmeans);
  } else if (kind == "external") {
    b = connect_external({config.endpoint, config.timeout_seconds, config.retries});
    const BackendDescriptor& d = b.descriptor();
    if (d.flavor != config.descriptor.flavor) {
      fail(ErrorKind::Config, std::string("external backend advertises flavor ") + to_string(d.flavor) +
                                  ", config says " + to_string(config.descriptor.flavor));
    }
    config.descriptor = d;
    json& rb = config.resolved["backend"];
    const json dj = descriptor_to_json(d);
    for (const char* key : {"context_frames", "native_height", "native_width", "causal", "sampling_steps",
                            "vocabulary_size", "patch_size", "token_frames", "max_concurrency"}) {
      rb[key] = dj[key];
    }
    CompletionOptions& co = config.c2f.completion;
    if (config.overlap_defaulted) {
      co.temporal_overlap = d.context_frames / 2;
      config.resolved["completion"]["temporal_overlap"] = co.temporal_overlap;
    }
    if (co.temporal_overlap >= d.context_frames) {
      fail(ErrorKind::Config, "completion.temporal_overlap " + std::to_string(co.temporal_overlap) +
                                  " must be below the backend's context_frames " + std::to_string(d.context_frames));
    }
    if (co.spatial_stride > d.native_width) {
      fail(ErrorKind::Config, "completion.spatial_stride " + std::to_string(co.spatial_stride) +
                                  " exceeds the backend's native_width " + std::to_string(d.native_width));
    }
  } else {
    fail(ErrorKind::Config, "unknown backend kind '" + kind + "'");
  }
  return b;
}

std::vector<fs::path> run_job(JobConfig config, const RunOptions& options) {
  if (options.samples < 1) fail(ErrorKind::Config, "--samples must be >= 1");
  if (options.threads < 1) fail(ErrorKind::Config, "--threads must be >= 1");
  const JobInput input = load_job_input(config, options.threads);
  const Backend backend = make_backend(config, input);
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  {
    std::ofstream f(out / "resolved_config.json");
    if (!f) fail(ErrorKind::Io, "cannot write " + (out / "resolved_config.json").string());
    f << config.resolved.dump(2) << "\n";
  }
  save_video(input.canvas, out / "input" / "canvas", VideoFormat::PngDir);
  save_mask(input.mask, out / "input" / "mask");
  if (input.camera) save_camera_path(*input.camera, out / "input" / "camera.json");

  const TemporalPyramid pyramid = build_pyramid(input.canvas, input.mask, config.descriptor.context_frames,
                                                options.threads);
  std::string sizes;
  for (int n : pyramid.sizes()) sizes += (sizes.empty() ? "" : " ") + std::to_string(n);
  spdlog::info("pyramid levels: {}", sizes);

  std::vector<fs::path> finals;
  for (int k = 0; k < options.samples; ++k) {
    const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(k);
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    CoarseToFineOptions c2f = config.c2f;
    c2f.completion.threads = options.threads;
    if (config.checkpoints) c2f.checkpoint_dir = dir / "levels";
    spdlog::info("sample {} of {} (seed {})", k + 1, options.samples, seed);
    const CoarseToFineResult result = run_coarse_to_fine(pyramid, backend, c2f, seed);
    Video final = result.output;
    final.frame_rate = input.canvas.frame_rate;
    const fs::path path = config.output_format == VideoFormat::PngDir ? dir / "final" : dir / "final.y4m";
    save_video(final, path, config.output_format);
    finals.push_back(path);
  }
  return finals;
}

}  // namespace panovid

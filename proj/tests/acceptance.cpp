// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "panovid/aggregate.hpp"
#include "panovid/align.hpp"
#include "panovid/backends.hpp"
#include "panovid/bench.hpp"
#include "panovid/c2f.hpp"
#include "panovid/complete.hpp"
#include "panovid/error.hpp"
#include "panovid/eval.hpp"
#include "panovid/image_ops.hpp"
#include "panovid/job.hpp"
#include "panovid/pyramid.hpp"
#include "panovid/registration.hpp"
#include "panovid/video_io.hpp"

using namespace panovid;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d %-28s %s  %s\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PANOVID_CLI_PATH) + " --log-level warn " + args + " >/dev/null";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

struct Scratch {
  fs::path path;
  Scratch() {
    path = fs::temp_directory_path() / ("panovid_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() { fs::remove_all(path); }
};

Mask invert(const Mask& m) {
  Mask out(m.frames(), m.height(), m.width());
  for (std::size_t i = 0; i < m.data().size(); ++i) out.data()[i] = !m.data()[i];
  return out;
}

std::size_t fidelity_mismatches(const Video& out, const Video& in, const Mask& m) {
  std::size_t bad = 0;
  for (std::size_t p = 0; p < m.data().size(); ++p) {
    if (!m.data()[p]) continue;
    for (int c = 0; c < 3; ++c) bad += out.data()[p * 3 + c] != in.data()[p * 3 + c];
  }
  return bad;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Mat3 yaw(double deg) {
  const double a = deg * M_PI / 180.0;
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

Vec2 apply(const Mat3& h, const Vec2& p) {
  const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

double texture(double x, double y) {
  return 0.5 + 0.18 * std::sin(0.21 * x + 0.05 * y) * std::cos(0.17 * y - 0.03 * x) + 0.12 * std::sin(0.09 * x + 0.13 * y) +
         0.08 * std::cos(0.31 * x - 0.22 * y);
}

// Generates the default bench once and completes it with the given thread count.
struct OracleBench {
  fs::path dir;
  double seconds_t1 = 0.0;
  bool ok = false;
};

OracleBench& oracle_bench(const fs::path& scratch) {
  static OracleBench b;
  if (!b.dir.empty()) return b;
  b.dir = scratch / "bench";
  if (run_cli("synth-bench --src procedural --preset left-right-left --frames 88 --scene-width 512 --scene-height 128 "
              "--out " + b.dir.string()) != 0) {
    return b;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = run_cli("complete --job " + (b.dir / "job.json").string() + " --seed 0 --threads 1 --out " +
                         (b.dir / "out_t1").string());
  b.seconds_t1 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  b.ok = rc == 0;
  return b;
}

// ---------------------------------------------------------------- criteria

Outcome oracle_end_to_end(const fs::path& scratch) {
  const OracleBench& b = oracle_bench(scratch);
  if (!b.ok) return {false, "bench generation or completion failed"};
  const Video out = load_video(b.dir / "out_t1" / "seed_0" / "final");
  const Video gt = load_video(b.dir / "ground_truth");
  const Mask m0 = load_mask(b.dir / "out_t1" / "input" / "mask");
  const auto psnr = psnr_region(out, gt, invert(m0));
  if (!psnr) return {false, "empty evaluation region"};
  const bool pass = *psnr >= 45.0 && b.seconds_t1 <= 120.0;
  return {pass, "PSNR " + fmt(*psnr, 2) + " dB (>= 45), runtime " + fmt(b.seconds_t1, 1) + " s (<= 120)"};
}

Outcome input_fidelity(const fs::path& scratch) {
  const fs::path dir = scratch / "fidelity";
  if (run_cli("synth-bench --src procedural --preset left-right --frames 24 --scene-width 128 --scene-height 32 "
              "--crop-width 40 --out " + dir.string()) != 0) {
    return {false, "bench generation failed"};
  }
  std::ifstream jf(dir / "job.json");
  const json base = json::parse(jf);
  struct Variant {
    std::string name;
    json backend;
  };
  const json gsmall = {{"context_frames", 6}, {"native_height", 32}, {"native_width", 48}, {"sampling_steps", 12}};
  const json tsmall = {{"context_frames", 6}, {"native_height", 32}, {"native_width", 48}, {"patch_size", 8},
                       {"vocabulary_size", 32}};
  std::vector<Variant> variants = {
      {"oracle", json{{"kind", "oracle"}}},
      {"interpolation", json{{"kind", "interpolation"}, {"interpolation_variance", 0.002}}},
      {"diffusion-mock", json{{"kind", "diffusion-mock"}}},
      {"kmeans-token", json{{"kind", "kmeans-token"}}},
      {"kmeans-token-causal", json{{"kind", "kmeans-token"}, {"causal", true}}},
      {"external-gaussian", json{{"kind", "external"}, {"endpoint", std::string("exec:") + ECHO_BACKEND_PATH}}},
      {"external-token",
       json{{"kind", "external"}, {"flavor", "token"}, {"endpoint", std::string("exec:") + ECHO_BACKEND_PATH + " --flavor token"}}},
  };
  std::string detail;
  bool pass = true;
  for (auto& v : variants) {
    json job = base;
    const bool token = v.name.find("token") != std::string::npos;
    json backend = v.backend;
    if (v.name.rfind("external", 0) != 0) backend.update(token ? tsmall : gsmall);
    job["backend"] = backend;
    job["completion"] = {{"spatial_stride", token ? 16 : 24}, {"token_iterations", 4}};
    if (token) job["completion"]["align"] = true;
    job["output"] = {{"dir", (dir / ("out_" + v.name)).string()}};
    const fs::path jp = dir / ("job_" + v.name + ".json");
    std::ofstream(jp) << job.dump(2);
    if (run_cli("complete --job " + jp.string() + " --seed 1") != 0) {
      pass = false;
      detail += v.name + ": run failed; ";
      continue;
    }
    const fs::path od = dir / ("out_" + v.name);
    const Video out = load_video(od / "seed_1" / "final");
    const Video in = load_video(od / "input" / "canvas");
    const Mask m = load_mask(od / "input" / "mask");
    const std::size_t bad = fidelity_mismatches(out, in, m);
    pass = pass && bad == 0;
    detail += v.name + " " + std::to_string(bad) + " ";
  }
  return {pass, "mismatched samples per backend: " + detail};
}

struct StaticRun {
  std::size_t cols = 0, bad = 0;
  int width = 0;
  std::optional<double> epe;
};

// Static random texture seen through a panning crop, completed by the
// interpolation backend through the full coarse-to-fine pipeline.
StaticRun run_static(int n, int h, int w, int crop, const std::string& preset, const BackendDescriptor& desc,
                     int stride) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> d(0, 255);
  Video still(1, h, w, 3);
  for (float& v : still.data()) v = d(rng) / 255.0f;
  Video gt(n, h, w, 3);
  for (int t = 0; t < n; ++t) std::copy(still.data().begin(), still.data().end(), gt.data().begin() + t * still.data().size());
  const PanTrajectory traj = trajectory_preset(preset, w, n, 15.0, crop);
  const SyntheticCase sc = make_synthetic(gt, traj);
  const Video in = composite(gt, sc.canvas_mask, Video(n, h, w, 3, 0.0f));

  Backend b;
  b.gaussian = std::make_shared<InterpolationBackend>(desc);
  CoarseToFineOptions o;
  o.completion.spatial_stride = stride;
  const TemporalPyramid p = build_pyramid(in, sc.canvas_mask, desc.context_frames);
  const Video out = run_coarse_to_fine(p, b, o, 0).output;

  // Observed-ever columns: any frame saw any row of the column.
  StaticRun r;
  r.width = w;
  for (int x = 0; x < w; ++x) {
    bool seen = false;
    for (int t = 0; t < n && !seen; ++t) seen = sc.canvas_mask.at(t, 0, x);
    if (!seen) continue;
    ++r.cols;
    for (int t = 0; t < n; ++t)
      for (int y = 0; y < h; ++y)
        for (int c = 0; c < 3; ++c) r.bad += out.at(t, y, x, c) != gt.at(t, y, x, c);
  }
  EvalOptions eo;
  const Mask dynamic = split_static_dynamic(gt, eo);
  const Mask region = invert(sc.canvas_mask);
  Mask sta(n, h, w);
  for (std::size_t i = 0; i < sta.data().size(); ++i) sta.data()[i] = region.data()[i] && !dynamic.data()[i];
  r.epe = flow_epe(out, gt, sta, eo);
  return r;
}

Outcome static_interpolation() {
  // Bench geometry: 88 frames, 512x128 canvas, 128-px crop sweeping left-right-left.
  const BackendDescriptor desc = BackendDescriptor::gaussian_defaults();
  const StaticRun r = run_static(88, 128, 512, 128, "left-right-left", desc, 32);
  const bool pass = r.cols == static_cast<std::size_t>(r.width) && r.bad == 0 && r.epe && *r.epe == 0.0;

  // Informational: a short one-way pan sees its end columns only in the first
  // and last frames, which no coarse centre frame keeps.
  BackendDescriptor small = desc;
  small.context_frames = 8;
  small.native_height = 32;
  small.native_width = 32;
  small.sampling_steps = 16;
  const StaticRun s = run_static(24, 32, 128, 32, "left-right", small, 16);
  return {pass, std::to_string(r.cols) + "/" + std::to_string(r.width) + " columns observed, " +
                    std::to_string(r.bad) + " differing samples, static EPE " +
                    (r.epe ? fmt(*r.epe, 6) : std::string("n/a")) + "; short one-way pan: " +
                    std::to_string(s.bad) + " differing"};
}

class ConstantField final : public GaussianBackend {
 public:
  ConstantField(BackendDescriptor d, float mean, float var) : d_(d), mean_(mean), var_(var) {}
  const BackendDescriptor& descriptor() const override { return d_; }
  GaussianField predict(const GaussianRequest& r) const override {
    const Video& w = r.window;
    return {Video(w.frames(), w.height(), w.width(), 3, mean_), Video(w.frames(), w.height(), w.width(), 3, var_)};
  }

 private:
  BackendDescriptor d_;
  float mean_, var_;
};

Outcome aggregation_statistics() {
  const float mu = 0.4f, sigma2 = 0.01f;
  BackendDescriptor d = BackendDescriptor::gaussian_defaults();
  d.context_frames = 1;
  d.native_height = 1;
  d.native_width = 8;
  d.sampling_steps = 4;
  const ConstantField mock(d, mu, sigma2);
  const WindowLayout layout = make_layout(12, 8, 4);  // windows at 0 and 4, overlap 4..7
  const NoiseSchedule noise = NoiseSchedule::linear(4);
  const Video canvas(1, 1, 12, 3, 0.0f);
  const Mask none(1, 1, 12);
  const int samples = 10000, pixel = 6;  // midpoint of the overlap
  double s = 0, s2 = 0;
  for (int k = 0; k < samples; ++k) {
    std::vector<GaussianField> fields;
    for (int i = 0; i < layout.windows(); ++i) {
      Video win(1, 1, 8, 3);
      Mask pins(1, 1, 8);
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) win.at(0, 0, x, c) = canvas.at(0, 0, layout.offsets[i] + x, c);
      fields.push_back(gaussian_predict(mock, {win, pins, win, 0, 4, noise, {}, static_cast<std::uint64_t>(k)}));
    }
    const GaussianField agg = aggregate_gaussian(fields, layout);
    Video draw;
    sample_gaussian(agg, CounterRng(static_cast<std::uint64_t>(k), {0x5a3e}), draw);
    const double v = draw.at(0, 0, pixel, 0);
    s += v;
    s2 += v * v;
  }
  const double mean = s / samples, var = s2 / samples - mean * mean;
  const double sigma = std::sqrt(sigma2);
  const bool mean_ok = std::abs(mean - mu) <= 4 * sigma / 100;
  const bool var_ok = std::abs(var / sigma2 - 1.0) <= 0.05;
  const auto tw = interval_weights({0, 2}, 4, 6, WeightMode::Tent);
  const bool tent_ok = std::abs(tw[0][2] - 0.75f) <= 1e-6 && std::abs(tw[1][0] - 0.25f) <= 1e-6;
  return {mean_ok && var_ok && tent_ok, "mean " + fmt(mean, 5) + " (|d| <= " + fmt(4 * sigma / 100, 4) + "), var ratio " +
                                            fmt(var / sigma2, 4) + ", tent " + fmt(tw[0][2], 6) + "/" + fmt(tw[1][0], 6)};
}

Outcome registration_accuracy() {
  const Intrinsics k = Intrinsics::centered(300, 320, 240);
  const Mat3 h = k.matrix() * yaw(5) * k.matrix().inverse();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ux(0, 320), uy(0, 240);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<Match> ms;
  for (int i = 0; i < 300; ++i) {
    Match m;
    m.src = {ux(rng), uy(rng)};
    m.dst = i < 90 ? Vec2(ux(rng), uy(rng)) : apply(h, m.src) + Vec2(g(rng), g(rng));
    ms.push_back(m);
  }
  std::shuffle(ms.begin(), ms.end(), rng);
  const Mat3 est = estimate_pair_homography(ms, {}, "acceptance");
  double corner = 0;
  for (const Vec2& c : {Vec2(0, 0), Vec2(320, 0), Vec2(0, 240), Vec2(320, 240)})
    corner = std::max(corner, (apply(est, c) - apply(h, c)).norm());

  const int w = 96, hh = 64;
  Video v(3, hh, w, 3, 0.0f);
  for (int t = 0; t < 3; ++t)
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = x + 0.5 - 0.5 * w, dy = y + 0.5 - 0.5 * hh;
        const float val = static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2 * 2.5 * 2.5)));
        for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = val;
      }
  CameraModel cam;
  cam.intrinsics = Intrinsics::centered(300, w, hh);
  for (int t = 0; t < 3; ++t) cam.rotations.push_back(yaw(10.0 * t));
  const CanvasGeometry geom = auto_fit_canvas(cam, w, hh);
  const CanvasProjection proj = project_to_canvas(v, cam, geom);
  double sw = 0, sc = 0, sr = 0;
  for (int r = 0; r < geom.height; ++r)
    for (int c = 0; c < geom.width; ++c) {
      const double val = proj.canvas.at(2, r, c, 0);
      sw += val;
      sc += val * c;
      sr += val * r;
    }
  const double phi = geom.angles_at(sc / sw, sr / sw)(1) * 180.0 / M_PI;
  const bool pass = corner <= 0.5 && std::abs(phi - 20.0) <= 0.1;
  return {pass, "corner error " + fmt(corner, 3) + " px (<= 0.5), frame-2 centre phi " + fmt(phi, 3) + " deg"};
}

Outcome pyramid_schedule() {
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Video x(88, 4, 6, 3);
  for (float& v : x.data()) v = u(rng);
  const TemporalPyramid p = build_pyramid(x, Mask(88, 4, 6, 1), 11);
  const bool sizes_ok = p.sizes() == std::vector<int>{88, 44, 22, 11};
  bool widths_ok = p.levels.size() == 4;
  for (int k = 0; widths_ok && k < 4; ++k) widths_ok = p.levels[k].filter_width == (1 << k);
  // DC: the mean over each interior window equals the mean of the frames it covers.
  double worst = 0;
  for (int k = 1; k < static_cast<int>(p.levels.size()); ++k) {
    const auto& lv = p.levels[k];
    for (int j = 1; j + 1 < lv.frames(); ++j)
      for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 6; ++xx)
          for (int c = 0; c < 3; ++c) {
            double fine = 0;
            for (int t = lv.spans[j].first; t < lv.spans[j].last; ++t) fine += x.at(t, y, xx, c);
            fine /= lv.spans[j].last - lv.spans[j].first;
            worst = std::max(worst, std::abs(fine - lv.video.at(j, y, xx, c)));
          }
  }
  std::string sizes;
  for (int s : p.sizes()) sizes += std::to_string(s) + " ";
  return {sizes_ok && widths_ok && worst <= 1e-5, "levels " + sizes + "DC error " + fmt(worst * 1e6, 3) + "e-6"};
}

Outcome fast_motion_schedule() {
  const Mask m(4, 2, 2);
  const MaskSchedule s = build_mask_schedule(m, {0, 2}, 256, ScheduleMode::FastMotion);
  int first_free = -1;
  for (int step = 0; step < 256 && first_free < 0; ++step)
    if (!s.frame_full(step, 0)) first_free = step;
  const bool others = !s.frame_full(0, 1) && s.frame_full(31, 2) && !s.frame_full(32, 2);
  return {first_free == 32 && others, "full-frame pinning ends at step " + std::to_string(first_free) + " of 256"};
}

Outcome causal_partition() {
  const int n = 12, h = 16, w = 96, crop = 32;
  const Video src = make_source_scene(n, h, w, 15.0, 4);
  const SyntheticCase sc = make_synthetic(src, trajectory_preset("left-right", w, n, 15.0, crop));
  const Video in = composite(src, sc.canvas_mask, Video(n, h, w, 3, 0.0f));
  BackendDescriptor d = BackendDescriptor::token_defaults();
  d.context_frames = 6;
  d.native_height = h;
  d.native_width = 32;
  d.patch_size = 4;
  d.vocabulary_size = 32;
  d.causal = true;
  auto kb = std::make_shared<KMeansTokenBackend>(d);
  kb->prepare(in, sc.canvas_mask);
  Backend b;
  b.token = kb;
  CompletionOptions o;
  o.spatial_stride = 16;
  o.token_iterations = 4;
  const LevelInput li{in, sc.canvas_mask, {}, 0, false};
  const CausalCompletion cc = complete_base_causal(li, b, o, 7);

  // Independent passes.
  const Video fwd = complete_base(li, b, o, 7);
  const LevelInput rev{reverse_frames(in), reverse_frames(sc.canvas_mask), {}, 0, true};
  const Video bwd = reverse_frames(complete_base(rev, b, o, 7));

  std::size_t total = 0, agree = 0, ambiguous = 0;
  for (int t = 0; t < n; ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool earlier = false;
        for (int s = 0; s <= t && !earlier; ++s) earlier = sc.canvas_mask.at(s, y, x);
        const Video& want = earlier ? fwd : bwd;
        const Video& other = earlier ? bwd : fwd;
        bool match = cc.forward.at(t, y, x) == (earlier ? 1 : 0);
        bool differs = false;
        for (int c = 0; c < 3; ++c) {
          match = match && cc.video.at(t, y, x, c) == want.at(t, y, x, c);
          differs = differs || want.at(t, y, x, c) != other.at(t, y, x, c);
        }
        ambiguous += !differs;
        agree += match;
        ++total;
      }
  return {agree == total, fmt(100.0 * agree / total, 2) + "% of " + std::to_string(total) +
                              " pixels follow the first-valid rule (" + std::to_string(ambiguous) +
                              " where both passes agree)"};
}

Outcome flow_tooling() {
  const int w = 96, h = 80;
  Plane a(w, h), b(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      a.at(x, y) = static_cast<float>(texture(x, y));
      b.at(x, y) = static_cast<float>(texture(x - 2.0, y - 3.0));
    }
  const DenseFlow f = densify(estimate_grid_flow(a, b));
  double worst = 0;
  for (int y = 16; y < h - 16; ++y)
    for (int x = 16; x < w - 16; ++x)
      worst = std::max({worst, std::abs(f.u[f.index(x, y)] - 2.0), std::abs(f.v[f.index(x, y)] - 3.0)});

  const int n = 4, hw = 48;
  Video v(n, hw, w, 3);
  for (int t = 0; t < n; ++t)
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < w; ++x) {
        const double s = x < w / 2 ? 0.0 : 2.0 * t;
        for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = static_cast<float>(texture(x - s, y));
      }
  EvalOptions eo;
  eo.flow.grid = 8;
  const Mask dyn = split_static_dynamic(v, eo);
  std::size_t checked = 0, right = 0;
  for (int t = 0; t < n; ++t)
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < w; ++x) {
        // Exclude the boundary band and the image rim, where content leaves the frame.
        if (std::abs(x + 0.5 - w / 2.0) <= 1.5 || x < 8 || x >= w - 8 || y < 8 || y >= hw - 8) continue;
        ++checked;
        right += dyn.at(t, y, x) == (x >= w / 2 ? 1 : 0);
      }
  const bool pass = worst <= 0.1 && right == checked;
  return {pass, "shift error " + fmt(worst, 4) + " px, split accuracy " + fmt(100.0 * right / checked, 2) + "%"};
}

Outcome thread_determinism(const fs::path& scratch) {
  const OracleBench& b = oracle_bench(scratch);
  if (!b.ok) return {false, "bench completion failed"};
  if (run_cli("complete --job " + (b.dir / "job.json").string() + " --seed 0 --threads 4 --out " +
              (b.dir / "out_t4").string()) != 0) {
    return {false, "threaded run failed"};
  }
  // A stochastic backend as well.
  std::ifstream jf(b.dir / "job.json");
  json job = json::parse(jf);
  job["backend"] = {{"kind", "diffusion-mock"}, {"context_frames", 11}, {"native_height", 32}, {"native_width", 48},
                    {"sampling_steps", 16}};
  job["completion"] = {{"spatial_stride", 24}};
  std::ofstream(b.dir / "mock.json") << job.dump(2);
  for (int t : {1, 3}) {
    if (run_cli("complete --job " + (b.dir / "mock.json").string() + " --seed 2 --threads " + std::to_string(t) +
                " --out " + (b.dir / ("mock_t" + std::to_string(t))).string()) != 0) {
      return {false, "mock run failed"};
    }
  }
  std::size_t files = 0, differing = 0;
  auto compare = [&](const fs::path& x, const fs::path& y) {
    for (const auto& e : fs::recursive_directory_iterator(x)) {
      if (!e.is_regular_file() || e.path().filename() == "resolved_config.json") continue;
      ++files;
      const fs::path other = y / fs::relative(e.path(), x);
      differing += !fs::exists(other) || slurp(e.path()) != slurp(other);
    }
  };
  compare(b.dir / "out_t1", b.dir / "out_t4");
  compare(b.dir / "mock_t1", b.dir / "mock_t3");
  return {files > 0 && differing == 0,
          std::to_string(differing) + " of " + std::to_string(files) + " output files differ across --threads"};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  Scratch scratch;
  report(1, "oracle end-to-end", [&] { return oracle_end_to_end(scratch.path); });
  report(2, "input fidelity", [&] { return input_fidelity(scratch.path); });
  report(3, "static interpolation", [] { return static_interpolation(); });
  report(4, "aggregation statistics", [] { return aggregation_statistics(); });
  report(5, "registration accuracy", [] { return registration_accuracy(); });
  report(6, "pyramid schedule", [] { return pyramid_schedule(); });
  report(7, "mask-schedule arithmetic", [] { return fast_motion_schedule(); });
  report(8, "causal fwd/bwd partition", [] { return causal_partition(); });
  report(9, "flow tooling", [] { return flow_tooling(); });
  report(10, "thread determinism", [&] { return thread_determinism(scratch.path); });
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

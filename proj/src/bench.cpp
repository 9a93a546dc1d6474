#include "panovid/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "panovid/error.hpp"
#include "panovid/rng.hpp"

namespace panovid {

namespace fs = std::filesystem;
using nlohmann::json;

int PanTrajectory::left(int t) const {
  if (control_points.empty()) fail(ErrorKind::Config, "trajectory has no control points");
  const double x = t;
  if (x <= control_points.front().first) return static_cast<int>(std::lround(control_points.front().second));
  for (std::size_t i = 1; i < control_points.size(); ++i) {
    const auto [t0, l0] = control_points[i - 1];
    const auto [t1, l1] = control_points[i];
    if (x <= t1) {
      const double s = t1 > t0 ? (x - t0) / (t1 - t0) : 1.0;
      return static_cast<int>(std::lround(l0 + s * (l1 - l0)));
    }
  }
  return static_cast<int>(std::lround(control_points.back().second));
}

std::vector<std::string> trajectory_preset_names() { return {"left-right", "left-right-left", "static"}; }

PanTrajectory trajectory_preset(const std::string& name, int canvas_width, int frames, double frame_rate,
                                int crop_width) {
  PanTrajectory t;
  t.frames = frames;
  t.frame_rate = frame_rate;
  t.crop_width = crop_width > 0 ? crop_width : canvas_width / 4;
  const double span = canvas_width - t.crop_width;
  const double last = frames - 1;
  if (name == "left-right") {
    t.control_points = {{0.0, 0.0}, {last, span}};
  } else if (name == "left-right-left") {
    // Turn on a whole frame so both canvas edges are observed.
    t.control_points = {{0.0, 0.0}, {std::floor(0.5 * frames), span}, {last, 0.0}};
  } else if (name == "static") {
    t.control_points = {{0.0, std::floor(0.5 * span)}};
  } else {
    fail(ErrorKind::Config, "unknown trajectory preset '" + name + "'");
  }
  return t;
}

json trajectory_to_json(const PanTrajectory& traj) {
  json pts = json::array();
  for (const auto& [f, l] : traj.control_points) pts.push_back({f, l});
  return {{"frames", traj.frames},
          {"frame_rate", traj.frame_rate},
          {"crop_width", traj.crop_width},
          {"crop_height", traj.crop_height},
          {"control_points", pts}};
}

PanTrajectory trajectory_from_json(const json& j) {
  PanTrajectory t;
  try {
    t.frames = j.at("frames").get<int>();
    t.frame_rate = j.value("frame_rate", 15.0);
    t.crop_width = j.at("crop_width").get<int>();
    t.crop_height = j.value("crop_height", 0);
    for (const auto& p : j.at("control_points")) {
      if (!p.is_array() || p.size() != 2) fail(ErrorKind::Parse, "trajectory: control point must be [frame, left]");
      t.control_points.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("trajectory: ") + e.what());
  }
  if (t.frames < 1 || t.crop_width < 1 || t.control_points.empty()) {
    fail(ErrorKind::Config, "trajectory needs frames, crop_width and control points");
  }
  return t;
}

PanTrajectory load_trajectory(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open trajectory " + path.string());
  try {
    return trajectory_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void save_trajectory(const PanTrajectory& traj, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << trajectory_to_json(traj).dump(2) << "\n";
}

SyntheticCase make_synthetic(const Video& source, const PanTrajectory& traj) {
  const int w = source.width(), h = source.height();
  const int cw = traj.crop_width, ch = traj.crop_height > 0 ? traj.crop_height : h;
  if (source.frames() < traj.frames) {
    fail(ErrorKind::Config, "source has " + std::to_string(source.frames()) + " frames, trajectory needs " +
                                std::to_string(traj.frames));
  }
  if (cw > w || ch > h) fail(ErrorKind::Config, "crop window larger than the source");
  const int top = (h - ch) / 2;

  SyntheticCase out;
  out.input = Video(traj.frames, ch, cw, 3);
  out.input.frame_rate = traj.frame_rate;
  out.canvas_mask = Mask(traj.frames, h, w);
  out.ground_truth = slice_frames(source, 0, traj.frames);
  out.ground_truth.frame_rate = traj.frame_rate;
  out.camera.mode = CameraMode::CanvasCrop;
  out.camera.intrinsics = Intrinsics::centered(cw, cw, ch);
  out.camera.canvas_width = w;
  out.camera.canvas_height = h;
  for (int t = 0; t < traj.frames; ++t) {
    const int left = traj.left(t);
    if (left < 0 || left + cw > w) {
      fail(ErrorKind::Config, "trajectory leaves the source at frame " + std::to_string(t) + " (left edge " +
                                  std::to_string(left) + ")");
    }
    for (int y = 0; y < ch; ++y) {
      const float* src = &source.data()[source.index(t, top + y, left)];
      std::copy(src, src + cw * 3, &out.input.data()[out.input.index(t, y, 0)]);
      std::fill_n(&out.canvas_mask.data()[out.canvas_mask.index(t, top + y, left)], cw, 1);
    }
    out.camera.rotations.push_back(Mat3::Identity());
    out.camera.canvas_offsets.push_back({left, top});
  }
  return out;
}

Video make_source_scene(int frames, int height, int width, double frame_rate, std::uint64_t seed) {
  const CounterRng rng(seed, {0x5ce2e});
  std::uint64_t c = 0;
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves[3];
  for (auto& list : waves) {
    for (int k = 0; k < 10; ++k) {
      const double period = 16.0 + 112.0 * rng.uniform(c++);
      const double angle = 2.0 * M_PI * rng.uniform(c++);
      list.push_back({std::cos(angle) / period, std::sin(angle) / period, 2.0 * M_PI * rng.uniform(c++),
                      0.035 + 0.03 * rng.uniform(c++)});
    }
  }
  struct Blob {
    double x, y, vx, vy, sigma, amp[3];
  };
  std::vector<Blob> blobs;
  for (int k = 0; k < 4; ++k) {
    Blob b{};
    b.x = width * rng.uniform(c++);
    b.y = height * (0.25 + 0.5 * rng.uniform(c++));
    const double dir = rng.uniform(c++) < 0.5 ? -1.0 : 1.0;
    b.vx = dir * (0.1 + 0.15 * rng.uniform(c++));
    b.vy = 0.05 * (rng.uniform(c++) - 0.5);
    b.sigma = 10.0 + 8.0 * rng.uniform(c++);
    for (double& a : b.amp) a = 0.25 * (rng.uniform(c++) - 0.5);
    blobs.push_back(b);
  }

  Plane base[3];
  for (int ch = 0; ch < 3; ++ch) {
    base[ch] = Plane(width, height, 0.5f);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double v = 0.5;
        for (const auto& wv : waves[ch]) v += wv.amp * std::sin(2.0 * M_PI * (wv.fx * x + wv.fy * y) + wv.phase);
        base[ch].at(x, y) = static_cast<float>(v);
      }
    }
  }

  Video out(frames, height, width, 3);
  out.frame_rate = frame_rate;
  for (int t = 0; t < frames; ++t) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double px[3] = {base[0].at(x, y), base[1].at(x, y), base[2].at(x, y)};
        for (const auto& b : blobs) {
          const double dx = x + 0.5 - (b.x + b.vx * t), dy = y + 0.5 - (b.y + b.vy * t);
          const double g = std::exp(-0.5 * (dx * dx + dy * dy) / (b.sigma * b.sigma));
          for (int ch = 0; ch < 3; ++ch) px[ch] += b.amp[ch] * g;
        }
        for (int ch = 0; ch < 3; ++ch) out.at(t, y, x, ch) = static_cast<float>(std::clamp(px[ch], 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace panovid

#include "panovid/eval.hpp"

#include <algorithm>
#include <cmath>

#include "panovid/error.hpp"
#include "panovid/parallel.hpp"
#include "panovid/video_io.hpp"

namespace panovid {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<DenseFlow> consecutive_flows(const Video& v, const FlowOptions& options, int threads) {
  const int n = std::max(0, v.frames() - 1);
  std::vector<DenseFlow> flows(n);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t t) {
    const Plane a = luminance(v, static_cast<int>(t)), b = luminance(v, static_cast<int>(t) + 1);
    flows[t] = refine_flow(estimate_grid_flow(a, b, nullptr, options), a, b);
  });
  return flows;
}

Mask split_from_flows(const std::vector<DenseFlow>& flows, int frames, float threshold) {
  if (flows.empty()) fail(ErrorKind::Dimension, "static/dynamic split needs at least two frames");
  const int w = flows.front().width, h = flows.front().height;
  Mask out(frames, h, w);
  for (int t = 0; t < frames; ++t) {
    const DenseFlow& f = flows[std::min<int>(t, static_cast<int>(flows.size()) - 1)];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(t, y, x) = f.magnitude(x, y) > threshold;
    }
  }
  return out;
}

Mask split_static_dynamic(const Video& gt, const EvalOptions& options) {
  return split_from_flows(consecutive_flows(gt, options.flow, options.threads), gt.frames(), options.dynamic_threshold);
}

std::optional<double> psnr_region(const Video& out, const Video& gt, const Mask& region) {
  if (!out.same_shape(gt)) fail(ErrorKind::Dimension, "psnr: output and ground truth differ in shape");
  require_same_dims(out, region, "psnr");
  double sse = 0.0;
  std::size_t n = 0;
  const int ch = out.channels();
  for (std::size_t p = 0; p < region.data().size(); ++p) {
    if (!region.data()[p]) continue;
    for (int c = 0; c < ch; ++c) {
      const double d = static_cast<double>(out.data()[p * ch + c]) - gt.data()[p * ch + c];
      sse += d * d;
    }
    n += ch;
  }
  if (n == 0) return std::nullopt;
  const double mse = sse / n;
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

std::optional<double> flow_epe(const std::vector<DenseFlow>& out_flows, const std::vector<DenseFlow>& gt_flows,
                               const Mask& region) {
  if (out_flows.size() != gt_flows.size()) fail(ErrorKind::Dimension, "epe: flow sequences differ in length");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < gt_flows.size(); ++t) {
    const DenseFlow& a = out_flows[t];
    const DenseFlow& b = gt_flows[t];
    for (int y = 0; y < b.height; ++y) {
      for (int x = 0; x < b.width; ++x) {
        if (!region.at(static_cast<int>(t), y, x)) continue;
        const std::size_t i = b.index(x, y);
        sum += std::hypot(static_cast<double>(a.u[i]) - b.u[i], static_cast<double>(a.v[i]) - b.v[i]);
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::optional<double> flow_epe(const Video& out, const Video& gt, const Mask& region, const EvalOptions& options) {
  if (!out.same_shape(gt)) fail(ErrorKind::Dimension, "epe: output and ground truth differ in shape");
  require_same_dims(out, region, "epe");
  return flow_epe(consecutive_flows(out, options.flow, options.threads),
                  consecutive_flows(gt, options.flow, options.threads), region);
}

std::optional<double> ssim_region(const Video& out, const Video& gt, const Mask& region) {
  if (!out.same_shape(gt)) fail(ErrorKind::Dimension, "ssim: output and ground truth differ in shape");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  constexpr int r = 3;
  double sum = 0.0;
  std::size_t n = 0;
  for (int t = 0; t < out.frames(); ++t) {
    const Plane a = luminance(out, t), b = luminance(gt, t);
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        if (!region.at(t, y, x)) continue;
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        int k = 0;
        for (int yy = std::max(0, y - r); yy <= std::min(a.height - 1, y + r); ++yy) {
          for (int xx = std::max(0, x - r); xx <= std::min(a.width - 1, x + r); ++xx) {
            const double va = a.at(xx, yy), vb = b.at(xx, yy);
            ma += va;
            mb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
            ++k;
          }
        }
        ma /= k;
        mb /= k;
        const double va = saa / k - ma * ma, vb = sbb / k - mb * mb, cov = sab / k - ma * mb;
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

Mask mask_and(const Mask& a, const Mask& b, bool invert_b = false) {
  Mask out(a.frames(), a.height(), a.width());
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] && (invert_b ? !b.data()[i] : b.data()[i]);
  return out;
}

Mask mask_not(const Mask& a) {
  Mask out(a.frames(), a.height(), a.width());
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = !a.data()[i];
  return out;
}

}  // namespace

json evaluate(const Video& out, const Video* gt, const Mask& m0, const Video* input_canvas, const EvalOptions& options) {
  require_same_dims(out, m0, "evaluate");
  json j;
  j["schema_version"] = 1;
  j["frames"] = out.frames();
  j["width"] = out.width();
  j["height"] = out.height();

  if (input_canvas) {
    require_same_dims(*input_canvas, m0, "evaluate");
    double max_err = 0.0;
    for (std::size_t p = 0; p < m0.data().size(); ++p) {
      if (!m0.data()[p]) continue;
      for (int c = 0; c < 3; ++c) {
        max_err = std::max(max_err, std::abs(static_cast<double>(out.data()[p * 3 + c]) - input_canvas->data()[p * 3 + c]));
      }
    }
    j["input_fidelity"] = {
        {"psnr", opt(psnr_region(out, *input_canvas, m0))}, {"max_abs_error", max_err}, {"bit_exact", max_err == 0.0}};
  }
  if (!gt) {
    j["ground_truth"] = false;
    return j;
  }
  if (!out.same_shape(*gt)) fail(ErrorKind::Dimension, "evaluate: output and ground truth differ in shape");
  j["ground_truth"] = true;

  const auto gt_flows = consecutive_flows(*gt, options.flow, options.threads);
  const auto out_flows = consecutive_flows(out, options.flow, options.threads);
  const Mask dynamic = split_from_flows(gt_flows, gt->frames(), options.dynamic_threshold);
  const Mask inpainted = mask_not(m0);
  const Mask dyn = mask_and(inpainted, dynamic);
  const Mask sta = mask_and(inpainted, dynamic, true);

  j["eval_region"] = "pixels outside the input mask";
  j["psnr"] = {{"all", opt(psnr_region(out, *gt, inpainted))},
               {"static", opt(psnr_region(out, *gt, sta))},
               {"dynamic", opt(psnr_region(out, *gt, dyn))}};
  j["epe"] = {{"all", opt(flow_epe(out_flows, gt_flows, inpainted))},
              {"static", opt(flow_epe(out_flows, gt_flows, sta))},
              {"dynamic", opt(flow_epe(out_flows, gt_flows, dyn))}};
  j["auxiliary"] = {{"ssim", opt(ssim_region(out, *gt, inpainted))},
                    {"note", "SSIM is an auxiliary metric, not part of the reference protocol"}};

  json per_psnr = json::array(), per_dyn = json::array();
  for (int t = 0; t < out.frames(); ++t) {
    const Video o = slice_frames(out, t, t + 1), g = slice_frames(*gt, t, t + 1);
    per_psnr.push_back(opt(psnr_region(o, g, slice_frames(inpainted, t, t + 1))));
    const Mask d = slice_frames(dynamic, t, t + 1);
    per_dyn.push_back(static_cast<double>(d.count()) / d.frame_size());
  }
  j["per_frame"] = {{"psnr", per_psnr}, {"dynamic_fraction", per_dyn}};
  j["flow_params"] = {{"grid", options.flow.grid},
                      {"octaves", options.flow.octaves},
                      {"iterations", options.flow.iterations},
                      {"max_displacement", options.flow.max_displacement},
                      {"min_support", options.flow.min_support},
                      {"dynamic_threshold", options.dynamic_threshold}};
  return j;
}

void write_strips(const Video& out, const Video* gt, const Mask& m0, const fs::path& dir, int count) {
  fs::create_directories(dir);
  const int h = out.height(), w = out.width();
  const int rows = gt ? 2 : 1;
  for (int k = 0; k < count && k < out.frames(); ++k) {
    const int t = count == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(k) * (out.frames() - 1) / (count - 1)));
    PngImage img{w, h * rows, 3, 8, std::vector<std::uint16_t>(static_cast<std::size_t>(w) * h * rows * 3)};
    auto put = [&](int row, int y, int x, int c, float v) {
      img.samples[((static_cast<std::size_t>(row) * h + y) * w + x) * 3 + c] = quantize(v, 8);
    };
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool in = m0.at(t, y, x);
        const bool edge = in && (x == 0 || y == 0 || x == w - 1 || y == h - 1 || !m0.at(t, y, x - 1) ||
                                 !m0.at(t, y, x + 1) || !m0.at(t, y - 1, x) || !m0.at(t, y + 1, x));
        for (int c = 0; c < 3; ++c) {
          if (gt) put(0, y, x, c, gt->at(t, y, x, c));
          const float v = out.at(t, y, x, c);
          put(rows - 1, y, x, c, edge ? 1.0f : (in ? 0.6f * v : v));
        }
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "strip_%06d.png", t);
    write_png(img, dir / name);
  }
}

}  // namespace panovid

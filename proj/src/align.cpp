#include "panovid/align.hpp"

#include <algorithm>
#include <cmath>

#include "panovid/error.hpp"
#include "panovid/parallel.hpp"

namespace panovid {

std::pair<float, float> GridFlow::at(float x, float y) const {
  const float fx = std::clamp(x / grid, 0.0f, static_cast<float>(nodes_x - 1));
  const float fy = std::clamp(y / grid, 0.0f, static_cast<float>(nodes_y - 1));
  const int i0 = std::min(static_cast<int>(fx), std::max(0, nodes_x - 2));
  const int j0 = std::min(static_cast<int>(fy), std::max(0, nodes_y - 2));
  const int i1 = std::min(i0 + 1, nodes_x - 1), j1 = std::min(j0 + 1, nodes_y - 1);
  const float ax = fx - i0, ay = fy - j0;
  auto lerp2 = [&](const std::vector<float>& f) {
    const float top = (1 - ax) * f[node(i0, j0)] + ax * f[node(i1, j0)];
    const float bot = (1 - ax) * f[node(i0, j1)] + ax * f[node(i1, j1)];
    return (1 - ay) * top + ay * bot;
  };
  return {lerp2(dx), lerp2(dy)};
}

float DenseFlow::magnitude(int x, int y) const {
  const std::size_t i = index(x, y);
  return std::hypot(u[i], v[i]);
}

namespace {

Plane gradient_x(const Plane& p) {
  Plane g(p.width, p.height);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) g.at(x, y) = 0.5f * (p.clamped(x + 1, y) - p.clamped(x - 1, y));
  }
  return g;
}

Plane gradient_y(const Plane& p) {
  Plane g(p.width, p.height);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) g.at(x, y) = 0.5f * (p.clamped(x, y + 1) - p.clamped(x, y - 1));
  }
  return g;
}

// Neighbour-average fill for nodes without a reliable estimate.
void inherit(GridFlow& f, std::vector<std::uint8_t>& ok) {
  bool any = std::any_of(ok.begin(), ok.end(), [](std::uint8_t v) { return v != 0; });
  if (!any) return;
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<std::uint8_t> next = ok;
    for (int j = 0; j < f.nodes_y; ++j) {
      for (int i = 0; i < f.nodes_x; ++i) {
        const std::size_t n = f.node(i, j);
        if (ok[n]) continue;
        float sx = 0, sy = 0;
        int cnt = 0;
        for (int dj = -1; dj <= 1; ++dj) {
          for (int di = -1; di <= 1; ++di) {
            const int a = i + di, b = j + dj;
            if (a < 0 || b < 0 || a >= f.nodes_x || b >= f.nodes_y || !ok[f.node(a, b)]) continue;
            sx += f.dx[f.node(a, b)];
            sy += f.dy[f.node(a, b)];
            ++cnt;
          }
        }
        if (!cnt) continue;
        f.dx[n] = sx / cnt;
        f.dy[n] = sy / cnt;
        next[n] = 1;
        changed = true;
      }
    }
    ok.swap(next);
  }
}

}  // namespace

GridFlow estimate_grid_flow(const Plane& src, const Plane& dst, const Plane* valid, const FlowOptions& o) {
  if (src.width != dst.width || src.height != dst.height) fail(ErrorKind::Dimension, "flow: frame sizes differ");
  if (valid && (valid->width != src.width || valid->height != src.height)) {
    fail(ErrorKind::Dimension, "flow: mask size differs from frame");
  }
  if (o.grid < 2 || o.octaves < 1 || o.iterations < 1) fail(ErrorKind::Config, "flow: invalid options");
  GridFlow f;
  f.grid = o.grid;
  f.width = src.width;
  f.height = src.height;
  f.nodes_x = (src.width - 1 + o.grid - 1) / o.grid + 1;
  f.nodes_y = (src.height - 1 + o.grid - 1) / o.grid + 1;
  f.dx.assign(static_cast<std::size_t>(f.nodes_x) * f.nodes_y, 0.0f);
  f.dy.assign(f.dx.size(), 0.0f);

  std::vector<Plane> sp{src}, dp{dst}, vp;
  if (valid) vp.push_back(*valid);
  for (int k = 1; k < o.octaves && std::min(sp.back().width, sp.back().height) >= 16; ++k) {
    sp.push_back(pyr_down(sp.back()));
    dp.push_back(pyr_down(dp.back()));
    if (valid) vp.push_back(pyr_down(vp.back()));
  }

  for (int oct = static_cast<int>(sp.size()) - 1; oct >= 0; --oct) {
    const float scale = static_cast<float>(1 << oct);
    const Plane& S = sp[oct];
    const Plane& D = dp[oct];
    const Plane* V = valid ? &vp[oct] : nullptr;
    const Plane gx = gradient_x(S), gy = gradient_y(S);
    const int radius = std::max(3, (o.grid + (1 << oct) - 1) >> oct);
    const float area = static_cast<float>((2 * radius + 1) * (2 * radius + 1));
    std::vector<std::uint8_t> ok(f.dx.size(), 0);

    for (int j = 0; j < f.nodes_y; ++j) {
      for (int i = 0; i < f.nodes_x; ++i) {
        const std::size_t n = f.node(i, j);
        const int cx = static_cast<int>(std::lround(i * o.grid / scale));
        const int cy = static_cast<int>(std::lround(j * o.grid / scale));
        double du = f.dx[n] / scale, dv = f.dy[n] / scale;
        bool good = false;
        for (int it = 0; it < o.iterations; ++it) {
          double h00 = 0, h01 = 0, h11 = 0, b0 = 0, b1 = 0;
          int count = 0;
          for (int y = std::max(0, cy - radius); y <= std::min(S.height - 1, cy + radius); ++y) {
            for (int x = std::max(0, cx - radius); x <= std::min(S.width - 1, cx + radius); ++x) {
              if (V && V->at(x, y) < 0.999f) continue;
              const double qx = x + du, qy = y + dv;
              if (qx < 0 || qy < 0 || qx > S.width - 1 || qy > S.height - 1) continue;
              const double r = S.at(x, y) - D.sample(static_cast<float>(qx), static_cast<float>(qy));
              const double ax = gx.at(x, y), ay = gy.at(x, y);
              h00 += ax * ax;
              h01 += ax * ay;
              h11 += ay * ay;
              b0 += ax * r;
              b1 += ay * r;
              ++count;
            }
          }
          if (count < o.min_support * area) break;
          const double tr = 0.5 * (h00 + h11);
          const double min_eig = tr - std::sqrt(std::max(0.0, tr * tr - (h00 * h11 - h01 * h01)));
          if (min_eig / count < o.min_eigenvalue) break;
          const double det = h00 * h11 - h01 * h01;
          const double su = (h11 * b0 - h01 * b1) / det, sv = (h00 * b1 - h01 * b0) / det;
          du += su;
          dv += sv;
          good = true;
          if (su * su + sv * sv < 1e-6) break;
        }
        if (good) {
          f.dx[n] = static_cast<float>(du * scale);
          f.dy[n] = static_cast<float>(dv * scale);
          const float mag = std::hypot(f.dx[n], f.dy[n]);
          if (mag > o.max_displacement) {
            f.dx[n] *= o.max_displacement / mag;
            f.dy[n] *= o.max_displacement / mag;
          }
          ok[n] = 1;
        }
      }
    }
    inherit(f, ok);
  }
  return f;
}

DenseFlow densify(const GridFlow& flow) {
  DenseFlow d{flow.width, flow.height, std::vector<float>(static_cast<std::size_t>(flow.width) * flow.height),
              std::vector<float>(static_cast<std::size_t>(flow.width) * flow.height)};
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const auto [u, v] = flow.at(static_cast<float>(x), static_cast<float>(y));
      d.u[d.index(x, y)] = u;
      d.v[d.index(x, y)] = v;
    }
  }
  return d;
}

DenseFlow refine_flow(const GridFlow& flow, const Plane& src, const Plane& dst) {
  DenseFlow d = densify(flow);
  auto cost = [&](int x, int y, float u, float v) {
    double s = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int px = std::clamp(x + dx, 0, src.width - 1), py = std::clamp(y + dy, 0, src.height - 1);
        const double r = src.at(px, py) - dst.sample(px + u, py + v);
        s += r * r;
      }
    }
    return s;
  };
  std::vector<std::pair<float, float>> cands;
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const std::size_t idx = d.index(x, y);
      const float u0 = d.u[idx], v0 = d.v[idx];
      const int i0 = x / flow.grid, j0 = y / flow.grid;
      cands.clear();
      float spread = std::hypot(u0, v0);
      for (int j = std::max(0, j0 - 1); j <= std::min(flow.nodes_y - 1, j0 + 2); ++j) {
        for (int i = std::max(0, i0 - 1); i <= std::min(flow.nodes_x - 1, i0 + 2); ++i) {
          const float cu = flow.dx[flow.node(i, j)], cv = flow.dy[flow.node(i, j)];
          spread = std::max(spread, std::hypot(cu - u0, cv - v0));
          cands.emplace_back(cu, cv);
        }
      }
      if (spread <= 0.05f) continue;
      cands.emplace_back(0.0f, 0.0f);
      double best = cost(x, y, u0, v0);
      for (const auto& [cu, cv] : cands) {
        const double c = cost(x, y, cu, cv);
        if (c < best) {
          best = c;
          d.u[idx] = cu;
          d.v[idx] = cv;
        }
      }
    }
  }
  return d;
}

Plane warp(const Plane& src, const DenseFlow& flow) {
  if (flow.width != src.width || flow.height != src.height) fail(ErrorKind::Dimension, "warp: flow size differs");
  Plane out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      const std::size_t i = flow.index(x, y);
      out.at(x, y) = src.sample(x - flow.u[i], y - flow.v[i]);
    }
  }
  return out;
}

Plane warp_mask(const Plane& mask, const DenseFlow& flow) {
  if (flow.width != mask.width || flow.height != mask.height) fail(ErrorKind::Dimension, "warp: flow size differs");
  Plane out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t i = flow.index(x, y);
      const float sx = x - flow.u[i], sy = y - flow.v[i];
      if (sx < 0 || sy < 0 || sx > mask.width - 1 || sy > mask.height - 1) continue;
      out.at(x, y) = mask.sample(sx, sy) >= 0.999f ? 1.0f : 0.0f;
    }
  }
  return out;
}

int default_color_levels(int height, int width) {
  return static_cast<int>(std::floor(std::log2(std::min(height, width)))) - 1;
}

namespace {

std::vector<Plane> laplacian_pyramid(const Plane& p, int levels) {
  std::vector<Plane> gauss{p};
  while (static_cast<int>(gauss.size()) < levels && std::min(gauss.back().width, gauss.back().height) > 1) {
    gauss.push_back(pyr_down(gauss.back()));
  }
  std::vector<Plane> bands;
  for (std::size_t k = 0; k + 1 < gauss.size(); ++k) {
    Plane up = pyr_up(gauss[k + 1], gauss[k].width, gauss[k].height);
    Plane band = gauss[k];
    for (std::size_t i = 0; i < band.data.size(); ++i) band.data[i] -= up.data[i];
    bands.push_back(std::move(band));
  }
  bands.push_back(gauss.back());
  return bands;
}

Plane collapse(const std::vector<Plane>& bands) {
  Plane acc = bands.back();
  for (int k = static_cast<int>(bands.size()) - 2; k >= 0; --k) {
    Plane up = pyr_up(acc, bands[k].width, bands[k].height);
    for (std::size_t i = 0; i < up.data.size(); ++i) up.data[i] += bands[k].data[i];
    acc = std::move(up);
  }
  return acc;
}

}  // namespace

Video color_align(const Video& x_warp, const Mask& valid, const Video& y_up, int levels) {
  if (levels < 3) fail(ErrorKind::Config, "color alignment needs at least 3 pyramid levels");
  if (!x_warp.same_shape(y_up)) fail(ErrorKind::Dimension, "color_align: shapes differ");
  require_same_dims(x_warp, valid, "color_align");
  Video filled = composite(x_warp, valid, y_up);
  Video out = y_up;
  for (int t = 0; t < x_warp.frames(); ++t) {
    for (int c = 0; c < x_warp.channels(); ++c) {
      auto xb = laplacian_pyramid(channel_plane(filled, t, c), levels);
      const auto yb = laplacian_pyramid(channel_plane(y_up, t, c), levels);
      for (std::size_t k = 2; k < xb.size(); ++k) xb[k] = yb[k];
      const Plane mixed = collapse(xb);
      auto f = out.frame(t);
      const int ch = out.channels();
      for (std::size_t i = 0; i < mixed.data.size(); ++i) {
        if (valid.data()[t * valid.frame_size() + i]) f[i * ch + c] = mixed.data[i];
      }
    }
  }
  return out;
}

Aligned align_to(const Video& x, const Mask& m, const Video& y_up, const AlignOptions& options, int threads) {
  if (!x.same_shape(y_up)) fail(ErrorKind::Dimension, "align: shapes differ");
  require_same_dims(x, m, "align");
  Aligned out{Video(x.frames(), x.height(), x.width(), x.channels()), Mask(x.frames(), x.height(), x.width())};
  out.video.frame_rate = x.frame_rate;
  parallel_for(static_cast<std::size_t>(x.frames()), threads, [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    const Plane valid = mask_plane(m, t);
    const GridFlow gf = estimate_grid_flow(luminance(x, t), luminance(y_up, t), &valid, options.flow);
    const DenseFlow flow = densify(gf);
    for (int c = 0; c < x.channels(); ++c) store_channel(warp(channel_plane(x, t, c), flow), out.video, t, c);
    const Plane wm = warp_mask(valid, flow);
    for (std::size_t i = 0; i < wm.data.size(); ++i) out.mask.data()[t * out.mask.frame_size() + i] = wm.data[i] > 0.5f;
  });
  const int levels = options.color_levels > 0 ? options.color_levels : default_color_levels(x.height(), x.width());
  out.video = color_align(out.video, out.mask, y_up, levels);
  return out;
}

}  // namespace panovid

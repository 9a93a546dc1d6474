#include "panovid/image_ops.hpp"

#include <algorithm>
#include <cmath>

#include "panovid/error.hpp"

namespace panovid {

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

Plane convolve_separable(const Plane& p, const std::vector<float>& k) {
  const int r = static_cast<int>(k.size() / 2);
  Plane tmp(p.width, p.height), out(p.width, p.height);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      float s = 0.0f;
      for (int i = -r; i <= r; ++i) s += k[i + r] * p.at(reflect(x + i, p.width), y);
      tmp.at(x, y) = s;
    }
  }
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      float s = 0.0f;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(x, reflect(y + i, p.height));
      out.at(x, y) = s;
    }
  }
  return out;
}

}  // namespace

float Plane::clamped(int x, int y) const {
  return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
}

float Plane::sample(float x, float y) const {
  const float fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const float ax = x - fx, ay = y - fy;
  const float top = (1 - ax) * clamped(x0, y0) + ax * clamped(x0 + 1, y0);
  const float bot = (1 - ax) * clamped(x0, y0 + 1) + ax * clamped(x0 + 1, y0 + 1);
  return (1 - ay) * top + ay * bot;
}

Plane luminance(const Video& v, int t) {
  Plane p(v.width(), v.height());
  auto f = v.frame(t);
  if (v.channels() == 1) {
    std::copy(f.begin(), f.end(), p.data.begin());
    return p;
  }
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    p.data[i] = 0.299f * f[i * 3] + 0.587f * f[i * 3 + 1] + 0.114f * f[i * 3 + 2];
  }
  return p;
}

Plane channel_plane(const Video& v, int t, int c) {
  Plane p(v.width(), v.height());
  auto f = v.frame(t);
  const int ch = v.channels();
  for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = f[i * ch + c];
  return p;
}

void store_channel(const Plane& p, Video& v, int t, int c) {
  auto f = v.frame(t);
  const int ch = v.channels();
  for (std::size_t i = 0; i < p.data.size(); ++i) f[i * ch + c] = p.data[i];
}

Plane mask_plane(const Mask& m, int t) {
  Plane p(m.width(), m.height());
  for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = m.data()[t * m.frame_size() + i] ? 1.0f : 0.0f;
  return p;
}

Plane blur5(const Plane& p) {
  return convolve_separable(p, {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16, 1.0f / 16});
}

Plane gaussian_blur(const Plane& p, float sigma) {
  if (sigma <= 0.0f) return p;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
  std::vector<float> k(2 * r + 1);
  float sum = 0.0f;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5f * i * i / (sigma * sigma));
  for (float& v : k) v /= sum;
  return convolve_separable(p, k);
}

Plane pyr_down(const Plane& p) {
  const Plane b = blur5(p);
  Plane out((p.width + 1) / 2, (p.height + 1) / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = b.at(2 * x, 2 * y);
  }
  return out;
}

Plane pyr_up(const Plane& p, int width, int height) {
  // Zero-insertion followed by the same binomial kernel scaled by 4.
  Plane up(width, height);
  for (int y = 0; y < p.height && 2 * y < height; ++y) {
    for (int x = 0; x < p.width && 2 * x < width; ++x) up.at(2 * x, 2 * y) = 4.0f * p.at(x, y);
  }
  Plane b = blur5(up);
  // Normalize border rows/cols where reflection breaks the zero pattern.
  Plane ones(width, height);
  for (int y = 0; y < p.height && 2 * y < height; ++y) {
    for (int x = 0; x < p.width && 2 * x < width; ++x) ones.at(2 * x, 2 * y) = 4.0f;
  }
  const Plane w = blur5(ones);
  for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] /= w.data[i];
  return b;
}

float sample_bilinear(const Video& v, int t, float x, float y, int c) {
  const float fx = std::floor(x), fy = std::floor(y);
  const int x0 = std::clamp(static_cast<int>(fx), 0, v.width() - 1);
  const int y0 = std::clamp(static_cast<int>(fy), 0, v.height() - 1);
  const int x1 = std::clamp(static_cast<int>(fx) + 1, 0, v.width() - 1);
  const int y1 = std::clamp(static_cast<int>(fy) + 1, 0, v.height() - 1);
  const float ax = x - fx, ay = y - fy;
  const float top = (1 - ax) * v.at(t, y0, x0, c) + ax * v.at(t, y0, x1, c);
  const float bot = (1 - ax) * v.at(t, y1, x0, c) + ax * v.at(t, y1, x1, c);
  return (1 - ay) * top + ay * bot;
}

Video resize_video(const Video& v, int height, int width) {
  if (height == v.height() && width == v.width()) return v;
  Video out(v.frames(), height, width, v.channels());
  out.frame_rate = v.frame_rate;
  out.color_space = v.color_space;
  out.bit_depth = v.bit_depth;
  const float sy = static_cast<float>(v.height()) / height;
  const float sx = static_cast<float>(v.width()) / width;
  for (int t = 0; t < v.frames(); ++t) {
    for (int y = 0; y < height; ++y) {
      const float src_y = (y + 0.5f) * sy - 0.5f;
      for (int x = 0; x < width; ++x) {
        const float src_x = (x + 0.5f) * sx - 0.5f;
        for (int c = 0; c < v.channels(); ++c) out.at(t, y, x, c) = sample_bilinear(v, t, src_x, src_y, c);
      }
    }
  }
  return out;
}

Mask resize_mask(const Mask& m, int height, int width, float threshold) {
  if (height == m.height() && width == m.width()) return m;
  Mask out(m.frames(), height, width);
  const float sy = static_cast<float>(m.height()) / height;
  const float sx = static_cast<float>(m.width()) / width;
  for (int t = 0; t < m.frames(); ++t) {
    const Plane p = mask_plane(m, t);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const float v = p.sample((x + 0.5f) * sx - 0.5f, (y + 0.5f) * sy - 0.5f);
        out.at(t, y, x) = v >= threshold ? 1 : 0;
      }
    }
  }
  return out;
}

Video composite(const Video& fg, const Mask& mask, const Video& bg) {
  if (!fg.same_shape(bg)) fail(ErrorKind::Dimension, "composite: foreground/background shapes differ");
  require_same_dims(fg, mask, "composite");
  Video out = bg;
  const int ch = fg.channels();
  const auto& md = mask.data();
  for (std::size_t i = 0; i < md.size(); ++i) {
    if (!md[i]) continue;
    for (int c = 0; c < ch; ++c) out.data()[i * ch + c] = fg.data()[i * ch + c];
  }
  return out;
}

}  // namespace panovid

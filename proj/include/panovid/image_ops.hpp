#pragma once

#include <cstddef>
#include <vector>

#include "panovid/video.hpp"

namespace panovid {

// Single-channel float image; used by flow, registration and pyramids.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float clamped(int x, int y) const;
  // Bilinear lookup with pixel centres at integer coordinates, edge-clamped.
  float sample(float x, float y) const;
};

Plane luminance(const Video& v, int t);
Plane channel_plane(const Video& v, int t, int c);
void store_channel(const Plane& p, Video& v, int t, int c);
Plane mask_plane(const Mask& m, int t);

// Separable 5-tap binomial blur (1 4 6 4 1)/16 with reflected borders.
Plane blur5(const Plane& p);
Plane gaussian_blur(const Plane& p, float sigma);
// Blur + 2x decimation / 2x expansion used by image pyramids.
Plane pyr_down(const Plane& p);
Plane pyr_up(const Plane& p, int width, int height);

// Bilinear sample of a video channel with pixel centres at integers.
float sample_bilinear(const Video& v, int t, float x, float y, int c);

// Spatial resize of every frame (bilinear, centre-aligned). Same size is a copy.
Video resize_video(const Video& v, int height, int width);
// Bilinear resize of a binary mask, re-binarized at `threshold`.
Mask resize_mask(const Mask& m, int height, int width, float threshold = 0.999f);

// out = mask ? fg : bg, per pixel.
Video composite(const Video& fg, const Mask& mask, const Video& bg);

}  // namespace panovid

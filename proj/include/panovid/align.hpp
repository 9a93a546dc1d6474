#pragma once

#include <vector>

#include "panovid/image_ops.hpp"
#include "panovid/video.hpp"

namespace panovid {

struct FlowOptions {
  int grid = 16;                 // node spacing, px
  int octaves = 3;
  int iterations = 10;           // per octave
  float max_displacement = 8.0f;
  float min_support = 0.25f;     // valid fraction of a node window
  float min_eigenvalue = 1e-5f;  // per-sample structure tensor floor
};

// Displacements on a coarse node grid; node (i, j) sits at pixel index
// (i * grid, j * grid). The flow d at a source pixel p means dst(p + d) ~ src(p).
struct GridFlow {
  int grid = 16;
  int width = 0;
  int height = 0;
  int nodes_x = 0;
  int nodes_y = 0;
  std::vector<float> dx;
  std::vector<float> dy;

  std::size_t node(int i, int j) const { return static_cast<std::size_t>(j) * nodes_x + i; }
  // Bilinear interpolation at pixel index coordinates.
  std::pair<float, float> at(float x, float y) const;
};

struct DenseFlow {
  int width = 0;
  int height = 0;
  std::vector<float> u;
  std::vector<float> v;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  float magnitude(int x, int y) const;
};

// Coarse-to-fine Lucas-Kanade per grid node; `valid` (1 = usable) marks src pixels.
GridFlow estimate_grid_flow(const Plane& src, const Plane& dst, const Plane* valid = nullptr,
                            const FlowOptions& options = {});
DenseFlow densify(const GridFlow& flow);
// Per-pixel choice among the interpolated flow, nearby node flows and zero,
// by 3x3 SSD; resolves motion boundaries the node grid blurs.
DenseFlow refine_flow(const GridFlow& flow, const Plane& src, const Plane& dst);

// Backward warp: out(p) = src(p - flow(p)), so warping src by its flow toward
// dst approximates dst.
Plane warp(const Plane& src, const DenseFlow& flow);
// Mask warped with the same field, re-binarized at 0.999; out-of-image is 0.
Plane warp_mask(const Plane& mask, const DenseFlow& flow);

int default_color_levels(int height, int width);
// Keeps the two finest Laplacian bands of x_warp and the coarser bands of
// y_up; pixels outside `valid` take y_up.
Video color_align(const Video& x_warp, const Mask& valid, const Video& y_up, int levels);

struct AlignOptions {
  FlowOptions flow;
  int color_levels = 0;  // 0: default_color_levels
};

struct Aligned {
  Video video;
  Mask mask;
};

// Warps each frame of x (valid where m) onto y_up, then color-aligns it.
Aligned align_to(const Video& x, const Mask& m, const Video& y_up, const AlignOptions& options = {}, int threads = 1);

}  // namespace panovid

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "panovid/image_ops.hpp"
#include "panovid/video.hpp"

namespace panovid {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

// Image coordinates are continuous: pixel (i, j) has its centre at (j + 0.5, i + 0.5).
struct Intrinsics {
  double focal = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  static Intrinsics centered(double focal, int width, int height) {
    return {focal, 0.5 * width, 0.5 * height};
  }
};

enum class CameraMode { Rotation, CanvasCrop };

// Per-frame camera. In rotation mode R_t maps frame-t camera rays into the
// frame-0 camera; in canvas-crop mode frames are axis-aligned crops placed at
// integer canvas offsets (synthetic benchmark videos).
struct CameraModel {
  CameraMode mode = CameraMode::Rotation;
  Intrinsics intrinsics;
  std::vector<Mat3> rotations;
  std::vector<std::array<int, 2>> canvas_offsets;  // (x, y) of the frame's top-left pixel
  int canvas_width = 0;
  int canvas_height = 0;

  int frames() const { return static_cast<int>(rotations.size()); }
  // H_t = K R_t K^-1, mapping frame-t image coordinates into frame 0.
  Mat3 homography(int t) const;
};

// Equirectangular canvas. Row r / column c centres map to
//   phi   = phi_min + (c + 0.5) / pixels_per_radian
//   theta = theta_max - (r + 0.5) / pixels_per_radian
// theta is elevation (up positive), phi azimuth (right positive).
struct CanvasGeometry {
  double theta_min = 0.0;
  double theta_max = 0.0;
  double phi_min = 0.0;
  double phi_max = 0.0;
  double pixels_per_radian = 1.0;
  int width = 0;
  int height = 0;

  Vec2 angles_at(double col, double row) const;  // (theta, phi) at a pixel centre index
  Vec2 pixel_of(double theta, double phi) const;  // fractional (col, row) index
};

Vec3 ray_from_angles(double theta, double phi);
Vec2 angles_from_ray(const Vec3& ray);  // (theta, phi)

// ---- feature-based pairwise homographies ----

struct Corner {
  Vec2 position;  // continuous image coordinates
  float response = 0.0f;
};

struct Match {
  Vec2 src;  // in the frame being registered
  Vec2 dst;  // in the reference frame
  float score = 0.0f;
};

struct RegistrationParams {
  int max_corners = 800;
  int patch_radius = 7;
  double min_ncc = 0.8;
  double search_radius_frac = 0.4;  // of max(width, height)
  double ransac_threshold = 2.0;    // px, forward transfer
  int ransac_iterations = 2000;
  int min_inliers = 8;
  std::uint64_t seed = 0x5eedULL;
};

std::vector<Corner> detect_corners(const Plane& image, const RegistrationParams& params = {});
std::vector<Match> match_features(const Plane& src, std::span<const Corner> src_corners,
                                  const Plane& dst, std::span<const Corner> dst_corners,
                                  const RegistrationParams& params = {});

struct RansacResult {
  Mat3 homography = Mat3::Identity();
  std::vector<bool> inliers;
  int inlier_count = 0;
  bool found_model = false;  // false: every minimal sample was degenerate
};

// Normalized DLT over all correspondences (>= 4).
Mat3 fit_homography_dlt(std::span<const Match> matches);
RansacResult ransac_homography(std::span<const Match> matches, const RegistrationParams& params = {});
// Levenberg-Marquardt on the symmetric transfer error.
Mat3 refine_homography(const Mat3& h, std::span<const Match> matches);
double symmetric_transfer_error(const Mat3& h, const Match& m);
Vec2 apply_homography(const Mat3& h, const Vec2& p);
Mat3 normalize_homography(const Mat3& h);

// RANSAC + DLT + refinement for one frame pair; throws on too few inliers or
// collinear inlier sets. `pair_label` is used in error messages.
Mat3 estimate_pair_homography(std::span<const Match> matches, const RegistrationParams& params,
                              const std::string& pair_label);

// H_0 = I; H_t maps frame-t coordinates into frame 0 (chained pairwise).
std::vector<Mat3> estimate_homographies(const Video& v, const RegistrationParams& params = {});

// ---- rotation model ----

struct RotationFit {
  Mat3 rotation = Mat3::Identity();
  double residual = 0.0;  // Frobenius distance to the nearest rotation
};

RotationFit decompose_rotation(const Mat3& h, const Intrinsics& k);
// Closed-form self-calibration from rotation homographies; nullopt when ill-conditioned.
std::optional<double> estimate_focal(std::span<const Mat3> homographies, int width, int height);
CameraModel camera_from_homographies(std::span<const Mat3> homographies, const Intrinsics& k);

CanvasGeometry auto_fit_canvas(const CameraModel& cam, int frame_width, int frame_height);

struct CanvasProjection {
  Video canvas;
  Mask mask;
};

CanvasProjection project_to_canvas(const Video& v, const CameraModel& cam, const CanvasGeometry& geom,
                                   int threads = 1);
// Same, with a per-frame source validity mask: a canvas pixel is valid only if
// all four bilinear taps are valid in the source.
CanvasProjection project_to_canvas(const Video& v, const Mask& source_valid, const CameraModel& cam,
                                   const CanvasGeometry& geom, int threads = 1);

// ---- camera path files ----

nlohmann::json camera_to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j);
CameraModel load_camera_path(const std::filesystem::path& path);
void save_camera_path(const CameraModel& cam, const std::filesystem::path& path);

}  // namespace panovid

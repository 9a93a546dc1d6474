#include "panovid/registration.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "panovid/error.hpp"
#include "panovid/parallel.hpp"

namespace panovid {
namespace fs = std::filesystem;
using json = nlohmann::json;

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << focal, 0, cx, 0, focal, cy, 0, 0, 1;
  return k;
}

Mat3 CameraModel::homography(int t) const {
  const Mat3 k = intrinsics.matrix();
  return normalize_homography(k * rotations.at(t) * k.inverse());
}

Vec2 CanvasGeometry::angles_at(double col, double row) const {
  return {theta_max - (row + 0.5) / pixels_per_radian, phi_min + (col + 0.5) / pixels_per_radian};
}

Vec2 CanvasGeometry::pixel_of(double theta, double phi) const {
  return {(phi - phi_min) * pixels_per_radian - 0.5, (theta_max - theta) * pixels_per_radian - 0.5};
}

Vec3 ray_from_angles(double theta, double phi) {
  return {std::cos(theta) * std::sin(phi), -std::sin(theta), std::cos(theta) * std::cos(phi)};
}

Vec2 angles_from_ray(const Vec3& ray) {
  return {std::atan2(-ray.y(), std::hypot(ray.x(), ray.z())), std::atan2(ray.x(), ray.z())};
}

Vec2 apply_homography(const Mat3& h, const Vec2& p) {
  const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

Mat3 normalize_homography(const Mat3& h) {
  if (std::abs(h(2, 2)) > 1e-12) return h / h(2, 2);
  return h / h.norm();
}

double symmetric_transfer_error(const Mat3& h, const Match& m) {
  const Vec2 fwd = apply_homography(h, m.src) - m.dst;
  const Vec2 bwd = apply_homography(h.inverse(), m.dst) - m.src;
  return fwd.squaredNorm() + bwd.squaredNorm();
}

// ------------------------------------------------------------ corners

std::vector<Corner> detect_corners(const Plane& image, const RegistrationParams& params) {
  const Plane smooth = gaussian_blur(image, 1.0f);
  const int w = image.width, h = image.height;
  Plane ixx(w, h), iyy(w, h), ixy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float gx = 0.5f * (smooth.clamped(x + 1, y) - smooth.clamped(x - 1, y));
      const float gy = 0.5f * (smooth.clamped(x, y + 1) - smooth.clamped(x, y - 1));
      ixx.at(x, y) = gx * gx;
      iyy.at(x, y) = gy * gy;
      ixy.at(x, y) = gx * gy;
    }
  }
  const Plane sxx = gaussian_blur(ixx, 1.5f), syy = gaussian_blur(iyy, 1.5f), sxy = gaussian_blur(ixy, 1.5f);
  Plane response(w, h);
  float max_response = 0.0f;
  for (std::size_t i = 0; i < response.data.size(); ++i) {
    const float det = sxx.data[i] * syy.data[i] - sxy.data[i] * sxy.data[i];
    const float tr = sxx.data[i] + syy.data[i];
    response.data[i] = det - 0.04f * tr * tr;
    max_response = std::max(max_response, response.data[i]);
  }
  if (max_response <= 0.0f) return {};

  const int margin = params.patch_radius + 2;
  const float threshold = 0.005f * max_response;
  std::vector<Corner> corners;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const float r = response.at(x, y);
      if (r <= threshold) continue;
      bool is_max = true;
      for (int dy = -2; dy <= 2 && is_max; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          if ((dx || dy) && response.at(x + dx, y + dy) >= r) {
            // Ties resolve to the first pixel in scan order.
            if (response.at(x + dx, y + dy) > r || dy < 0 || (dy == 0 && dx < 0)) {
              is_max = false;
              break;
            }
          }
        }
      }
      if (is_max) corners.push_back({Vec2(x + 0.5, y + 0.5), r});
    }
  }
  std::stable_sort(corners.begin(), corners.end(),
                   [](const Corner& a, const Corner& b) { return a.response > b.response; });
  if (static_cast<int>(corners.size()) > params.max_corners) corners.resize(params.max_corners);
  return corners;
}

namespace {

// Zero-mean, unit-norm patch; empty when the patch is flat.
std::vector<float> descriptor(const Plane& img, const Vec2& p, int radius) {
  std::vector<float> d;
  d.reserve((2 * radius + 1) * (2 * radius + 1));
  const int cx = static_cast<int>(std::floor(p.x())), cy = static_cast<int>(std::floor(p.y()));
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) d.push_back(img.clamped(cx + dx, cy + dy));
  }
  const float mean = std::accumulate(d.begin(), d.end(), 0.0f) / static_cast<float>(d.size());
  float norm = 0.0f;
  for (float& v : d) {
    v -= mean;
    norm += v * v;
  }
  if (norm < 1e-8f) return {};
  norm = std::sqrt(norm);
  for (float& v : d) v /= norm;
  return d;
}

}  // namespace

std::vector<Match> match_features(const Plane& src, std::span<const Corner> src_corners, const Plane& dst,
                                  std::span<const Corner> dst_corners, const RegistrationParams& params) {
  const Plane sa = gaussian_blur(src, 0.8f), sb = gaussian_blur(dst, 0.8f);
  std::vector<std::vector<float>> da, db;
  for (const auto& c : src_corners) da.push_back(descriptor(sa, c.position, params.patch_radius));
  for (const auto& c : dst_corners) db.push_back(descriptor(sb, c.position, params.patch_radius));

  const double radius = params.search_radius_frac * std::max(src.width, src.height);
  const std::size_t na = src_corners.size(), nb = dst_corners.size();
  std::vector<int> best_a(na, -1), best_b(nb, -1);
  std::vector<float> score_a(na, -2.0f), second_a(na, -2.0f), score_b(nb, -2.0f);
  for (std::size_t i = 0; i < na; ++i) {
    if (da[i].empty()) continue;
    for (std::size_t j = 0; j < nb; ++j) {
      if (db[j].empty()) continue;
      if ((src_corners[i].position - dst_corners[j].position).norm() > radius) continue;
      float s = 0.0f;
      for (std::size_t k = 0; k < da[i].size(); ++k) s += da[i][k] * db[j][k];
      if (s > score_a[i]) {
        second_a[i] = score_a[i];
        score_a[i] = s;
        best_a[i] = static_cast<int>(j);
      } else if (s > second_a[i]) {
        second_a[i] = s;
      }
      if (s > score_b[j]) {
        score_b[j] = s;
        best_b[j] = static_cast<int>(i);
      }
    }
  }
  std::vector<Match> matches;
  for (std::size_t i = 0; i < na; ++i) {
    const int j = best_a[i];
    if (j < 0 || score_a[i] < params.min_ncc) continue;
    if (best_b[j] != static_cast<int>(i)) continue;
    if (second_a[i] > score_a[i] - 0.02f) continue;  // ambiguous
    matches.push_back({src_corners[i].position, dst_corners[j].position, score_a[i]});
  }
  return matches;
}

// ------------------------------------------------------------ homography fitting

namespace {

Mat3 normalizing_transform(const std::vector<Vec2>& pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += (p - c).norm();
  d /= static_cast<double>(pts.size());
  const double s = d > 1e-12 ? std::sqrt(2.0) / d : 1.0;
  Mat3 t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

struct Normalized {
  Mat3 t_src, t_dst;
  std::vector<Vec2> src, dst;
};

Normalized normalize_matches(std::span<const Match> matches) {
  Normalized n;
  std::vector<Vec2> s, d;
  for (const auto& m : matches) {
    s.push_back(m.src);
    d.push_back(m.dst);
  }
  n.t_src = normalizing_transform(s);
  n.t_dst = normalizing_transform(d);
  for (std::size_t i = 0; i < s.size(); ++i) {
    n.src.push_back(apply_homography(n.t_src, s[i]));
    n.dst.push_back(apply_homography(n.t_dst, d[i]));
  }
  return n;
}

bool collinear(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 u = b - a, v = c - a;
  return std::abs(u.x() * v.y() - u.y() * v.x()) < 1e-3 * std::max(1.0, u.norm() * v.norm());
}

bool degenerate_sample(const std::array<const Match*, 4>& s) {
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        if (collinear(s[i]->src, s[j]->src, s[k]->src) || collinear(s[i]->dst, s[j]->dst, s[k]->dst)) {
          return true;
        }
      }
    }
  }
  return false;
}

double forward_error_sq(const Mat3& h, const Match& m) { return (apply_homography(h, m.src) - m.dst).squaredNorm(); }

}  // namespace

Mat3 fit_homography_dlt(std::span<const Match> matches) {
  if (matches.size() < 4) fail(ErrorKind::Registration, "homography fit needs at least 4 correspondences");
  const Normalized n = normalize_matches(matches);
  Eigen::MatrixXd a(2 * matches.size(), 9);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const double x = n.src[i].x(), y = n.src[i].y(), u = n.dst[i].x(), v = n.dst[i].y();
    a.row(2 * i) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    a.row(2 * i + 1) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return normalize_homography(n.t_dst.inverse() * hn * n.t_src);
}

RansacResult ransac_homography(std::span<const Match> matches, const RegistrationParams& params) {
  RansacResult best;
  best.inliers.assign(matches.size(), false);
  if (matches.size() < 4) return best;

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, matches.size() - 1);
  const double thr2 = params.ransac_threshold * params.ransac_threshold;
  double best_cost = std::numeric_limits<double>::infinity();
  int needed = params.ransac_iterations;
  for (int it = 0; it < needed && it < params.ransac_iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = pick(rng);
        fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) == idx.begin() + k;
      }
    }
    const std::array<const Match*, 4> sample{&matches[idx[0]], &matches[idx[1]], &matches[idx[2]], &matches[idx[3]]};
    if (degenerate_sample(sample)) continue;
    const std::array<Match, 4> minimal{*sample[0], *sample[1], *sample[2], *sample[3]};
    Mat3 h;
    try {
      h = fit_homography_dlt(minimal);
    } catch (const Error&) {
      continue;
    }
    if (!h.allFinite()) continue;
    best.found_model = true;

    int count = 0;
    double cost = 0.0;
    for (const auto& m : matches) {
      const double e = forward_error_sq(h, m);
      if (e < thr2) {
        ++count;
        cost += e;
      } else {
        cost += thr2;
      }
    }
    if (count > best.inlier_count || (count == best.inlier_count && cost < best_cost)) {
      best.inlier_count = count;
      best_cost = cost;
      best.homography = h;
      // Adaptive termination at 99.9% confidence.
      const double ratio = static_cast<double>(count) / static_cast<double>(matches.size());
      const double p_good = std::pow(ratio, 4);
      if (p_good > 1e-9 && p_good < 1.0) {
        needed = std::min(params.ransac_iterations,
                          static_cast<int>(std::ceil(std::log(1e-3) / std::log(1.0 - p_good))) + 1);
      } else if (p_good >= 1.0) {
        needed = it + 1;
      }
    }
  }
  for (std::size_t i = 0; i < matches.size(); ++i) {
    best.inliers[i] = forward_error_sq(best.homography, matches[i]) < thr2;
  }
  return best;
}

Mat3 refine_homography(const Mat3& h0, std::span<const Match> matches) {
  if (matches.size() < 4) return h0;
  const Normalized n = normalize_matches(matches);
  const Mat3 t_src_inv = n.t_src.inverse(), t_dst_inv = n.t_dst.inverse();

  // Parameters: normalized-space homography with h33 fixed at 1.
  Mat3 hn = normalize_homography(n.t_dst * h0 * t_src_inv);
  auto unpack = [&](const Eigen::Matrix<double, 8, 1>& p) {
    Mat3 m;
    m << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), 1.0;
    return Mat3(t_dst_inv * m * n.t_src);
  };
  auto residuals = [&](const Eigen::Matrix<double, 8, 1>& p) {
    const Mat3 h = unpack(p);
    const Mat3 hi = h.inverse();
    Eigen::VectorXd r(4 * matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) {
      const Vec2 f = apply_homography(h, matches[i].src) - matches[i].dst;
      const Vec2 b = apply_homography(hi, matches[i].dst) - matches[i].src;
      r.segment<2>(4 * i) = f;
      r.segment<2>(4 * i + 2) = b;
    }
    return r;
  };

  Eigen::Matrix<double, 8, 1> p;
  p << hn(0, 0), hn(0, 1), hn(0, 2), hn(1, 0), hn(1, 1), hn(1, 2), hn(2, 0), hn(2, 1);
  Eigen::VectorXd r = residuals(p);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int iter = 0; iter < 50; ++iter) {
    Eigen::MatrixXd jac(r.size(), 8);
    for (int k = 0; k < 8; ++k) {
      Eigen::Matrix<double, 8, 1> pp = p, pm = p;
      const double step = 1e-7 * std::max(1.0, std::abs(p(k)));
      pp(k) += step;
      pm(k) -= step;
      jac.col(k) = (residuals(pp) - residuals(pm)) / (2 * step);
    }
    const Eigen::Matrix<double, 8, 8> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 8, 1> jtr = jac.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 10; ++tries) {
      Eigen::Matrix<double, 8, 8> a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 8, 1> delta = a.ldlt().solve(-jtr);
      const Eigen::Matrix<double, 8, 1> candidate = p + delta;
      const Eigen::VectorXd rc = residuals(candidate);
      const double c = rc.squaredNorm();
      if (std::isfinite(c) && c < cost) {
        const double gain = cost - c;
        p = candidate;
        r = rc;
        cost = c;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
        if (gain < 1e-12 * std::max(1.0, cost)) iter = 50;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return normalize_homography(unpack(p));
}

Mat3 estimate_pair_homography(std::span<const Match> matches, const RegistrationParams& params,
                              const std::string& pair_label) {
  if (static_cast<int>(matches.size()) < params.min_inliers) {
    fail(ErrorKind::Registration, pair_label + ": only " + std::to_string(matches.size()) +
                                      " feature matches (need " + std::to_string(params.min_inliers) + ")");
  }
  const RansacResult ransac = ransac_homography(matches, params);
  if (!ransac.found_model) fail(ErrorKind::Degeneracy, pair_label + ": feature matches are collinear");
  auto gather = [&](const Mat3& h) {
    std::vector<Match> in;
    const double thr2 = params.ransac_threshold * params.ransac_threshold;
    for (const auto& m : matches) {
      if (forward_error_sq(h, m) < thr2) in.push_back(m);
    }
    return in;
  };
  std::vector<Match> inliers = gather(ransac.homography);
  if (static_cast<int>(inliers.size()) < params.min_inliers) {
    fail(ErrorKind::Registration, pair_label + ": only " + std::to_string(inliers.size()) +
                                      " inlier matches (need " + std::to_string(params.min_inliers) + ")");
  }

  // Collinear inlier sets cannot constrain a homography.
  Vec2 mean = Vec2::Zero();
  for (const auto& m : inliers) mean += m.src;
  mean /= static_cast<double>(inliers.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& m : inliers) cov += (m.src - mean) * (m.src - mean).transpose();
  cov /= static_cast<double>(inliers.size());
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues();
  if (ev(0) < 1.0 || ev(0) < 1e-4 * ev(1)) {
    fail(ErrorKind::Degeneracy, pair_label + ": inlier matches are collinear");
  }

  Mat3 h = refine_homography(fit_homography_dlt(inliers), inliers);
  const std::vector<Match> refit = gather(h);
  if (refit.size() > inliers.size()) h = refine_homography(fit_homography_dlt(refit), refit);
  return h;
}

std::vector<Mat3> estimate_homographies(const Video& v, const RegistrationParams& params) {
  std::vector<Plane> gray(v.frames());
  std::vector<std::vector<Corner>> corners(v.frames());
  for (int t = 0; t < v.frames(); ++t) {
    gray[t] = luminance(v, t);
    corners[t] = detect_corners(gray[t], params);
  }
  std::vector<Mat3> hs{Mat3::Identity()};
  for (int t = 1; t < v.frames(); ++t) {
    const auto matches = match_features(gray[t], corners[t], gray[t - 1], corners[t - 1], params);
    const std::string label = "frames " + std::to_string(t - 1) + "-" + std::to_string(t);
    const Mat3 pair = estimate_pair_homography(matches, params, label);
    hs.push_back(normalize_homography(hs.back() * pair));
  }
  return hs;
}

// ------------------------------------------------------------ rotation model

RotationFit decompose_rotation(const Mat3& h, const Intrinsics& k) {
  const Mat3 km = k.matrix();
  Mat3 m = km.inverse() * h * km;
  const double det = m.determinant();
  if (std::abs(det) < 1e-15) fail(ErrorKind::Degeneracy, "singular homography");
  m /= std::cbrt(det);
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  RotationFit fit;
  fit.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  fit.residual = (m - fit.rotation).norm();
  if (fit.residual > 0.1) {
    spdlog::warn("homography is not a pure rotation for f={:.1f} (residual {:.3f}); using best fit", k.focal,
                 fit.residual);
  }
  return fit;
}

std::optional<double> estimate_focal(std::span<const Mat3> homographies, int width, int height) {
  // Work in width-normalized coordinates centred on the principal point, so
  // omega = K K^T = diag(a, a, 1) with a = (f / width)^2. Each H gives
  //   H omega H^T = lambda omega,
  // whose off-diagonal terms and (0,0)-(1,1) difference are linear in a.
  Mat3 t;
  t << 1.0 / width, 0, -0.5 * width / width, 0, 1.0 / width, -0.5 * height / width, 0, 0, 1;
  double num = 0.0, den = 0.0;
  for (const Mat3& h_px : homographies) {
    Mat3 h = t * h_px * t.inverse();
    h /= h.norm();
    const Vec3 c0 = h.col(0), c1 = h.col(1), c2 = h.col(2);
    const Mat3 m = c0 * c0.transpose() + c1 * c1.transpose();
    const Mat3 n = c2 * c2.transpose();
    const std::array<std::pair<double, double>, 4> eqs{{{m(0, 1), n(0, 1)},
                                                        {m(0, 2), n(0, 2)},
                                                        {m(1, 2), n(1, 2)},
                                                        {m(0, 0) - m(1, 1), n(0, 0) - n(1, 1)}}};
    for (const auto& [a, b] : eqs) {
      num += a * b;
      den += a * a;
    }
  }
  if (den < 1e-8) return std::nullopt;
  const double a = -num / den;
  if (!(a > 0.0)) return std::nullopt;
  const double f = std::sqrt(a) * width;
  if (f < 0.1 * width || f > 20.0 * width) return std::nullopt;
  return f;
}

CameraModel camera_from_homographies(std::span<const Mat3> homographies, const Intrinsics& k) {
  CameraModel cam;
  cam.mode = CameraMode::Rotation;
  cam.intrinsics = k;
  for (std::size_t t = 0; t < homographies.size(); ++t) {
    cam.rotations.push_back(t == 0 ? Mat3::Identity() : decompose_rotation(homographies[t], k).rotation);
  }
  return cam;
}

CanvasGeometry auto_fit_canvas(const CameraModel& cam, int frame_width, int frame_height) {
  CanvasGeometry g;
  g.pixels_per_radian = cam.intrinsics.focal;
  if (cam.mode == CameraMode::CanvasCrop) {
    g.width = cam.canvas_width;
    g.height = cam.canvas_height;
    g.phi_min = 0.0;
    g.phi_max = g.width / g.pixels_per_radian;
    g.theta_max = 0.5 * g.height / g.pixels_per_radian;
    g.theta_min = -g.theta_max;
    return g;
  }
  double tmin = 1e9, tmax = -1e9, pmin = 1e9, pmax = -1e9;
  const Mat3 kinv = cam.intrinsics.matrix().inverse();
  constexpr int kSteps = 32;
  for (int t = 0; t < cam.frames(); ++t) {
    for (int i = 0; i <= kSteps; ++i) {
      const double s = static_cast<double>(i) / kSteps;
      const std::array<Vec2, 4> border{Vec2(s * frame_width, 0), Vec2(s * frame_width, frame_height),
                                       Vec2(0, s * frame_height), Vec2(frame_width, s * frame_height)};
      for (const auto& p : border) {
        const Vec3 ray = cam.rotations[t] * (kinv * Vec3(p.x(), p.y(), 1.0));
        const Vec2 a = angles_from_ray(ray);
        tmin = std::min(tmin, a(0));
        tmax = std::max(tmax, a(0));
        pmin = std::min(pmin, a(1));
        pmax = std::max(pmax, a(1));
      }
    }
  }
  const double margin = 1.0 / g.pixels_per_radian;
  g.theta_min = tmin - margin;
  g.theta_max = tmax + margin;
  g.phi_min = pmin - margin;
  g.phi_max = pmax + margin;
  g.width = static_cast<int>(std::lround((g.phi_max - g.phi_min) * g.pixels_per_radian));
  g.height = static_cast<int>(std::lround((g.theta_max - g.theta_min) * g.pixels_per_radian));
  return g;
}

namespace {

CanvasProjection project_impl(const Video& v, const Mask* source_valid, const CameraModel& cam,
                              const CanvasGeometry& geom, int threads) {
  if (cam.frames() != v.frames()) {
    fail(ErrorKind::Dimension, "camera path has " + std::to_string(cam.frames()) + " frames, video has " +
                                   std::to_string(v.frames()));
  }
  CanvasProjection out{Video(v.frames(), geom.height, geom.width, 3), Mask(v.frames(), geom.height, geom.width)};
  out.canvas.frame_rate = v.frame_rate;
  out.canvas.color_space = v.color_space;
  out.canvas.bit_depth = v.bit_depth;
  const int fw = v.width(), fh = v.height();

  if (cam.mode == CameraMode::CanvasCrop) {
    parallel_for(static_cast<std::size_t>(v.frames()), threads, [&](std::size_t ti) {
      const int t = static_cast<int>(ti);
      const auto [ox, oy] = cam.canvas_offsets.at(t);
      for (int y = 0; y < fh; ++y) {
        const int cy = oy + y;
        if (cy < 0 || cy >= geom.height) continue;
        for (int x = 0; x < fw; ++x) {
          const int cx = ox + x;
          if (cx < 0 || cx >= geom.width) continue;
          if (source_valid && !source_valid->at(t, y, x)) continue;
          for (int c = 0; c < 3; ++c) out.canvas.at(t, cy, cx, c) = v.at(t, y, x, c);
          out.mask.at(t, cy, cx) = 1;
        }
      }
    });
    return out;
  }

  const Mat3 k = cam.intrinsics.matrix();
  parallel_for(static_cast<std::size_t>(v.frames()), threads, [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    const Mat3 to_cam = k * cam.rotations[t].transpose();
    for (int r = 0; r < geom.height; ++r) {
      for (int c = 0; c < geom.width; ++c) {
        const Vec2 a = geom.angles_at(c, r);
        const Vec3 p = to_cam * ray_from_angles(a(0), a(1));
        if (p.z() <= 1e-9) continue;
        // Continuous image coordinates -> pixel-centre index coordinates.
        const double u = p.x() / p.z() - 0.5, w = p.y() / p.z() - 0.5;
        if (!(u >= 0.0 && u <= fw - 1 && w >= 0.0 && w <= fh - 1)) continue;
        if (source_valid) {
          const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(w));
          const int x1 = std::min(x0 + 1, fw - 1), y1 = std::min(y0 + 1, fh - 1);
          if (!source_valid->at(t, y0, x0) || !source_valid->at(t, y0, x1) || !source_valid->at(t, y1, x0) ||
              !source_valid->at(t, y1, x1)) {
            continue;
          }
        }
        for (int ch = 0; ch < 3; ++ch) {
          out.canvas.at(t, r, c, ch) = sample_bilinear(v, t, static_cast<float>(u), static_cast<float>(w), ch);
        }
        out.mask.at(t, r, c) = 1;
      }
    }
  });
  return out;
}

}  // namespace

CanvasProjection project_to_canvas(const Video& v, const CameraModel& cam, const CanvasGeometry& geom, int threads) {
  return project_impl(v, nullptr, cam, geom, threads);
}

CanvasProjection project_to_canvas(const Video& v, const Mask& source_valid, const CameraModel& cam,
                                   const CanvasGeometry& geom, int threads) {
  require_same_dims(v, source_valid, "project_to_canvas");
  return project_impl(v, &source_valid, cam, geom, threads);
}

// ------------------------------------------------------------ camera path JSON

json camera_to_json(const CameraModel& cam) {
  json frames = json::array();
  for (int t = 0; t < cam.frames(); ++t) {
    json f = {{"index", t}};
    std::vector<double> r;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r.push_back(cam.rotations[t](i, j));
    }
    f["rotation_rowmajor_9"] = r;
    if (cam.mode == CameraMode::CanvasCrop) f["canvas_offset"] = {cam.canvas_offsets[t][0], cam.canvas_offsets[t][1]};
    frames.push_back(f);
  }
  json j = {{"focal_px", cam.intrinsics.focal},
            {"principal", {cam.intrinsics.cx, cam.intrinsics.cy}},
            {"mode", cam.mode == CameraMode::CanvasCrop ? "canvas-crop" : "rotation"},
            {"frames", frames}};
  if (cam.mode == CameraMode::CanvasCrop) j["canvas"] = {{"width", cam.canvas_width}, {"height", cam.canvas_height}};
  return j;
}

CameraModel camera_from_json(const json& j) {
  auto require = [&](const json& obj, const char* key) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) fail(ErrorKind::Parse, std::string("camera path: missing field '") + key + "'");
    return obj.at(key);
  };
  CameraModel cam;
  try {
    cam.intrinsics.focal = require(j, "focal_px").get<double>();
    const json& pp = require(j, "principal");
    if (!pp.is_array() || pp.size() != 2) fail(ErrorKind::Parse, "camera path: 'principal' must be [cx, cy]");
    cam.intrinsics.cx = pp[0].get<double>();
    cam.intrinsics.cy = pp[1].get<double>();
    const std::string mode = j.value("mode", std::string("rotation"));
    if (mode == "canvas-crop") {
      cam.mode = CameraMode::CanvasCrop;
      const json& canvas = require(j, "canvas");
      cam.canvas_width = require(canvas, "width").get<int>();
      cam.canvas_height = require(canvas, "height").get<int>();
    } else if (mode != "rotation") {
      fail(ErrorKind::Parse, "camera path: unknown mode '" + mode + "'");
    }
    const json& frames = require(j, "frames");
    if (!frames.is_array() || frames.empty()) fail(ErrorKind::Parse, "camera path: 'frames' must be a non-empty array");
    cam.rotations.resize(frames.size());
    if (cam.mode == CameraMode::CanvasCrop) cam.canvas_offsets.resize(frames.size());
    std::vector<bool> seen(frames.size(), false);
    for (const json& f : frames) {
      const int index = require(f, "index").get<int>();
      if (index < 0 || index >= static_cast<int>(frames.size()) || seen[index]) {
        fail(ErrorKind::Parse, "camera path: bad or duplicate frame index " + std::to_string(index));
      }
      seen[index] = true;
      const auto r = require(f, "rotation_rowmajor_9").get<std::vector<double>>();
      if (r.size() != 9) fail(ErrorKind::Parse, "camera path: rotation_rowmajor_9 needs 9 values");
      Mat3 m;
      m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
      cam.rotations[index] = m;
      if (cam.mode == CameraMode::CanvasCrop) {
        const auto off = require(f, "canvas_offset").get<std::vector<int>>();
        if (off.size() != 2) fail(ErrorKind::Parse, "camera path: canvas_offset must be [x, y]");
        cam.canvas_offsets[index] = {off[0], off[1]};
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("camera path: ") + e.what());
  }
  if (!(cam.intrinsics.focal > 0.0)) fail(ErrorKind::Parse, "camera path: focal_px must be positive");
  return cam;
}

CameraModel load_camera_path(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open camera path " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
    const long line = 1 + std::count(upto.begin(), upto.end(), '\n');
    fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
  return camera_from_json(j);
}

void save_camera_path(const CameraModel& cam, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << camera_to_json(cam).dump(2) << "\n";
}

}  // namespace panovid

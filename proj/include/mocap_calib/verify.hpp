/*
 * Copyright 2026 The mocap_calib Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Lollypop verification: the image-space centre of a fiducial square is
// compared against the projection of the mocap centroid of the same device.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mocap_calib/camera.hpp"
#include "mocap_calib/chain.hpp"
#include "mocap_calib/error.hpp"
#include "mocap_calib/geometry.hpp"
#include "mocap_calib/homography.hpp"

namespace mocap_calib {

struct LollypopFrame {
  int frame_id = 0;
  std::string camera_id;
  std::array<PixelPoint, 4> aruco_corners{};  // TL, TR, BR, BL
  Eigen::Vector3d mocap_centroid = Eigen::Vector3d::Zero();  // mocap world, m
  std::optional<RigidTransform> platform_pose;

  bool operator==(const LollypopFrame&) const = default;
};

/// Canonical square corners in detector order (TL, TR, BR, BL).
inline const std::array<Eigen::Vector2d, 4>& canonical_square() {
  static const std::array<Eigen::Vector2d, 4> sq = {
      Eigen::Vector2d(-0.5, -0.5), Eigen::Vector2d(0.5, -0.5), Eigen::Vector2d(0.5, 0.5),
      Eigen::Vector2d(-0.5, 0.5)};
  return sq;
}

/// Exact homography mapping the four src points onto the four dst points.
inline Eigen::Matrix3d homography_from_quad(std::span<const Eigen::Vector2d, 4> src,
                                            std::span<const Eigen::Vector2d, 4> dst) {
  const std::span<const Eigen::Vector2d> s(src.data(), 4);
  const std::span<const Eigen::Vector2d> d(dst.data(), 4);
  if (has_collinear_triple(s) || has_collinear_triple(d)) {
    fail(ErrorCode::DegenerateHomography, "quad has three collinear corners");
  }
  return fit_homography(s, d);
}

namespace detail {

inline std::array<Eigen::Vector2d, 4> normalized_corners(const std::array<PixelPoint, 4>& corners,
                                                         const CameraModel& model) {
  std::array<Eigen::Vector2d, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    const Eigen::Vector3d ray = unproject(corners[i], model);
    if (ray.z() <= 1e-9) fail(ErrorCode::DegenerateHomography, "corner ray is not in front of the camera");
    out[i] = ray.hnormalized();
  }
  return out;
}

inline Eigen::Matrix3d quad_homography(const std::array<PixelPoint, 4>& corners,
                                       const CameraModel& model) {
  const auto norm = normalized_corners(corners, model);
  return homography_from_quad(std::span<const Eigen::Vector2d, 4>(canonical_square()),
                              std::span<const Eigen::Vector2d, 4>(norm));
}

}  // namespace detail

/// Image centre of the fiducial square: undistort the corners, warp the
/// canonical centre through the homography, and redistort.
inline PixelPoint aruco_center(const std::array<PixelPoint, 4>& corners, const CameraModel& model) {
  const Eigen::Matrix3d h = detail::quad_homography(corners, model);
  const Eigen::Vector3d c = h.col(2);
  if (std::abs(c.z()) < 1e-15) fail(ErrorCode::DegenerateHomography, "centre maps to infinity");
  return project(Eigen::Vector3d(c.x() / c.z(), c.y() / c.z(), 1.0), model);
}

/// Angle between the square's normal and the viewing ray through its centre,
/// recovered from the normalized-plane homography.
inline double viewing_incidence(const std::array<PixelPoint, 4>& corners, const CameraModel& model) {
  Eigen::Matrix3d h = detail::quad_homography(corners, model);
  if (h(2, 2) < 0.0) h = -h;
  const Eigen::Vector3d n = h.col(0).normalized().cross(h.col(1).normalized()).normalized();
  const Eigen::Vector3d ray = h.col(2).normalized();
  return std::acos(std::clamp(std::abs(n.dot(ray)), 0.0, 1.0));
}

inline Eigen::Vector3d mocap_center_in_camera(const LollypopFrame& frame,
                                              const RigidTransform& extrinsic) {
  const RigidTransform chain =
      frame.platform_pose ? extrinsic * frame.platform_pose->inverse() : extrinsic;
  return chain * frame.mocap_centroid;
}

inline PixelPoint project_mocap_center(const LollypopFrame& frame, const RigidTransform& extrinsic,
                                       const CameraModel& model) {
  return project(mocap_center_in_camera(frame, extrinsic), model);
}

struct FrameError {
  int frame_id = 0;
  std::string camera_id;
  double e2d = 0.0;  // px
  double e3d = 0.0;  // m
  PixelPoint p_aruco = PixelPoint::Zero();
  PixelPoint p_mocap = PixelPoint::Zero();

  bool operator==(const FrameError&) const = default;
};

/// Pixel distance between the two centres and the metric distance between the
/// mocap centroid and the back-projected fiducial centre at the same
/// camera-frame depth.
inline FrameError frame_errors(const LollypopFrame& frame, const RigidTransform& extrinsic,
                               const CameraModel& model) {
  FrameError e;
  e.frame_id = frame.frame_id;
  e.camera_id = frame.camera_id;
  const Eigen::Vector3d x_mocap = mocap_center_in_camera(frame, extrinsic);
  e.p_mocap = project(x_mocap, model);
  e.p_aruco = aruco_center(frame.aruco_corners, model);
  e.e2d = (e.p_aruco - e.p_mocap).norm();
  const Eigen::Vector3d ray = unproject(e.p_aruco, model);
  const Eigen::Vector3d x_aruco = ray * (x_mocap.z() / ray.z());
  e.e3d = (x_mocap - x_aruco).norm();
  return e;
}

struct CameraVerdict {
  std::string camera_id;
  int frames = 0;
  double rmse_2d = 0.0;
  double rmse_3d = 0.0;
  bool pass = false;

  bool operator==(const CameraVerdict&) const = default;
};

struct VerificationReport {
  std::vector<FrameError> per_frame;
  double rmse_2d = 0.0;
  double rmse_3d = 0.0;
  bool pass = false;
  double threshold_2d = 1.0;
  std::vector<CameraVerdict> per_camera;
  int filtered_frames = 0;

  bool operator==(const VerificationReport&) const = default;
};

struct VerifyOptions {
  double threshold_2d = 1.0;                 // px
  std::optional<double> max_incidence;       // rad; frames viewed more obliquely are dropped
};

namespace detail {

// Order-independent pooled RMSE.
inline double pooled_rms(std::vector<double> squares) {
  if (squares.empty()) return 0.0;
  std::sort(squares.begin(), squares.end());
  double sum = 0.0;
  for (double s : squares) sum += s;
  return std::sqrt(sum / static_cast<double>(squares.size()));
}

}  // namespace detail

inline VerificationReport verify(std::span<const LollypopFrame> recording,
                                 const ChainEstimate& estimate, const VerifyOptions& opts = {}) {
  if (recording.empty()) fail(ErrorCode::EmptyRecording, "Lollypop recording has no frames");
  if (!(opts.threshold_2d >= 0.0)) fail(ErrorCode::InvalidArgument, "threshold_2d must be >= 0");

  VerificationReport rep;
  rep.threshold_2d = opts.threshold_2d;
  for (const auto& f : recording) {
    const CameraModel& model = estimate.model(f.camera_id);
    if (opts.max_incidence && viewing_incidence(f.aruco_corners, model) > *opts.max_incidence) {
      ++rep.filtered_frames;
      continue;
    }
    rep.per_frame.push_back(frame_errors(f, estimate.extrinsic(f.camera_id), model));
  }
  if (rep.per_frame.empty()) fail(ErrorCode::EmptyRecording, "all Lollypop frames were filtered");

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_cam;
  std::vector<double> sq2;
  std::vector<double> sq3;
  for (const auto& e : rep.per_frame) {
    sq2.push_back(e.e2d * e.e2d);
    sq3.push_back(e.e3d * e.e3d);
    by_cam[e.camera_id].first.push_back(e.e2d * e.e2d);
    by_cam[e.camera_id].second.push_back(e.e3d * e.e3d);
  }
  rep.rmse_2d = detail::pooled_rms(std::move(sq2));
  rep.rmse_3d = detail::pooled_rms(std::move(sq3));
  rep.pass = rep.rmse_2d <= rep.threshold_2d;
  for (auto& [id, sq] : by_cam) {
    CameraVerdict v;
    v.camera_id = id;
    v.frames = static_cast<int>(sq.first.size());
    v.rmse_2d = detail::pooled_rms(std::move(sq.first));
    v.rmse_3d = detail::pooled_rms(std::move(sq.second));
    v.pass = v.rmse_2d <= rep.threshold_2d;
    rep.per_camera.push_back(v);
  }
  return rep;
}

inline VerificationReport verify(std::span<const LollypopFrame> recording,
                                 const ChainEstimate& estimate, double threshold_2d) {
  VerifyOptions opts;
  opts.threshold_2d = threshold_2d;
  return verify(recording, estimate, opts);
}

enum class ErrorClass { Green, Yellow, Red, Magenta };

inline constexpr std::array<double, 3> kHeatmapThresholds = {0.5, 1.5, 3.0};

inline ErrorClass classify_error(double mean_error) {
  if (mean_error < kHeatmapThresholds[0]) return ErrorClass::Green;
  if (mean_error < kHeatmapThresholds[1]) return ErrorClass::Yellow;
  if (mean_error < kHeatmapThresholds[2]) return ErrorClass::Red;
  return ErrorClass::Magenta;
}

inline const char* to_string(ErrorClass c) {
  switch (c) {
    case ErrorClass::Green: return "green";
    case ErrorClass::Yellow: return "yellow";
    case ErrorClass::Red: return "red";
    case ErrorClass::Magenta: return "magenta";
  }
  return "unknown";
}

struct HeatmapBin {
  double mean_error = 0.0;
  int count = 0;
};

struct ErrorHeatmap {
  std::string camera_id;
  int bin_size = 64;
  int cols = 0;
  int rows = 0;
  std::vector<HeatmapBin> bins;  // row-major
  std::array<double, 3> thresholds = kHeatmapThresholds;

  const HeatmapBin& at(int row, int col) const {
    return bins[static_cast<std::size_t>(row * cols + col)];
  }
  Eigen::Vector2d bin_center(int row, int col) const {
    return {(col + 0.5) * bin_size, (row + 0.5) * bin_size};
  }
  int total_count() const {
    int n = 0;
    for (const auto& b : bins) n += b.count;
    return n;
  }
};

/// Mean e2d per image bin, indexed by the fiducial centre, for one camera.
inline ErrorHeatmap build_heatmap(const VerificationReport& report, const CameraModel& model,
                                  int bin_size = 64) {
  if (bin_size <= 0) fail(ErrorCode::InvalidArgument, "bin_size must be positive");
  if (report.per_frame.empty()) fail(ErrorCode::EmptyRecording, "report has no frames");
  ErrorHeatmap hm;
  hm.camera_id = model.camera_id;
  hm.bin_size = bin_size;
  hm.cols = (model.width + bin_size - 1) / bin_size;
  hm.rows = (model.height + bin_size - 1) / bin_size;
  hm.bins.assign(static_cast<std::size_t>(hm.cols * hm.rows), {});
  std::vector<double> sums(hm.bins.size(), 0.0);
  for (const auto& e : report.per_frame) {
    if (e.camera_id != model.camera_id || !in_image(e.p_aruco, model)) continue;
    const int c = static_cast<int>(e.p_aruco.x()) / bin_size;
    const int r = static_cast<int>(e.p_aruco.y()) / bin_size;
    const auto k = static_cast<std::size_t>(r * hm.cols + c);
    sums[k] += e.e2d;
    ++hm.bins[k].count;
  }
  for (std::size_t k = 0; k < hm.bins.size(); ++k) {
    if (hm.bins[k].count > 0) hm.bins[k].mean_error = sums[k] / hm.bins[k].count;
  }
  return hm;
}

/// Normalized radius of an image point inside the inscribed ellipse
/// (0 at the principal point, 1 on the ellipse through the image edges).
inline double normalized_image_radius(const Eigen::Vector2d& px, const CameraModel& model) {
  const double u = (px.x() - model.cx) / (0.5 * model.width);
  const double v = (px.y() - model.cy) / (0.5 * model.height);
  return std::hypot(u, v);
}

/// Average of occupied bin means whose centres fall in [inner, outer) of the
/// normalized radius. Returns nullopt when no occupied bin qualifies.
inline std::optional<double> region_mean_error(const ErrorHeatmap& hm, const CameraModel& model,
                                               double inner, double outer) {
  double sum = 0.0;
  int n = 0;
  for (int r = 0; r < hm.rows; ++r) {
    for (int c = 0; c < hm.cols; ++c) {
      const HeatmapBin& b = hm.at(r, c);
      if (b.count == 0) continue;
      const double rho = normalized_image_radius(hm.bin_center(r, c), model);
      if (rho >= inner && rho < outer) {
        sum += b.mean_error;
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

/// Plain PPM (P3), one pixel per bin; empty bins are black.
inline void write_heatmap_ppm(const ErrorHeatmap& hm, std::ostream& os) {
  os << "P3\n" << hm.cols << ' ' << hm.rows << "\n255\n";
  for (int r = 0; r < hm.rows; ++r) {
    for (int c = 0; c < hm.cols; ++c) {
      const HeatmapBin& b = hm.at(r, c);
      const char* rgb = "0 0 0";
      if (b.count > 0) {
        switch (classify_error(b.mean_error)) {
          case ErrorClass::Green: rgb = "0 200 0"; break;
          case ErrorClass::Yellow: rgb = "255 220 0"; break;
          case ErrorClass::Red: rgb = "220 0 0"; break;
          case ErrorClass::Magenta: rgb = "255 0 255"; break;
        }
      }
      os << rgb << (c + 1 == hm.cols ? '\n' : ' ');
    }
  }
}

inline void write_heatmap_grid(const ErrorHeatmap& hm, std::ostream& os) {
  os << "# camera " << hm.camera_id << " bin_size " << hm.bin_size << " px, mean e2d per bin\n";
  char buf[32];
  for (int r = 0; r < hm.rows; ++r) {
    for (int c = 0; c < hm.cols; ++c) {
      const HeatmapBin& b = hm.at(r, c);
      if (b.count == 0) {
        os << "     -";
      } else {
        std::snprintf(buf, sizeof buf, " %5.2f", b.mean_error);
        os << buf;
      }
    }
    os << '\n';
  }
}

struct DriftPoint {
  int index = 0;
  double rmse_2d = 0.0;
  double rmse_3d = 0.0;
};

struct DriftSeries {
  std::vector<DriftPoint> points;
  double slope_2d = 0.0;  // px per report
  double slope_3d = 0.0;  // m per report
  bool increasing = false;         // slope_2d > 0
  bool strictly_increasing = false;
};

namespace detail {

// Least-squares slope against the index, written over pairs so that a
// constant series gives exactly zero.
inline double index_slope(const std::vector<double>& y) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = i + 1; j < y.size(); ++j) {
      const double dx = static_cast<double>(j - i);
      num += dx * (y[j] - y[i]);
      den += dx * dx;
    }
  }
  return num / den;
}

}  // namespace detail

inline DriftSeries drift_series(std::span<const VerificationReport> reports) {
  if (reports.size() < 2) fail(ErrorCode::TooFewReports, "drift needs >= 2 reports");
  DriftSeries s;
  std::vector<double> y2;
  std::vector<double> y3;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    s.points.push_back({static_cast<int>(i), reports[i].rmse_2d, reports[i].rmse_3d});
    y2.push_back(reports[i].rmse_2d);
    y3.push_back(reports[i].rmse_3d);
  }
  s.slope_2d = detail::index_slope(y2);
  s.slope_3d = detail::index_slope(y3);
  s.increasing = s.slope_2d > 0.0;
  s.strictly_increasing = true;
  for (std::size_t i = 1; i < y2.size(); ++i) {
    if (!(y2[i] > y2[i - 1])) s.strictly_increasing = false;
  }
  return s;
}

}  // namespace mocap_calib

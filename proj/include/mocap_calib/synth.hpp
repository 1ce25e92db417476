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

// Synthetic capture sessions with known ground truth: a headset with fisheye
// cameras, a marker board waved along a smooth trajectory, and a Lollypop
// verification recording. Everything is a pure function of the SceneSpec seed.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mocap_calib/camera.hpp"
#include "mocap_calib/chain.hpp"
#include "mocap_calib/error.hpp"
#include "mocap_calib/geometry.hpp"
#include "mocap_calib/verify.hpp"

namespace mocap_calib {

inline constexpr double kDeg = std::numbers::pi / 180.0;

/// Waypoint sampling volume for the board, in the platform frame
/// (x right, y down, z forward).
struct TrajectorySpec {
  int waypoints = 8;
  double min_distance = 0.6;   // m
  double max_distance = 1.4;   // m
  double max_azimuth = 45.0 * kDeg;
  double min_elevation = -25.0 * kDeg;
  double max_elevation = 15.0 * kDeg;
  double max_tilt = 35.0 * kDeg;
  double max_roll = 45.0 * kDeg;
  double max_incidence = 75.0 * kDeg;  // corners seen more obliquely are not detected
};

struct LollypopSpec {
  int frame_count = 0;  // distributed round-robin over cameras
  double side = 0.1;    // m
  double min_depth = 0.6;
  double max_depth = 2.0;
  double max_tilt = 30.0 * kDeg;
  double max_normalized_radius = 0.95;  // of the inscribed image ellipse
  bool moving_platform = true;          // headset pose changes per frame
};

struct SceneSpec {
  int camera_count = 4;
  int frame_count = 200;
  BoardGeometry board = make_marker_board();
  RigidTransform true_x;
  std::map<std::string, RigidTransform> true_extrinsics;
  std::vector<CameraModel> true_intrinsics;
  std::optional<RigidTransform> platform_pose;  // static headset pose during calibration
  double pixel_noise_sigma = 0.0;               // px, per axis
  double mocap_rotation_noise = 0.0;            // rad
  double mocap_translation_noise = 0.0;         // m
  TrajectorySpec trajectory;
  LollypopSpec lollypop;
  std::uint64_t seed = 0;

  void validate() const {
    if (camera_count <= 0 || frame_count < 0) fail(ErrorCode::InvalidArgument, "bad scene size");
    if (pixel_noise_sigma < 0.0 || mocap_rotation_noise < 0.0 || mocap_translation_noise < 0.0) {
      fail(ErrorCode::InvalidArgument, "noise parameters must be >= 0");
    }
    if (static_cast<int>(true_intrinsics.size()) != camera_count ||
        static_cast<int>(true_extrinsics.size()) != camera_count) {
      fail(ErrorCode::InvalidArgument, "scene needs intrinsics and extrinsics for every camera");
    }
    if (trajectory.waypoints < 2) fail(ErrorCode::InvalidArgument, "need >= 2 waypoints");
  }
};

struct SyntheticScene {
  CalibrationDataset dataset;
  std::vector<LollypopFrame> lollypop_recording;
  ChainEstimate ground_truth;
};

/// Synthetic wide-angle fisheye (about 170 deg horizontally on 1280 x 1024).
inline CameraModel default_fisheye_camera(int index) {
  CameraModel m;
  m.camera_id = "cam" + std::to_string(index);
  m.width = 1280;
  m.height = 1024;
  m.fx = 430.0 + 3.0 * index;
  m.fy = m.fx + 0.5;
  m.cx = 642.5 - index;
  m.cy = 510.5 + index;
  m.radial = {0.025 - 0.002 * index, -0.008, 0.0012, -1e-4, 2e-6, -1e-7};
  m.tangential = {1.5e-4, -1.0e-4};
  return m;
}

/// Camera i (camera <- platform) on a headset: cameras yawed across
/// [-60, 60] deg, the outer ones pitched down by 10 deg.
inline RigidTransform default_camera_extrinsic(int index, int count) {
  double yaw = 0.0;
  if (count == 4) {
    static constexpr double kYaw[4] = {-20.0, 20.0, -60.0, 60.0};
    yaw = kYaw[index] * kDeg;
  } else if (count > 1) {
    yaw = (-60.0 + 120.0 * index / (count - 1)) * kDeg;
  }
  const double pitch = std::abs(yaw) > 40.0 * kDeg ? -10.0 * kDeg : 0.0;
  const Eigen::Matrix3d r_pc = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
                                Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()))
                                   .toRotationMatrix();
  const Eigen::Vector3d pos(0.08 * std::sin(yaw), 0.01 * index, 0.02 * std::cos(yaw));
  return RigidTransform{r_pc, pos}.inverse();
}

/// Default scene: random X rotation, X translation within 0.15 m, a static
/// headset pose in the mocap world and the default camera rig.
inline SceneSpec default_scene_spec(std::uint64_t seed, int camera_count = 4, int frame_count = 200,
                                    double pixel_noise_sigma = 0.0) {
  SceneSpec spec;
  spec.seed = seed;
  spec.camera_count = camera_count;
  spec.frame_count = frame_count;
  spec.pixel_noise_sigma = pixel_noise_sigma;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  spec.true_x = {random_rotation(rng), Eigen::Vector3d(uni(rng), uni(rng), uni(rng)) * 0.15};
  spec.platform_pose = RigidTransform{
      so3_exp(Eigen::Vector3d(0.1 * uni(rng), std::numbers::pi * uni(rng), 0.1 * uni(rng))),
      Eigen::Vector3d(uni(rng), 1.6 + 0.1 * uni(rng), uni(rng))};
  for (int i = 0; i < camera_count; ++i) {
    const CameraModel cam = default_fisheye_camera(i);
    spec.true_intrinsics.push_back(cam);
    spec.true_extrinsics[cam.camera_id] = default_camera_extrinsic(i, camera_count);
  }
  return spec;
}

namespace detail {

// Orientation whose z axis (into the board) is `forward`, x roughly to the right.
inline Eigen::Matrix3d facing_rotation(const Eigen::Vector3d& forward) {
  const Eigen::Vector3d z = forward.normalized();
  Eigen::Vector3d x = Eigen::Vector3d::UnitY().cross(z);
  if (x.norm() < 1e-6) x = Eigen::Vector3d::UnitX();
  x.normalize();
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = z.cross(x);
  r.col(2) = z;
  return r;
}

template <class Rng>
Eigen::Matrix3d random_tilt(Rng& rng, double max_tilt, double max_roll) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double phi = std::numbers::pi * uni(rng);
  const double tilt = max_tilt * std::abs(uni(rng));
  const Eigen::Vector3d in_plane(std::cos(phi), std::sin(phi), 0.0);
  return so3_exp(in_plane * tilt) * so3_exp(Eigen::Vector3d::UnitZ() * max_roll * uni(rng));
}

inline Eigen::Vector3d catmull_rom(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                                   const Eigen::Vector3d& p2, const Eigen::Vector3d& p3, double u) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3);
}

struct BoardPath {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Quaterniond> orientations;

  RigidTransform at(double t) const {
    const int segments = static_cast<int>(positions.size()) - 1;
    const double s = std::clamp(t, 0.0, 1.0) * segments;
    const int i = std::min(static_cast<int>(s), segments - 1);
    const double u = s - i;
    const auto pt = [&](int k) {
      return positions[static_cast<std::size_t>(std::clamp(k, 0, segments))];
    };
    const Eigen::Vector3d p = catmull_rom(pt(i - 1), pt(i), pt(i + 1), pt(i + 2), u);
    const Eigen::Quaterniond q = orientations[static_cast<std::size_t>(i)].slerp(
        u, orientations[static_cast<std::size_t>(i + 1)]);
    return {q.normalized().toRotationMatrix(), p};
  }
};

template <class Rng>
BoardPath sample_path(const TrajectorySpec& ts, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  BoardPath path;
  for (int k = 0; k < ts.waypoints; ++k) {
    const double az = ts.max_azimuth * (2.0 * uni(rng) - 1.0);
    const double el = ts.min_elevation + (ts.max_elevation - ts.min_elevation) * uni(rng);
    const double dist = ts.min_distance + (ts.max_distance - ts.min_distance) * uni(rng);
    const Eigen::Vector3d dir(std::sin(az) * std::cos(el), -std::sin(el),
                              std::cos(az) * std::cos(el));
    path.positions.push_back(dist * dir);
    Eigen::Quaterniond q(facing_rotation(dir) * random_tilt(rng, ts.max_tilt, ts.max_roll));
    if (k > 0 && q.dot(path.orientations.back()) < 0.0) q.coeffs() = -q.coeffs();
    path.orientations.push_back(q);
  }
  return path;
}

// Corner visibility: printed face towards the camera, not too oblique, inside
// the field of view and the image.
inline bool corner_visible(const Eigen::Vector3d& p_cam, const Eigen::Matrix3d& board_to_cam,
                           const CameraModel& model, double max_incidence, PixelPoint* px) {
  const Eigen::Vector3d normal = -board_to_cam.col(2);  // printed face normal
  const Eigen::Vector3d to_cam = -p_cam.normalized();
  if (normal.dot(to_cam) <= std::cos(max_incidence)) return false;
  if (std::atan2(p_cam.head<2>().norm(), p_cam.z()) >= model.theta_max) return false;
  *px = project(p_cam, model);
  return in_image(*px, model);
}

}  // namespace detail

inline ChainEstimate ground_truth_estimate(const SceneSpec& spec) {
  ChainEstimate gt;
  gt.board_to_marker = spec.true_x;
  gt.extrinsics = spec.true_extrinsics;
  for (const auto& c : spec.true_intrinsics) gt.intrinsics[c.camera_id] = c;
  return gt;
}

/// Lollypop frames under the given (true) calibration: the device centre is
/// the mocap centroid, corners are projected and perturbed by pixel noise.
inline std::vector<LollypopFrame> generate_lollypop(const SceneSpec& spec,
                                                    const ChainEstimate& truth) {
  const LollypopSpec& ls = spec.lollypop;
  std::vector<LollypopFrame> out;
  if (ls.frame_count <= 0) return out;
  std::mt19937_64 rng(spec.seed * 0x2545F4914F6CDD1DULL + 17);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::string> cams;
  for (const auto& c : spec.true_intrinsics) cams.push_back(c.camera_id);
  const RigidTransform base_platform = spec.platform_pose.value_or(RigidTransform::identity());

  const double h = 0.5 * ls.side;
  const std::array<Eigen::Vector3d, 4> local = {Eigen::Vector3d(-h, -h, 0.0), Eigen::Vector3d(h, -h, 0.0),
                                                Eigen::Vector3d(h, h, 0.0), Eigen::Vector3d(-h, h, 0.0)};
  for (int k = 0; k < ls.frame_count; ++k) {
    const std::string& cam_id = cams[static_cast<std::size_t>(k) % cams.size()];
    const CameraModel& model = truth.model(cam_id);
    const RigidTransform& y = truth.extrinsic(cam_id);

    RigidTransform platform = base_platform;
    if (ls.moving_platform) {
      const Eigen::Vector3d w = random_unit_vector(rng) * (0.5 * uni(rng));
      const Eigen::Vector3d t = random_unit_vector(rng) * (0.3 * uni(rng));
      platform = base_platform * RigidTransform{so3_exp(w), t};
    }

    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double rho = ls.max_normalized_radius * std::sqrt(uni(rng));
      const double phi = 2.0 * std::numbers::pi * uni(rng);
      const PixelPoint target(model.cx + rho * std::cos(phi) * 0.5 * model.width,
                              model.cy + rho * std::sin(phi) * 0.5 * model.height);
      if (!in_image(target, model)) continue;
      const Eigen::Vector3d ray = unproject(target, model);
      const double depth = ls.min_depth + (ls.max_depth - ls.min_depth) * uni(rng);
      const Eigen::Vector3d center = depth * ray;
      const Eigen::Matrix3d r_dev =
          detail::facing_rotation(ray) * detail::random_tilt(rng, ls.max_tilt, std::numbers::pi / 4);

      LollypopFrame f;
      f.frame_id = k;
      f.camera_id = cam_id;
      bool ok = true;
      for (std::size_t i = 0; i < 4 && ok; ++i) {
        const Eigen::Vector3d pc = center + r_dev * local[i];
        const Eigen::Vector3d dir = pc.normalized();
        if (dir.z() < 0.05) {
          ok = false;
          break;
        }
        const PixelPoint px = project(pc, model);
        if (!in_image(px, model)) ok = false;
        f.aruco_corners[i] = px;
      }
      if (!ok) continue;
      for (auto& c : f.aruco_corners) {
        c += spec.pixel_noise_sigma * PixelPoint(noise(rng), noise(rng));
      }
      f.mocap_centroid = platform * (y.inverse() * center);
      if (spec.platform_pose || ls.moving_platform) f.platform_pose = platform;
      out.push_back(f);
      placed = true;
    }
    if (!placed) fail(ErrorCode::InfeasibleTrajectory, "could not place Lollypop device in view");
  }
  return out;
}

inline SyntheticScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticScene scene;
  scene.ground_truth = ground_truth_estimate(spec);
  const RigidTransform platform = spec.platform_pose.value_or(RigidTransform::identity());
  const RigidTransform x_inv = spec.true_x.inverse();

  for (int attempt = 0; attempt < 100; ++attempt) {
    const detail::BoardPath path = detail::sample_path(spec.trajectory, rng);
    CalibrationDataset ds;
    ds.board = spec.board;
    ds.cameras = spec.true_intrinsics;
    std::map<std::string, int> frames_seen;

    for (int k = 0; k < spec.frame_count; ++k) {
      const double t = spec.frame_count > 1 ? static_cast<double>(k) / (spec.frame_count - 1) : 0.0;
      const RigidTransform board_in_platform = path.at(t);
      MocapFrame f;
      f.frame_id = k;
      f.time = k / 30.0;
      f.board_pose = platform * board_in_platform * x_inv;
      if (spec.mocap_rotation_noise > 0.0 || spec.mocap_translation_noise > 0.0) {
        const Eigen::Vector3d dw(noise(rng), noise(rng), noise(rng));
        const Eigen::Vector3d dt(noise(rng), noise(rng), noise(rng));
        f.board_pose = RigidTransform{so3_exp(spec.mocap_rotation_noise * dw),
                                      spec.mocap_translation_noise * dt} *
                       f.board_pose;
      }
      if (spec.platform_pose) f.platform_pose = platform;
      ds.frames.push_back(f);

      for (const auto& model : spec.true_intrinsics) {
        const RigidTransform board_to_cam =
            spec.true_extrinsics.at(model.camera_id) * board_in_platform;
        int seen = 0;
        for (const auto& [corner_id, p_local] : spec.board.corners) {
          const Eigen::Vector3d pc = board_to_cam * p_local;
          PixelPoint px;
          if (!detail::corner_visible(pc, board_to_cam.rotation, model,
                                      spec.trajectory.max_incidence, &px)) {
            continue;
          }
          px += spec.pixel_noise_sigma * PixelPoint(noise(rng), noise(rng));
          ds.observations.push_back({model.camera_id, k, corner_id, px});
          ++seen;
        }
        if (seen >= 4) ++frames_seen[model.camera_id];
      }
    }

    const bool coverage_ok = std::all_of(
        spec.true_intrinsics.begin(), spec.true_intrinsics.end(), [&](const CameraModel& c) {
          return 2 * frames_seen[c.camera_id] >= spec.frame_count;
        });
    if (!coverage_ok) continue;
    scene.dataset = std::move(ds);
    scene.lollypop_recording = generate_lollypop(spec, scene.ground_truth);
    return scene;
  }
  fail(ErrorCode::InfeasibleTrajectory, "board trajectory misses a camera in 100 attempts");
}

/// Which transforms perturb_estimate touches.
struct PerturbSelector {
  bool board_to_marker = false;
  bool all_cameras = false;
  std::vector<std::string> cameras;
};

/// Left-multiplies each selected transform by a rotation of the given
/// magnitude about a random (or the fixed) axis and adds a translation of the
/// given magnitude along a random direction.
inline ChainEstimate perturb_estimate(const ChainEstimate& truth, double rotation_err,
                                      double translation_err, const PerturbSelector& which,
                                      std::uint64_t seed,
                                      const std::optional<Eigen::Vector3d>& fixed_axis = {}) {
  if (rotation_err < 0.0 || translation_err < 0.0) {
    fail(ErrorCode::InvalidArgument, "perturbation magnitudes must be >= 0");
  }
  std::mt19937_64 rng(seed);
  const auto perturb = [&](const RigidTransform& t) {
    const Eigen::Vector3d axis = fixed_axis ? fixed_axis->normalized() : random_unit_vector(rng);
    const Eigen::Vector3d dir = random_unit_vector(rng);
    return RigidTransform{so3_exp(axis * rotation_err), dir * translation_err} * t;
  };
  ChainEstimate out = truth;
  if (which.board_to_marker) out.board_to_marker = perturb(truth.board_to_marker);
  for (auto& [id, y] : out.extrinsics) {
    const bool selected = which.all_cameras || std::find(which.cameras.begin(), which.cameras.end(),
                                                         id) != which.cameras.end();
    if (selected) y = perturb(y);
  }
  return out;
}

}  // namespace mocap_calib

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

// Kinematic chain tying mocap poses, board geometry and cameras together:
//
//   u = pi( Y_c * P(t)^-1 * A(t) * X * p_local ; theta_c )
//
// X is the board-to-marker transform (board frame -> mocap rigid body), A(t)
// the tracked rigid-body pose, P(t) the optional platform pose (identity when
// absent) and Y_c the extrinsic of camera c.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mocap_calib/camera.hpp"
#include "mocap_calib/error.hpp"
#include "mocap_calib/geometry.hpp"

namespace mocap_calib {

struct BoardGeometry {
  std::string board_id;
  std::map<int, Eigen::Vector3d> corners;  // corner_id -> board frame position (m)

  const Eigen::Vector3d& corner(int corner_id) const {
    const auto it = corners.find(corner_id);
    if (it == corners.end()) {
      fail(ErrorCode::ValidationError, "unknown corner_id " + std::to_string(corner_id));
    }
    return it->second;
  }

  bool operator==(const BoardGeometry&) const = default;
};

/// Planar grid of square markers in the z = 0 plane, centred on the origin with
/// x to the right and y down. Corner ids are 4 * marker + {TL, TR, BR, BL}.
/// The defaults describe a 6 x 4 grid of 59 mm markers spaced 29.5 mm apart.
inline BoardGeometry make_marker_board(int cols = 6, int rows = 4, double marker_side = 0.059,
                                       double spacing = 0.0295, std::string board_id = "board") {
  BoardGeometry board;
  board.board_id = std::move(board_id);
  const double pitch = marker_side + spacing;
  const double width = cols * marker_side + (cols - 1) * spacing;
  const double height = rows * marker_side + (rows - 1) * spacing;
  int marker = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c, ++marker) {
      const double x0 = c * pitch - 0.5 * width;
      const double y0 = r * pitch - 0.5 * height;
      board.corners[4 * marker + 0] = {x0, y0, 0.0};
      board.corners[4 * marker + 1] = {x0 + marker_side, y0, 0.0};
      board.corners[4 * marker + 2] = {x0 + marker_side, y0 + marker_side, 0.0};
      board.corners[4 * marker + 3] = {x0, y0 + marker_side, 0.0};
    }
  }
  return board;
}

struct MocapFrame {
  int frame_id = 0;
  double time = 0.0;                               // s
  RigidTransform board_pose;                       // A(t)
  std::optional<RigidTransform> platform_pose;     // P(t)

  /// P(t)^-1 * A(t): rigid body frame -> platform (or world) frame.
  RigidTransform marker_to_platform() const {
    return platform_pose ? platform_pose->inverse() * board_pose : board_pose;
  }

  bool operator==(const MocapFrame&) const = default;
};

struct Observation {
  std::string camera_id;
  int frame_id = 0;
  int corner_id = 0;
  PixelPoint pixel = PixelPoint::Zero();

  bool operator==(const Observation&) const = default;
};

struct CalibrationDataset {
  std::vector<MocapFrame> frames;  // strictly increasing frame_id
  std::vector<Observation> observations;
  BoardGeometry board;
  std::vector<CameraModel> cameras;  // initial / factory intrinsics

  const MocapFrame* find_frame(int frame_id) const {
    const auto it = std::lower_bound(frames.begin(), frames.end(), frame_id,
                                     [](const MocapFrame& f, int id) { return f.frame_id < id; });
    return (it != frames.end() && it->frame_id == frame_id) ? &*it : nullptr;
  }

  const MocapFrame& frame(int frame_id) const {
    const MocapFrame* f = find_frame(frame_id);
    if (f == nullptr) fail(ErrorCode::ValidationError, "unknown frame_id " + std::to_string(frame_id));
    return *f;
  }

  const CameraModel* find_camera(const std::string& id) const {
    for (const auto& c : cameras) {
      if (c.camera_id == id) return &c;
    }
    return nullptr;
  }

  const CameraModel& camera(const std::string& id) const {
    const CameraModel* c = find_camera(id);
    if (c == nullptr) fail(ErrorCode::ValidationError, "unknown camera_id " + id);
    return *c;
  }

  /// Checks every referential invariant; throws ValidationError naming the first violation.
  void validate() const {
    std::set<std::string> cam_ids;
    for (const auto& c : cameras) {
      c.validate();
      if (!cam_ids.insert(c.camera_id).second) {
        fail(ErrorCode::ValidationError, "duplicate camera_id " + c.camera_id);
      }
    }
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (frames[i].frame_id <= frames[i - 1].frame_id) {
        fail(ErrorCode::ValidationError,
             "frame_ids not strictly increasing at frame_id " + std::to_string(frames[i].frame_id));
      }
    }
    std::set<std::tuple<std::string, int, int>> seen;
    for (const auto& o : observations) {
      if (cam_ids.count(o.camera_id) == 0) {
        fail(ErrorCode::ValidationError, "observation references missing camera_id " + o.camera_id);
      }
      if (find_frame(o.frame_id) == nullptr) {
        fail(ErrorCode::ValidationError,
             "observation references missing frame_id " + std::to_string(o.frame_id));
      }
      if (board.corners.count(o.corner_id) == 0) {
        fail(ErrorCode::ValidationError,
             "observation references missing corner_id " + std::to_string(o.corner_id));
      }
      if (!o.pixel.allFinite()) {
        fail(ErrorCode::ValidationError, "observation pixel is not finite");
      }
      if (!seen.emplace(o.camera_id, o.frame_id, o.corner_id).second) {
        fail(ErrorCode::ValidationError,
             "duplicate observation (" + o.camera_id + ", " + std::to_string(o.frame_id) + ", " +
                 std::to_string(o.corner_id) + ")");
      }
    }
  }

  bool operator==(const CalibrationDataset&) const = default;
};

struct ChainEstimate {
  RigidTransform board_to_marker;                     // X
  std::map<std::string, RigidTransform> extrinsics;   // Y_c
  std::map<std::string, CameraModel> intrinsics;      // theta_c

  const RigidTransform& extrinsic(const std::string& id) const {
    const auto it = extrinsics.find(id);
    if (it == extrinsics.end()) fail(ErrorCode::ValidationError, "no extrinsic for camera " + id);
    return it->second;
  }
  const CameraModel& model(const std::string& id) const {
    const auto it = intrinsics.find(id);
    if (it == intrinsics.end()) fail(ErrorCode::ValidationError, "no intrinsics for camera " + id);
    return it->second;
  }

  bool operator==(const ChainEstimate&) const = default;
};

/// Identity transforms and the dataset's own intrinsics for every camera.
inline ChainEstimate initial_estimate(const CalibrationDataset& dataset) {
  ChainEstimate est;
  for (const auto& c : dataset.cameras) {
    est.extrinsics[c.camera_id] = RigidTransform::identity();
    est.intrinsics[c.camera_id] = c;
  }
  return est;
}

/// Key of a camera-frame reference point.
struct RefKey {
  std::string camera_id;
  int frame_id = 0;
  int corner_id = 0;
  auto operator<=>(const RefKey&) const = default;
};

/// Board corners expressed in each camera frame from per-frame board poses.
struct PnpReferences {
  std::map<RefKey, Eigen::Vector3d> points;  // camera frame, m
  std::map<std::pair<std::string, int>, RigidTransform> board_poses;  // (camera, frame) -> board in camera
  std::vector<std::string> cameras_without_references;
};

/// Intrinsic regularization: sum_c lambda * sum_i w_i (theta_i - prior_i)^2.
struct RegularizationConfig {
  enum class PrincipalPointPrior { Factory, ImageCenter };
  enum class DistortionPrior { Zero, Factory };

  double lambda = 1.0;
  double focal_weight = 0.0;
  double principal_point_weight = 1e-2;  // px^-2
  double distortion_weight = 1e2;
  PrincipalPointPrior principal_point_prior = PrincipalPointPrior::Factory;
  DistortionPrior distortion_prior = DistortionPrior::Zero;

  IntrinsicsVector weights() const {
    IntrinsicsVector w;
    w << focal_weight, focal_weight, principal_point_weight, principal_point_weight,
        IntrinsicsVector::Constant(distortion_weight).tail<8>();
    return w;
  }

  IntrinsicsVector prior(const CameraModel& factory) const {
    IntrinsicsVector p = factory.params();
    if (principal_point_prior == PrincipalPointPrior::ImageCenter) {
      p(2) = 0.5 * factory.width;
      p(3) = 0.5 * factory.height;
    }
    if (distortion_prior == DistortionPrior::Zero) p.tail<8>().setZero();
    return p;
  }

  bool operator==(const RegularizationConfig&) const = default;
};

/// Full 2x24 residual Jacobian: left twist on Y_c, left twist on X, intrinsics.
using ChainJacobian = Eigen::Matrix<double, 2, 24>;

namespace detail {

inline PixelPoint chain_predict(const RigidTransform& y, const RigidTransform& marker_to_platform,
                                const RigidTransform& x, const Eigen::Vector3d& p_local,
                                const CameraModel& model, bool check_fov, ChainJacobian* jac) {
  const Eigen::Vector3d p_rb = x * p_local;
  const Eigen::Vector3d p_plat = marker_to_platform * p_rb;
  const Eigen::Vector3d p_cam = y * p_plat;
  if (jac == nullptr) return project_impl(p_cam, model, check_fov, nullptr);

  ProjectionJacobians pj;
  const PixelPoint px = project_impl(p_cam, model, check_fov, &pj);
  Eigen::Matrix<double, 3, 6> d_y;
  d_y << -hat(p_cam), Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 3, 6> d_x;
  d_x << -hat(p_rb), Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d r_chain = y.rotation * marker_to_platform.rotation;
  jac->block<2, 6>(0, 0) = pj.point * d_y;
  jac->block<2, 6>(0, 6) = pj.point * r_chain * d_x;
  jac->block<2, 12>(0, 12) = pj.intrinsics;
  return px;
}

}  // namespace detail

inline PixelPoint predict_pixel(const ChainEstimate& est, const BoardGeometry& board,
                                const MocapFrame& frame, const std::string& camera_id,
                                int corner_id) {
  return detail::chain_predict(est.extrinsic(camera_id), frame.marker_to_platform(),
                               est.board_to_marker, board.corner(corner_id), est.model(camera_id),
                               true, nullptr);
}

/// predicted - detected, in pixels.
inline Eigen::Vector2d residual(const ChainEstimate& est, const BoardGeometry& board,
                                const MocapFrame& frame, const Observation& obs) {
  return predict_pixel(est, board, frame, obs.camera_id, obs.corner_id) - obs.pixel;
}

inline ChainJacobian chain_jacobian(const ChainEstimate& est, const BoardGeometry& board,
                                    const MocapFrame& frame, const Observation& obs) {
  ChainJacobian jac;
  detail::chain_predict(est.extrinsic(obs.camera_id), frame.marker_to_platform(),
                        est.board_to_marker, board.corner(obs.corner_id),
                        est.model(obs.camera_id), true, &jac);
  return jac;
}

namespace detail {

// Residual with the projection formula extended past theta_max, so that
// objectives stay defined for any estimate.
inline Eigen::Vector2d total_residual(const ChainEstimate& est, const CalibrationDataset& ds,
                                      const Observation& obs) {
  const MocapFrame& frame = ds.frame(obs.frame_id);
  return chain_predict(est.extrinsic(obs.camera_id), frame.marker_to_platform(),
                       est.board_to_marker, ds.board.corner(obs.corner_id),
                       est.model(obs.camera_id), false, nullptr) -
         obs.pixel;
}

}  // namespace detail

inline double regularization_cost(const ChainEstimate& est, const CalibrationDataset& dataset,
                                  const RegularizationConfig& reg) {
  if (reg.lambda == 0.0) return 0.0;
  const IntrinsicsVector w = reg.weights();
  double cost = 0.0;
  for (const auto& factory : dataset.cameras) {
    const IntrinsicsVector d = est.model(factory.camera_id).params() - reg.prior(factory);
    cost += reg.lambda * (w.array() * d.array().square()).sum();
  }
  return cost;
}

/// Sum of squared pixel residuals plus the intrinsic regularization term.
inline double objective_2d(const ChainEstimate& est, const CalibrationDataset& dataset,
                           const RegularizationConfig& reg) {
  double sum = 0.0;
  for (const auto& obs : dataset.observations) {
    sum += detail::total_residual(est, dataset, obs).squaredNorm();
  }
  return sum + regularization_cost(est, dataset, reg);
}

/// Sum of squared 3-D distances between chain-transformed corners and the
/// camera-frame references. Involves no projection.
inline double objective_3d(const ChainEstimate& est, const CalibrationDataset& dataset,
                           const PnpReferences& refs) {
  double sum = 0.0;
  for (const auto& [key, p_eye] : refs.points) {
    const MocapFrame& frame = dataset.frame(key.frame_id);
    const Eigen::Vector3d p = est.extrinsic(key.camera_id) * (frame.marker_to_platform() *
                              (est.board_to_marker * dataset.board.corner(key.corner_id)));
    sum += (p - p_eye).squaredNorm();
  }
  return sum;
}

/// Pooled per-point RMSE over all corner observations, in pixels.
inline double board_rmse(const ChainEstimate& est, const CalibrationDataset& dataset) {
  if (dataset.observations.empty()) fail(ErrorCode::EmptyDataset, "no observations");
  double sum = 0.0;
  for (const auto& obs : dataset.observations) {
    sum += detail::total_residual(est, dataset, obs).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(dataset.observations.size()));
}

/// Board RMSE restricted to the observations of one camera.
inline double camera_board_rmse(const ChainEstimate& est, const CalibrationDataset& dataset,
                                const std::string& camera_id) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& obs : dataset.observations) {
    if (obs.camera_id != camera_id) continue;
    sum += detail::total_residual(est, dataset, obs).squaredNorm();
    ++n;
  }
  if (n == 0) fail(ErrorCode::EmptyDataset, "no observations for camera " + camera_id);
  return std::sqrt(sum / static_cast<double>(n));
}

}  // namespace mocap_calib

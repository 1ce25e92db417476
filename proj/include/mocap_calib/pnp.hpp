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

// Planar board pose from one camera frame: rays from unprojection, homography
// initialization on the board plane, then LM on the pixel reprojection error.

#include <Eigen/Core>
#include <Eigen/SVD>

#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mocap_calib/camera.hpp"
#include "mocap_calib/chain.hpp"
#include "mocap_calib/error.hpp"
#include "mocap_calib/geometry.hpp"
#include "mocap_calib/homography.hpp"
#include "mocap_calib/lm.hpp"

namespace mocap_calib {

namespace detail {

struct PnpProblem {
  using State = RigidTransform;
  std::vector<Eigen::Vector3d> points;
  std::vector<PixelPoint> pixels;
  const CameraModel* model = nullptr;

  int dimension() const { return 6; }

  double cost(const State& t) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      sum += (project_impl(t * points[i], *model, false, nullptr) - pixels[i]).squaredNorm();
    }
    return sum;
  }

  double linearize(const State& t, Eigen::MatrixXd& jtj, Eigen::VectorXd& jtr) const {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Vector6d g = Vector6d::Zero();
    double sum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Eigen::Vector3d pc = t * points[i];
      ProjectionJacobians pj;
      const Eigen::Vector2d r = project_impl(pc, *model, false, &pj) - pixels[i];
      Eigen::Matrix<double, 3, 6> dp;
      dp << -hat(pc), Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> j = pj.point * dp;
      h += j.transpose() * j;
      g += j.transpose() * r;
      sum += r.squaredNorm();
    }
    jtj = h;
    jtr = g;
    return sum;
  }

  State retract(const State& t, const Eigen::VectorXd& delta) const {
    return retract_left(t, delta.head<6>());
  }
};

}  // namespace detail

/// Pose of the board in the camera frame from one frame's detections.
inline RigidTransform pnp_board_pose(std::span<const Observation> observations,
                                     const BoardGeometry& board, const CameraModel& model) {
  if (observations.size() < 4) {
    fail(ErrorCode::InsufficientCorners, "PnP needs >= 4 corners, got " +
                                             std::to_string(observations.size()));
  }
  std::vector<Eigen::Vector3d> pts;
  std::vector<PixelPoint> pixels;
  pts.reserve(observations.size());
  pixels.reserve(observations.size());
  for (const auto& o : observations) {
    pts.push_back(board.corner(o.corner_id));
    pixels.push_back(o.pixel);
  }

  // Board plane frame: q = B^T (p - c) with B = [e1 e2 e1 x e2].
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - centroid) * (p - centroid).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU);
  const Eigen::Vector3d spread = svd.singularValues();
  if (!(spread(0) > 0.0) || spread(1) <= 1e-12 * spread(0)) {
    fail(ErrorCode::PlanarDegeneracy, "board corners are collinear");
  }
  Eigen::Matrix3d basis;
  basis.col(0) = svd.matrixU().col(0);
  basis.col(1) = svd.matrixU().col(1);
  basis.col(2) = basis.col(0).cross(basis.col(1));
  const RigidTransform board_to_plane{basis.transpose(), -(basis.transpose() * centroid)};

  std::vector<Eigen::Vector2d> plane_pts;
  std::vector<Eigen::Vector2d> image_pts;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Eigen::Vector3d ray = unproject(pixels[i], model);
    if (ray.z() <= 1e-3) continue;  // beyond 90 deg the pinhole chart breaks down
    plane_pts.push_back((board_to_plane * pts[i]).head<2>());
    image_pts.push_back(ray.head<2>() / ray.z());
  }
  if (plane_pts.size() < 4) {
    fail(ErrorCode::InsufficientCorners, "fewer than 4 corners in front of the camera");
  }
  if (detail::spread_ratio(plane_pts) < 1e-12) {
    fail(ErrorCode::PlanarDegeneracy, "usable board corners are collinear");
  }

  const Eigen::Matrix3d h = fit_homography(plane_pts, image_pts);
  double scale = 2.0 / (h.col(0).norm() + h.col(1).norm());
  if (h(2, 2) * scale < 0.0) scale = -scale;
  Eigen::Matrix3d r;
  r.col(0) = scale * h.col(0);
  r.col(1) = scale * h.col(1);
  r.col(2) = r.col(0).cross(r.col(1));
  const RigidTransform plane_to_camera{orthonormalize(r), scale * h.col(2)};

  detail::PnpProblem problem;
  problem.points = std::move(pts);
  problem.pixels = std::move(pixels);
  problem.model = &model;
  LmOptions opts;
  opts.max_iterations = 50;
  opts.epsilon = 1e-14;
  auto [pose, diag] = lm_minimize(problem, plane_to_camera * board_to_plane, opts);
  (void)diag;
  return pose;
}

/// Camera-frame reference positions of every detected corner, from per-frame
/// PnP with the dataset intrinsics. Frames where PnP fails are skipped.
inline PnpReferences build_references(const CalibrationDataset& dataset) {
  std::map<std::pair<std::string, int>, std::vector<Observation>> groups;
  for (const auto& o : dataset.observations) groups[{o.camera_id, o.frame_id}].push_back(o);

  PnpReferences refs;
  for (const auto& [key, obs] : groups) {
    if (obs.size() < 4) continue;
    RigidTransform pose;
    try {
      pose = pnp_board_pose(obs, dataset.board, dataset.camera(key.first));
    } catch (const Error&) {
      continue;
    }
    refs.board_poses[key] = pose;
    for (const auto& o : obs) {
      refs.points[{o.camera_id, o.frame_id, o.corner_id}] = pose * dataset.board.corner(o.corner_id);
    }
  }
  for (const auto& c : dataset.cameras) {
    const auto first = refs.points.lower_bound(RefKey{c.camera_id, std::numeric_limits<int>::min(),
                                                      std::numeric_limits<int>::min()});
    if (first == refs.points.end() || first->first.camera_id != c.camera_id) {
      refs.cameras_without_references.push_back(c.camera_id);
    }
  }
  if (refs.points.empty()) fail(ErrorCode::EmptyReferences, "no frame admits a PnP solution");
  return refs;
}

}  // namespace mocap_calib

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

// Normalized direct linear transform for plane-to-plane homographies.

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <span>

#include "mocap_calib/error.hpp"

namespace mocap_calib {

namespace detail {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
inline Eigen::Matrix3d hartley_normalization(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0.0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * mean.x(),
       0.0, s, -s * mean.y(),
       0.0, 0.0, 1.0;
  return t;
}

inline double spread_ratio(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::Vector2d sv = Eigen::JacobiSVD<Eigen::Matrix2d>(cov).singularValues();
  return sv(0) > 0.0 ? sv(1) / sv(0) : 0.0;
}

}  // namespace detail

/// True when any three of the points are (numerically) collinear.
inline bool has_collinear_triple(std::span<const Eigen::Vector2d> pts, double rel_tol = 1e-10) {
  double scale = 0.0;
  for (const auto& p : pts) {
    for (const auto& q : pts) scale = std::max(scale, (p - q).squaredNorm());
  }
  if (scale == 0.0) return true;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      for (std::size_t k = j + 1; k < pts.size(); ++k) {
        const Eigen::Vector2d u = pts[j] - pts[i];
        const Eigen::Vector2d v = pts[k] - pts[i];
        if (std::abs(u.x() * v.y() - u.y() * v.x()) <= rel_tol * scale) return true;
      }
    }
  }
  return false;
}

/// Least-squares homography with dst ~ H * src, N >= 4 correspondences.
/// Scaled so that H(2,2) = 1 whenever that entry is not vanishing.
inline Eigen::Matrix3d fit_homography(std::span<const Eigen::Vector2d> src,
                                      std::span<const Eigen::Vector2d> dst) {
  if (src.size() != dst.size() || src.size() < 4) {
    fail(ErrorCode::DegenerateHomography, "homography needs >= 4 matched points");
  }
  if (detail::spread_ratio(src) < 1e-12 || detail::spread_ratio(dst) < 1e-12) {
    fail(ErrorCode::DegenerateHomography, "points are collinear");
  }
  const Eigen::Matrix3d ts = detail::hartley_normalization(src);
  const Eigen::Matrix3d td = detail::hartley_normalization(dst);

  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d s = ts * src[static_cast<std::size_t>(i)].homogeneous();
    const Eigen::Vector3d d = td * dst[static_cast<std::size_t>(i)].homogeneous();
    const double u = d.x() / d.z();
    const double v = d.y() / d.z();
    a.row(2 * i) << -s.x(), -s.y(), -s.z(), 0.0, 0.0, 0.0, u * s.x(), u * s.y(), u * s.z();
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, -s.x(), -s.y(), -s.z(), v * s.x(), v * s.y(), v * s.z();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  // The null space must be one-dimensional; 4-point systems have 8 singular values.
  const Eigen::Index last = std::min<Eigen::Index>(sv.size(), 8) - 1;
  if (!(sv(last) > 1e-12 * sv(0))) {
    fail(ErrorCode::DegenerateHomography, "homography system is rank deficient");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d hm = td.inverse() * hn * ts;
  if (std::abs(hm(2, 2)) > 1e-12 * hm.norm()) {
    hm /= hm(2, 2);
  } else {
    hm /= hm.norm();
  }
  return hm;
}

inline Eigen::Vector2d apply_homography(const Eigen::Matrix3d& h, const Eigen::Vector2d& p) {
  return (h * p.homogeneous()).hnormalized();
}

}  // namespace mocap_calib

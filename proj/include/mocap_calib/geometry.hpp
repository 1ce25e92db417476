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

// SE(3)/SO(3) algebra, closed-form rigid registration and rotation sampling.
// Rotations are stored as 3x3 matrices; twists appear only at solver
// boundaries, ordered (rotation, translation).

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "mocap_calib/error.hpp"

namespace mocap_calib {

using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Below this angle (rad) exp/log switch to their Taylor series.
inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kSeriesAngle = 1e-2;  // below this, series for cancelling terms

inline Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

inline Eigen::Vector3d vee(const Eigen::Matrix3d& m) {
  return {m(2, 1), m(0, 2), m(1, 0)};
}

/// Nearest rotation in the Frobenius sense.
inline Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d k = hat(w);
  if (theta < kSmallAngle) {
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double h = std::sin(0.5 * theta);
  const double b = 2.0 * h * h / (theta * theta);
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

/// Rotation vector of R, angle in [0, pi].
inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const Eigen::Vector3d s = 0.5 * vee(r - r.transpose());  // sin(theta) * axis
  const double sn = s.norm();
  const double theta = std::atan2(sn, c);
  if (theta < kSmallAngle) return s;
  if (theta < 0.75 * std::numbers::pi) return s * (theta / sn);

  // Near pi the skew part vanishes; recover the axis from the symmetric part
  // (R + R^T)/2 - cI = (1 - c) a a^T and take the sign from the skew part.
  const Eigen::Matrix3d aat =
      (0.5 * (r + r.transpose()) - c * Eigen::Matrix3d::Identity()) / (1.0 - c);
  Eigen::Index k = 0;
  aat.diagonal().maxCoeff(&k);
  Eigen::Vector3d axis = aat.col(k) / std::sqrt(std::max(aat(k, k), 0.0));
  axis.normalize();
  if (axis.dot(s) < 0.0) axis = -axis;
  return axis * theta;
}

inline double rotation_angle(const Eigen::Matrix3d& r) {
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  return std::atan2(0.5 * vee(r - r.transpose()).norm(), c);
}

/// Angle of the relative rotation a^T b.
inline double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return rotation_angle(a.transpose() * b);
}

/// ||a - b||_F, in [0, 2*sqrt(2)] for rotations.
inline double rotation_frobenius_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return (a - b).norm();
}

struct Twist {
  Eigen::Vector3d rotation_part = Eigen::Vector3d::Zero();     // rad, axis-angle
  Eigen::Vector3d translation_part = Eigen::Vector3d::Zero();  // m

  Vector6d as_vector() const {
    Vector6d v;
    v << rotation_part, translation_part;
    return v;
  }
  static Twist from_vector(const Vector6d& v) { return {v.head<3>(), v.tail<3>()}; }
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  RigidTransform inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  bool operator==(const RigidTransform&) const = default;
};

namespace detail {

// V(w) maps the translational twist part to the SE(3) translation.
inline Eigen::Matrix3d se3_left_jacobian(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const double t2 = theta * theta;
  const Eigen::Matrix3d k = hat(w);
  double b;
  double c;
  if (theta < kSeriesAngle) {
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    const double s = std::sin(0.5 * theta);
    b = 2.0 * s * s / t2;
    c = (theta - std::sin(theta)) / (t2 * theta);
  }
  return Eigen::Matrix3d::Identity() + b * k + c * k * k;
}

inline Eigen::Matrix3d se3_left_jacobian_inverse(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const double t2 = theta * theta;
  const Eigen::Matrix3d k = hat(w);
  double c;
  if (theta < kSeriesAngle) {
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const double h = 0.5 * theta;
    c = (1.0 - h * std::cos(h) / std::sin(h)) / t2;
  }
  return Eigen::Matrix3d::Identity() - 0.5 * k + c * k * k;
}

}  // namespace detail

inline RigidTransform se3_exp(const Twist& xi) {
  return {so3_exp(xi.rotation_part),
          detail::se3_left_jacobian(xi.rotation_part) * xi.translation_part};
}

inline Twist se3_log(const RigidTransform& t) {
  const Eigen::Vector3d w = so3_log(t.rotation);
  return {w, detail::se3_left_jacobian_inverse(w) * t.translation};
}

/// Left-multiplicative update exp(delta) * T, delta ordered (rotation, translation).
inline RigidTransform retract_left(const RigidTransform& t, const Vector6d& delta) {
  return se3_exp(Twist::from_vector(delta)) * t;
}

namespace detail {

inline RigidTransform procrustes_solve(const Eigen::Vector3d& src_mean,
                                       const Eigen::Vector3d& dst_mean,
                                       const Eigen::Matrix3d& src_cov,
                                       const Eigen::Matrix3d& cross) {
  const Eigen::Vector3d spread = Eigen::JacobiSVD<Eigen::Matrix3d>(src_cov).singularValues();
  if (!(spread(0) > 0.0) || spread(1) <= 1e-12 * spread(0)) {
    fail(ErrorCode::DegenerateConfiguration, "procrustes_fit: source points are collinear");
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    fail(ErrorCode::DegenerateConfiguration, "procrustes_fit: cross-covariance rank < 2");
  }
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Eigen::Matrix3d r = v * d * u.transpose();
  return {r, dst_mean - r * src_mean};
}

}  // namespace detail

/// Closed-form least-squares rigid registration: argmin_T sum ||T src_i - dst_i||^2.
/// The rotation is reflection-corrected so det = +1.
inline RigidTransform procrustes_fit(std::span<const Eigen::Vector3d> src,
                                     std::span<const Eigen::Vector3d> dst) {
  if (src.size() != dst.size()) {
    fail(ErrorCode::InvalidArgument, "procrustes_fit: src and dst sizes differ");
  }
  if (src.size() < 3) {
    fail(ErrorCode::DegenerateConfiguration, "procrustes_fit: fewer than 3 correspondences");
  }
  const double n = static_cast<double>(src.size());
  Eigen::Vector3d src_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d dst_mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= n;
  dst_mean /= n;

  Eigen::Matrix3d src_cov = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Eigen::Vector3d s = src[i] - src_mean;
    const Eigen::Vector3d d = dst[i] - dst_mean;
    src_cov += s * s.transpose();
    cross += s * d.transpose();
  }
  return detail::procrustes_solve(src_mean, dst_mean, src_cov, cross);
}

/// Raw first and second moments of a correspondence set, so registrations of
/// rigidly transformed copies can be accumulated without visiting every point.
struct PointMoments {
  double count = 0.0;
  Eigen::Vector3d sum_src = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_dst = Eigen::Vector3d::Zero();
  Eigen::Matrix3d src_src = Eigen::Matrix3d::Zero();  // sum s s^T
  Eigen::Matrix3d src_dst = Eigen::Matrix3d::Zero();  // sum s d^T

  void add(const Eigen::Vector3d& s, const Eigen::Vector3d& d) {
    count += 1.0;
    sum_src += s;
    sum_dst += d;
    src_src += s * s.transpose();
    src_dst += s * d.transpose();
  }
};

/// procrustes_fit from accumulated moments.
inline RigidTransform procrustes_from_moments(const PointMoments& m) {
  if (m.count < 3.0) {
    fail(ErrorCode::DegenerateConfiguration, "procrustes_fit: fewer than 3 correspondences");
  }
  const Eigen::Vector3d src_mean = m.sum_src / m.count;
  const Eigen::Vector3d dst_mean = m.sum_dst / m.count;
  const Eigen::Matrix3d src_cov = m.src_src - m.count * src_mean * src_mean.transpose();
  const Eigen::Matrix3d cross = m.src_dst - m.count * src_mean * dst_mean.transpose();
  return detail::procrustes_solve(src_mean, dst_mean, src_cov, cross);
}

/// Uniformly distributed rotation via the unit-quaternion method.
template <class Rng>
Eigen::Matrix3d random_rotation(Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u1 = uni(rng);
  const double u2 = uni(rng);
  const double u3 = uni(rng);
  const double two_pi = 2.0 * std::numbers::pi;
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(two_pi * u3), a * std::sin(two_pi * u2),
                       a * std::cos(two_pi * u2), b * std::sin(two_pi * u3));
  return q.normalized().toRotationMatrix();
}

template <class Rng>
Eigen::Vector3d random_unit_vector(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = {gauss(rng), gauss(rng), gauss(rng)};
  } while (v.norm() < 1e-12);
  return v.normalized();
}

struct RotationCandidateSet {
  std::vector<Eigen::Matrix3d> rotations;
  std::uint64_t seed = 0;
  std::vector<std::size_t> pool_indices;  // position of each candidate in the sampled pool
};

/// Greedy farthest-point selection of `count` rotations out of `pool` uniform
/// random ones. The first pick is the pool element nearest identity; each next
/// pick maximizes the minimum Frobenius distance to those already chosen.
inline RotationCandidateSet sample_candidate_rotations(int count, int pool, std::uint64_t seed) {
  if (count <= 0) fail(ErrorCode::InvalidArgument, "candidate count must be positive");
  if (count > pool) fail(ErrorCode::InvalidArgument, "candidate count exceeds pool size");

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Matrix3d> samples;
  samples.reserve(static_cast<std::size_t>(pool));
  for (int i = 0; i < pool; ++i) samples.push_back(random_rotation(rng));

  const auto n = samples.size();
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);

  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rotation_frobenius_distance(samples[i], Eigen::Matrix3d::Identity());
    if (d < best) {
      best = d;
      first = i;
    }
  }

  RotationCandidateSet out;
  out.seed = seed;
  std::size_t pick = first;
  for (int k = 0; k < count; ++k) {
    taken[pick] = true;
    out.rotations.push_back(samples[pick]);
    out.pool_indices.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) {
        min_dist[i] = std::min(min_dist[i], rotation_frobenius_distance(samples[i], samples[pick]));
      }
    }
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i] && min_dist[i] > far) {
        far = min_dist[i];
        pick = i;
      }
    }
  }
  return out;
}

}  // namespace mocap_calib

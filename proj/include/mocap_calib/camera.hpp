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

// Fisheye62 camera model: Kannala-Brandt radial polynomial in the incidence
// angle with six coefficients, followed by a Brown-style tangential step with
// two coefficients.
//
//   theta   = atan2(sqrt(x^2 + y^2), z)
//   theta_d = theta * (1 + k1 theta^2 + ... + k6 theta^12)
//   (a, b)  = theta_d * (x, y) / sqrt(x^2 + y^2)
//   a'      = a + 2 p1 a b + p2 (r^2 + 2 a^2)
//   b'      = b + p1 (r^2 + 2 b^2) + 2 p2 a b,   r^2 = a^2 + b^2
//   pixel   = (fx a' + cx, fy b' + cy)
//
// Intrinsic vectors are always ordered (fx, fy, cx, cy, k1..k6, p1, p2).

#include <Eigen/Core>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "mocap_calib/error.hpp"

namespace mocap_calib {

using PixelPoint = Eigen::Vector2d;
using IntrinsicsVector = Eigen::Matrix<double, 12, 1>;

inline constexpr double kDefaultThetaMax = 105.0 * std::numbers::pi / 180.0;

struct CameraModel {
  std::string camera_id;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 6> radial{};      // k1..k6
  std::array<double, 2> tangential{};  // p1, p2
  int width = 0;
  int height = 0;
  double theta_max = kDefaultThetaMax;  // rad

  static constexpr int kParamCount = 12;

  IntrinsicsVector params() const {
    IntrinsicsVector v;
    v << fx, fy, cx, cy, radial[0], radial[1], radial[2], radial[3], radial[4], radial[5],
        tangential[0], tangential[1];
    return v;
  }

  void set_params(const IntrinsicsVector& v) {
    fx = v(0);
    fy = v(1);
    cx = v(2);
    cy = v(3);
    for (int i = 0; i < 6; ++i) radial[static_cast<std::size_t>(i)] = v(4 + i);
    tangential[0] = v(10);
    tangential[1] = v(11);
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      fail(ErrorCode::ValidationError, "camera " + camera_id + ": focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
      fail(ErrorCode::ValidationError, "camera " + camera_id + ": image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
      fail(ErrorCode::ValidationError, "camera " + camera_id + ": principal point outside image");
    }
    if (!(theta_max > 0.0 && theta_max <= std::numbers::pi)) {
      fail(ErrorCode::ValidationError, "camera " + camera_id + ": theta_max out of (0, pi]");
    }
  }

  bool operator==(const CameraModel&) const = default;
};

inline bool in_image(const PixelPoint& px, const CameraModel& model) {
  return px.x() >= 0.0 && px.x() < model.width && px.y() >= 0.0 && px.y() < model.height;
}

/// Distorted incidence angle theta_d(theta) and its derivative.
inline double distort_angle(double theta, const CameraModel& m, double* derivative = nullptr) {
  const double t2 = theta * theta;
  const auto& k = m.radial;
  const double poly =
      1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * (k[3] + t2 * (k[4] + t2 * k[5])))));
  if (derivative != nullptr) {
    *derivative = 1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] +
                  t2 * (9.0 * k[3] + t2 * (11.0 * k[4] + t2 * 13.0 * k[5])))));
  }
  return theta * poly;
}

struct ProjectionJacobians {
  Eigen::Matrix<double, 2, 3> point;
  Eigen::Matrix<double, 2, 12> intrinsics;
};

namespace detail {

// Shared evaluation path. With check_fov=false the formula is applied for any
// incidence angle, which the solver uses to keep its objectives total.
inline PixelPoint project_impl(const Eigen::Vector3d& p, const CameraModel& m, bool check_fov,
                               ProjectionJacobians* jac) {
  const double x = p.x();
  const double y = p.y();
  const double z = p.z();
  const double rho2 = x * x + y * y;
  const double rho = std::sqrt(rho2);
  const double theta = std::atan2(rho, z);
  if (check_fov && theta >= m.theta_max) {
    fail(ErrorCode::BehindCamera, "point outside field of view of camera " + m.camera_id);
  }

  double gprime = 0.0;
  const double theta_d = distort_angle(theta, m, &gprime);
  // theta / rho, extended continuously onto the optical axis.
  double theta_over_rho = 0.0;
  if (rho > 0.0) {
    theta_over_rho = theta / rho;
  } else if (z > 0.0) {
    theta_over_rho = 1.0 / z;
  }
  const double poly = theta > 0.0 ? theta_d / theta : 1.0;
  const double s = theta_over_rho * poly;
  const double a = s * x;
  const double b = s * y;

  const double p1 = m.tangential[0];
  const double p2 = m.tangential[1];
  const double r2 = a * a + b * b;
  const double a2 = a + 2.0 * p1 * a * b + p2 * (r2 + 2.0 * a * a);
  const double b2 = b + p1 * (r2 + 2.0 * b * b) + 2.0 * p2 * a * b;

  if (jac != nullptr) {
    const double d2 = rho2 + z * z;
    // q = (ds/drho) / rho; series on the axis where the closed form cancels.
    double q = 0.0;
    if (theta < 1e-6) {
      q = (2.0 * m.radial[0] - 2.0 / 3.0) / (z * z * z);
    } else {
      q = (gprime * z / d2 - theta_d / rho) / rho2;
    }
    const double ds_dz = -gprime / d2;

    Eigen::Matrix<double, 2, 3> dab_dp;
    dab_dp << s + q * x * x, q * x * y, x * ds_dz,
              q * x * y, s + q * y * y, y * ds_dz;

    Eigen::Matrix2d dt_dab;
    dt_dab << 1.0 + 2.0 * p1 * b + 6.0 * p2 * a, 2.0 * p1 * a + 2.0 * p2 * b,
              2.0 * p1 * a + 2.0 * p2 * b, 1.0 + 6.0 * p1 * b + 2.0 * p2 * a;

    const Eigen::Matrix2d f = Eigen::Vector2d(m.fx, m.fy).asDiagonal();
    const Eigen::Matrix2d f_dt = f * dt_dab;
    jac->point = f_dt * dab_dp;

    jac->intrinsics.setZero();
    jac->intrinsics(0, 0) = a2;
    jac->intrinsics(1, 1) = b2;
    jac->intrinsics(0, 2) = 1.0;
    jac->intrinsics(1, 3) = 1.0;
    // d theta_d / d k_i = theta^(2i+1); (a, b) scale with it along (x, y) / rho.
    const double t2 = theta * theta;
    double t_pow = t2;
    for (int i = 0; i < 6; ++i) {
      const Eigen::Vector2d dab(t_pow * theta_over_rho * x, t_pow * theta_over_rho * y);
      jac->intrinsics.col(4 + i) = f_dt * dab;
      t_pow *= t2;
    }
    jac->intrinsics(0, 10) = m.fx * 2.0 * a * b;
    jac->intrinsics(1, 10) = m.fy * (r2 + 2.0 * b * b);
    jac->intrinsics(0, 11) = m.fx * (r2 + 2.0 * a * a);
    jac->intrinsics(1, 11) = m.fy * 2.0 * a * b;
  }

  return {m.fx * a2 + m.cx, m.fy * b2 + m.cy};
}

}  // namespace detail

/// Throws BehindCamera when the incidence angle reaches model.theta_max.
inline PixelPoint project(const Eigen::Vector3d& point_camera_frame, const CameraModel& model) {
  return detail::project_impl(point_camera_frame, model, true, nullptr);
}

inline ProjectionJacobians project_jacobians(const Eigen::Vector3d& point,
                                             const CameraModel& model) {
  ProjectionJacobians jac;
  detail::project_impl(point, model, true, &jac);
  return jac;
}

/// Unit ray through a distorted pixel. Inverts the tangential step with a 2-D
/// Newton iteration, then the radial polynomial with a 1-D Newton iteration
/// started at the equidistant inverse.
inline Eigen::Vector3d unproject(const PixelPoint& pixel, const CameraModel& model) {
  constexpr int kMaxIters = 50;
  constexpr double kStepTol = 1e-12;
  const Eigen::Vector2d target((pixel.x() - model.cx) / model.fx,
                               (pixel.y() - model.cy) / model.fy);
  const double p1 = model.tangential[0];
  const double p2 = model.tangential[1];

  Eigen::Vector2d ab = target;
  if (p1 != 0.0 || p2 != 0.0) {
    bool converged = false;
    for (int it = 0; it < kMaxIters; ++it) {
      const double a = ab.x();
      const double b = ab.y();
      const double r2 = a * a + b * b;
      const Eigen::Vector2d fval(a + 2.0 * p1 * a * b + p2 * (r2 + 2.0 * a * a) - target.x(),
                                 b + p1 * (r2 + 2.0 * b * b) + 2.0 * p2 * a * b - target.y());
      Eigen::Matrix2d j;
      j << 1.0 + 2.0 * p1 * b + 6.0 * p2 * a, 2.0 * p1 * a + 2.0 * p2 * b,
           2.0 * p1 * a + 2.0 * p2 * b, 1.0 + 6.0 * p1 * b + 2.0 * p2 * a;
      const Eigen::Vector2d step = j.inverse() * fval;
      if (!step.allFinite()) break;
      ab -= step;
      if (step.norm() < kStepTol) {
        converged = true;
        break;
      }
    }
    if (!converged) fail(ErrorCode::NoConvergence, "tangential inversion did not converge");
  }

  const double theta_d = ab.norm();
  if (theta_d == 0.0) return Eigen::Vector3d::UnitZ();

  double theta = theta_d;
  bool converged = false;
  for (int it = 0; it < kMaxIters; ++it) {
    double deriv = 0.0;
    const double g = distort_angle(theta, model, &deriv);
    if (!(deriv > 0.0)) break;
    const double step = (g - theta_d) / deriv;
    theta -= step;
    if (std::abs(step) < kStepTol) {
      converged = true;
      break;
    }
  }
  if (!converged || !(theta >= 0.0) || theta >= std::numbers::pi) {
    fail(ErrorCode::NoConvergence, "radial inversion did not converge");
  }
  const double st = std::sin(theta);
  return {st * ab.x() / theta_d, st * ab.y() / theta_d, std::cos(theta)};
}

}  // namespace mocap_calib

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
#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "mocap_calib/camera.hpp"
#include "mocap_calib/synth.hpp"
#include "test_support.hpp"

namespace mocap_calib {
namespace {

using testing::numeric_jacobian;
using testing::random_camera;
using testing::random_point_in_fov;
using testing::relative_error;

using Big = boost::multiprecision::cpp_bin_float_50;

// Projection written out again in 50-digit arithmetic, term by term.
Eigen::Vector2d big_project(const Eigen::Vector3d& p, const CameraModel& m) {
  const Big x = p.x();
  const Big y = p.y();
  const Big z = p.z();
  const Big rho = sqrt(x * x + y * y);
  const Big theta = atan2(rho, z);
  Big poly = 1;
  Big t2i = 1;
  for (int i = 0; i < 6; ++i) {
    t2i *= theta * theta;
    poly += Big(m.radial[static_cast<std::size_t>(i)]) * t2i;
  }
  const Big td = theta * poly;
  const Big a = td * x / rho;
  const Big b = td * y / rho;
  const Big r2 = a * a + b * b;
  const Big p1 = m.tangential[0];
  const Big p2 = m.tangential[1];
  const Big ap = a + 2 * p1 * a * b + p2 * (r2 + 2 * a * a);
  const Big bp = b + p1 * (r2 + 2 * b * b) + 2 * p2 * a * b;
  return {static_cast<double>(Big(m.fx) * ap + Big(m.cx)), static_cast<double>(Big(m.fy) * bp + Big(m.cy))};
}

TEST(Camera, OpticalAxisMapsToPrincipalPoint) {
  std::mt19937_64 rng(1);
  const CameraModel m = random_camera(rng);
  const PixelPoint px = project(Eigen::Vector3d(0, 0, 1), m);
  EXPECT_EQ(px, PixelPoint(m.cx, m.cy));
  EXPECT_EQ(project(Eigen::Vector3d(0, 0, 7.5), m), PixelPoint(m.cx, m.cy));
}

TEST(Camera, ZeroDistortionIsEquidistant) {
  CameraModel m = default_fisheye_camera(0);
  m.radial = {};
  m.tangential = {};
  const Eigen::Vector3d p(0.4, -0.3, 0.5);
  const double r = std::hypot(p.x(), p.y());
  const double theta = std::atan2(r, p.z());
  const PixelPoint expected(m.fx * theta * p.x() / r + m.cx, m.fy * theta * p.y() / r + m.cy);
  EXPECT_LT((project(p, m) - expected).norm(), 1e-12);
}

TEST(Camera, MatchesExtendedPrecisionOracle) {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const CameraModel m = random_camera(rng);
    const Eigen::Vector3d p = random_point_in_fov(rng, 100.0 * kDeg);
    if (p.head<2>().norm() < 1e-9) continue;
    worst = std::max(worst, (project(p, m) - big_project(p, m)).norm());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Camera, FieldOfViewLimit) {
  const CameraModel m = default_fisheye_camera(0);
  const auto at_angle = [](double deg) {
    return Eigen::Vector3d(std::sin(deg * kDeg), 0.0, std::cos(deg * kDeg));
  };
  EXPECT_NO_THROW(project(at_angle(104.0), m));
  try {
    project(at_angle(106.0), m);
    FAIL() << "expected BehindCamera";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BehindCamera);
  }
  EXPECT_THROW(project(Eigen::Vector3d(0, 0, -1), m), Error);
  CameraModel narrow = m;
  narrow.theta_max = 60.0 * kDeg;
  EXPECT_THROW(project(at_angle(70.0), narrow), Error);
}

TEST(Camera, ContinuousAcrossOpticalAxis) {
  const CameraModel m = default_fisheye_camera(1);
  const PixelPoint c(m.cx, m.cy);
  for (double eps : {1e-3, 1e-6, 1e-9, 1e-12}) {
    EXPECT_LT((project(Eigen::Vector3d(eps, -eps, 1.0), m) - c).norm(), 2.0 * m.fx * eps);
  }
}

TEST(Camera, DistortionCurveMonotoneForSyntheticCameras) {
  for (int i = 0; i < 4; ++i) {
    const CameraModel m = default_fisheye_camera(i);
    double prev = -1.0;
    for (int k = 0; k <= 1000; ++k) {
      const double theta = m.theta_max * k / 1000.0;
      double d = 0.0;
      const double td = distort_angle(theta, m, &d);
      EXPECT_GT(td, prev);
      EXPECT_GT(d, 0.0);
      prev = td;
    }
  }
}

TEST(Camera, UnprojectInvertsProjectWithinFov) {
  std::mt19937_64 rng(3);
  double worst_px = 0.0;
  double worst_angle = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const CameraModel m = (i % 2 == 0) ? default_fisheye_camera(i % 4) : random_camera(rng);
    const Eigen::Vector3d p = random_point_in_fov(rng, 95.0 * kDeg);
    const PixelPoint px = project(p, m);
    const Eigen::Vector3d ray = unproject(px, m);
    EXPECT_NEAR(ray.norm(), 1.0, 1e-12);
    worst_angle = std::max(worst_angle, std::atan2(ray.cross(p).norm(), ray.dot(p)));
    worst_px = std::max(worst_px, (project(ray * 2.5, m) - px).norm());
  }
  EXPECT_LT(worst_px, 1e-6);
  EXPECT_LT(worst_angle, 1e-8);
}

TEST(Camera, UnprojectPrincipalPointIsAxis) {
  const CameraModel m = default_fisheye_camera(2);
  EXPECT_LT((unproject({m.cx, m.cy}, m) - Eigen::Vector3d::UnitZ()).norm(), 1e-15);
}

TEST(Camera, UnprojectZeroDistortionMatchesClosedForm) {
  CameraModel m = default_fisheye_camera(0);
  m.radial = {};
  m.tangential = {};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const PixelPoint px(m.width * u(rng), m.height * u(rng));
    const double a = (px.x() - m.cx) / m.fx;
    const double b = (px.y() - m.cy) / m.fy;
    const double theta = std::hypot(a, b);
    const Eigen::Vector3d expected(std::sin(theta) * a / theta, std::sin(theta) * b / theta, std::cos(theta));
    EXPECT_LT((unproject(px, m) - expected).norm(), 1e-10);
  }
}

TEST(Camera, PointJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const CameraModel m = random_camera(rng);
    const Eigen::Vector3d p = random_point_in_fov(rng, 100.0 * kDeg);
    const ProjectionJacobians j = project_jacobians(p, m);
    const Eigen::MatrixXd num = numeric_jacobian(
        [&](const Eigen::VectorXd& q) -> Eigen::VectorXd { return project(Eigen::Vector3d(q), m); },
        p, 1e-6);
    worst = std::max(worst, relative_error(j.point, num));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Camera, IntrinsicsJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const CameraModel m = random_camera(rng);
    const Eigen::Vector3d p = random_point_in_fov(rng, 100.0 * kDeg);
    const ProjectionJacobians j = project_jacobians(p, m);
    const Eigen::MatrixXd num = numeric_jacobian(
        [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
          CameraModel mm = m;
          mm.set_params(IntrinsicsVector(v));
          return project(p, mm);
        },
        m.params(), 1e-6);
    worst = std::max(worst, relative_error(j.intrinsics, num));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Camera, JacobianNearAxisHasPinholeLimit) {
  CameraModel m = default_fisheye_camera(0);
  m.radial = {};
  m.tangential = {};
  const double z = 2.0;
  const ProjectionJacobians j = project_jacobians(Eigen::Vector3d(0, 0, z), m);
  Eigen::Matrix<double, 2, 3> expected;
  expected << m.fx / z, 0, 0, 0, m.fy / z, 0;
  EXPECT_LT((j.point - expected).norm(), 1e-12);
  const ProjectionJacobians j2 = project_jacobians(Eigen::Vector3d(1e-9, 2e-9, z), m);
  EXPECT_LT((j2.point - expected).norm(), 1e-6);
}

TEST(Camera, PrincipalPointColumnsAreUnit) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const CameraModel m = random_camera(rng);
    const ProjectionJacobians j = project_jacobians(random_point_in_fov(rng, 90.0 * kDeg), m);
    EXPECT_EQ(j.intrinsics.col(2), Eigen::Vector2d(1, 0));
    EXPECT_EQ(j.intrinsics.col(3), Eigen::Vector2d(0, 1));
  }
}

TEST(Camera, ParameterVectorOrder) {
  const CameraModel m = default_fisheye_camera(3);
  const IntrinsicsVector v = m.params();
  EXPECT_EQ(v(0), m.fx);
  EXPECT_EQ(v(3), m.cy);
  EXPECT_EQ(v(4), m.radial[0]);
  EXPECT_EQ(v(9), m.radial[5]);
  EXPECT_EQ(v(11), m.tangential[1]);
  CameraModel copy;
  copy.set_params(v);
  EXPECT_EQ(copy.params(), v);
}

TEST(Camera, ValidationRejectsBadModels) {
  CameraModel m = default_fisheye_camera(0);
  EXPECT_NO_THROW(m.validate());
  CameraModel bad = m;
  bad.fx = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = m;
  bad.cx = m.width;
  EXPECT_THROW(bad.validate(), Error);
  bad = m;
  bad.height = 0;
  EXPECT_THROW(bad.validate(), Error);
}

}  // namespace
}  // namespace mocap_calib

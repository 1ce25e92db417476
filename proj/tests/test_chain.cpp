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

#include <cmath>
#include <random>

#include "mocap_calib/chain.hpp"
#include "mocap_calib/synth.hpp"
#include "test_support.hpp"

namespace mocap_calib {
namespace {

using testing::numeric_jacobian;
using testing::random_camera;
using testing::random_point_in_fov;
using testing::random_pose;
using testing::relative_error;

struct Config {
  ChainEstimate est;
  MocapFrame frame;
  BoardGeometry board;
  Observation obs;
};

// Random chain whose corner lands at a chosen camera-frame point.
Config random_config(std::mt19937_64& rng, double max_theta = 95.0 * kDeg) {
  Config c;
  c.est.board_to_marker = random_pose(rng, 0.2);
  c.est.extrinsics["cam"] = random_pose(rng, 2.0);
  c.est.intrinsics["cam"] = random_camera(rng);
  c.frame.frame_id = 3;
  c.frame.board_pose = random_pose(rng, 2.0);
  if (std::uniform_int_distribution<int>(0, 1)(rng) == 1) c.frame.platform_pose = random_pose(rng, 1.0);
  const Eigen::Vector3d p_cam = random_point_in_fov(rng, max_theta, 0.4, 3.0);
  const RigidTransform chain =
      c.est.extrinsic("cam") * c.frame.marker_to_platform() * c.est.board_to_marker;
  c.board.corners[7] = chain.inverse() * p_cam;
  c.obs = {"cam", 3, 7, PixelPoint(600, 500)};
  return c;
}

CalibrationDataset one_camera_dataset(const Config& c) {
  CalibrationDataset ds;
  ds.board = c.board;
  ds.frames = {c.frame};
  ds.cameras = {c.est.model("cam")};
  ds.observations = {c.obs};
  return ds;
}

TEST(Chain, PredictionIsExplicitComposition) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Config c = random_config(rng);
    const RigidTransform& y = c.est.extrinsic("cam");
    const RigidTransform p = c.frame.platform_pose.value_or(RigidTransform::identity());
    const Eigen::Vector3d q =
        y * (p.inverse() * (c.frame.board_pose * (c.est.board_to_marker * c.board.corner(7))));
    const PixelPoint expected = project(q, c.est.model("cam"));
    EXPECT_LT((predict_pixel(c.est, c.board, c.frame, "cam", 7) - expected).norm(), 1e-9);
  }
}

TEST(Chain, ResidualIsPredictedMinusDetected) {
  std::mt19937_64 rng(12);
  const Config c = random_config(rng);
  const PixelPoint pred = predict_pixel(c.est, c.board, c.frame, "cam", 7);
  EXPECT_EQ(residual(c.est, c.board, c.frame, c.obs), pred - c.obs.pixel);
}

TEST(Chain, InvariantToCommonWorldMotion) {
  std::mt19937_64 rng(13);
  Config c = random_config(rng);
  c.frame.platform_pose = random_pose(rng);
  const PixelPoint before = predict_pixel(c.est, c.board, c.frame, "cam", 7);
  const RigidTransform h = random_pose(rng, 3.0);
  c.frame.board_pose = h * c.frame.board_pose;
  c.frame.platform_pose = h * *c.frame.platform_pose;
  EXPECT_LT((predict_pixel(c.est, c.board, c.frame, "cam", 7) - before).norm(), 1e-9);
}

TEST(Chain, MarkerGaugeMovesBetweenAAndX) {
  std::mt19937_64 rng(14);
  Config c = random_config(rng);
  const PixelPoint before = predict_pixel(c.est, c.board, c.frame, "cam", 7);
  const RigidTransform g = random_pose(rng, 0.3);
  c.frame.board_pose = c.frame.board_pose * g;
  c.est.board_to_marker = g.inverse() * c.est.board_to_marker;
  EXPECT_LT((predict_pixel(c.est, c.board, c.frame, "cam", 7) - before).norm(), 1e-9);
}

TEST(Chain, PixelJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  double worst_y = 0.0;
  double worst_x = 0.0;
  double worst_k = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Config c = random_config(rng);
    const ChainJacobian j = chain_jacobian(c.est, c.board, c.frame, c.obs);
    const auto eval = [&](const ChainEstimate& e) -> Eigen::VectorXd {
      return predict_pixel(e, c.board, c.frame, "cam", 7);
    };
    const Eigen::MatrixXd ny = numeric_jacobian(
        [&](const Eigen::VectorXd& d) {
          ChainEstimate e = c.est;
          e.extrinsics["cam"] = retract_left(e.extrinsics["cam"], d);
          return eval(e);
        },
        Vector6d::Zero(), 1e-7);
    const Eigen::MatrixXd nx = numeric_jacobian(
        [&](const Eigen::VectorXd& d) {
          ChainEstimate e = c.est;
          e.board_to_marker = retract_left(e.board_to_marker, d);
          return eval(e);
        },
        Vector6d::Zero(), 1e-7);
    const Eigen::MatrixXd nk = numeric_jacobian(
        [&](const Eigen::VectorXd& v) {
          ChainEstimate e = c.est;
          e.intrinsics["cam"].set_params(v);
          return eval(e);
        },
        c.est.model("cam").params(), 1e-6);
    worst_y = std::max(worst_y, relative_error(j.block<2, 6>(0, 0), ny));
    worst_x = std::max(worst_x, relative_error(j.block<2, 6>(0, 6), nx));
    worst_k = std::max(worst_k, relative_error(j.block<2, 12>(0, 12), nk));
  }
  EXPECT_LT(worst_y, 1e-5);
  EXPECT_LT(worst_x, 1e-5);
  EXPECT_LT(worst_k, 1e-5);
}

TEST(Chain, BoardRmseOfThreeFourFive) {
  std::mt19937_64 rng(16);
  const Config c = random_config(rng, 60.0 * kDeg);
  CalibrationDataset ds = one_camera_dataset(c);
  ds.board.corners[8] = ds.board.corners[7];
  const PixelPoint pred = predict_pixel(c.est, ds.board, c.frame, "cam", 7);
  ds.observations = {{"cam", 3, 7, pred - Eigen::Vector2d(3.0, 4.0)}, {"cam", 3, 8, pred}};
  EXPECT_NEAR(board_rmse(c.est, ds), 3.5355339059327378, 1e-9);
  EXPECT_NEAR(camera_board_rmse(c.est, ds, "cam"), 3.5355339059327378, 1e-9);
  EXPECT_NEAR(objective_2d(c.est, ds, RegularizationConfig{.lambda = 0.0}), 25.0, 1e-9);
}

TEST(Chain, BoardRmseRequiresObservations) {
  std::mt19937_64 rng(17);
  const Config c = random_config(rng);
  CalibrationDataset ds = one_camera_dataset(c);
  ds.observations.clear();
  try {
    board_rmse(c.est, ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
  EXPECT_THROW(camera_board_rmse(c.est, ds, "cam"), Error);
}

TEST(Chain, RegularizationCostByHand) {
  std::mt19937_64 rng(18);
  const Config c = random_config(rng, 60.0 * kDeg);
  const CalibrationDataset ds = one_camera_dataset(c);
  ChainEstimate est = c.est;
  CameraModel& m = est.intrinsics["cam"];
  m.cx += 2.0;
  m.cy -= 1.0;
  const CameraModel& f = ds.cameras[0];
  RegularizationConfig reg;
  reg.lambda = 0.5;
  // Zero distortion prior, factory principal point, no focal term.
  double expected = 1e-2 * (4.0 + 1.0);
  for (double k : f.radial) expected += 1e2 * k * k;
  for (double p : f.tangential) expected += 1e2 * p * p;
  EXPECT_NEAR(regularization_cost(est, ds, reg), 0.5 * expected, 1e-12);

  reg.distortion_prior = RegularizationConfig::DistortionPrior::Factory;
  reg.principal_point_prior = RegularizationConfig::PrincipalPointPrior::ImageCenter;
  const double dx = m.cx - 0.5 * f.width;
  const double dy = m.cy - 0.5 * f.height;
  EXPECT_NEAR(regularization_cost(est, ds, reg), 0.5 * 1e-2 * (dx * dx + dy * dy), 1e-9);
  reg.lambda = 0.0;
  EXPECT_EQ(regularization_cost(est, ds, reg), 0.0);
}

TEST(Chain, Objective3dByHand) {
  std::mt19937_64 rng(19);
  const Config c = random_config(rng);
  const CalibrationDataset ds = one_camera_dataset(c);
  const RigidTransform chain = c.est.extrinsic("cam") * c.frame.marker_to_platform() * c.est.board_to_marker;
  PnpReferences refs;
  refs.points[{"cam", 3, 7}] = chain * c.board.corner(7) + Eigen::Vector3d(0.01, -0.02, 0.02);
  EXPECT_NEAR(objective_3d(c.est, ds, refs), 0.0009, 1e-15);
}

TEST(Chain, ObjectiveIsTotalBeyondFieldOfView) {
  std::mt19937_64 rng(20);
  Config c = random_config(rng);
  CalibrationDataset ds = one_camera_dataset(c);
  ChainEstimate flipped = c.est;
  flipped.extrinsics["cam"] = RigidTransform{so3_exp(Eigen::Vector3d(std::numbers::pi, 0, 0)),
                                             Eigen::Vector3d::Zero()} * flipped.extrinsics["cam"];
  // The corner may now be behind the camera; the objective still evaluates.
  EXPECT_TRUE(std::isfinite(objective_2d(flipped, ds, {})));
}

TEST(Chain, DefaultBoardLayout) {
  const BoardGeometry b = make_marker_board();
  ASSERT_EQ(b.corners.size(), 96u);
  double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
  for (const auto& [id, p] : b.corners) {
    EXPECT_EQ(p.z(), 0.0);
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  EXPECT_NEAR(max_x - min_x, 6 * 0.059 + 5 * 0.0295, 1e-12);
  EXPECT_NEAR(max_y - min_y, 4 * 0.059 + 3 * 0.0295, 1e-12);
  EXPECT_NEAR(min_x + max_x, 0.0, 1e-12);
  EXPECT_NEAR((b.corner(1) - b.corner(0)).norm(), 0.059, 1e-12);
  EXPECT_NEAR((b.corner(4) - b.corner(1)).norm(), 0.0295, 1e-12);
  EXPECT_THROW(b.corner(96), Error);
}

TEST(Chain, DatasetValidation) {
  std::mt19937_64 rng(21);
  const Config c = random_config(rng);
  CalibrationDataset ds = one_camera_dataset(c);
  EXPECT_NO_THROW(ds.validate());

  CalibrationDataset dup = ds;
  dup.observations.push_back(dup.observations[0]);
  EXPECT_THROW(dup.validate(), Error);

  CalibrationDataset unknown = ds;
  unknown.observations[0].camera_id = "nope";
  EXPECT_THROW(unknown.validate(), Error);

  CalibrationDataset order = ds;
  order.frames.push_back(order.frames[0]);
  EXPECT_THROW(order.validate(), Error);

  CalibrationDataset nan = ds;
  nan.observations[0].pixel.x() = std::nan("");
  EXPECT_THROW(nan.validate(), Error);

  CalibrationDataset missing_corner = ds;
  missing_corner.observations[0].corner_id = 99;
  EXPECT_THROW(missing_corner.validate(), Error);
}

TEST(Chain, FrameLookup) {
  CalibrationDataset ds;
  for (int id : {2, 5, 9}) ds.frames.push_back(MocapFrame{id, 0.0, RigidTransform::identity(), std::nullopt});
  EXPECT_EQ(ds.find_frame(5)->frame_id, 5);
  EXPECT_EQ(ds.find_frame(4), nullptr);
  EXPECT_THROW(ds.frame(10), Error);
}

TEST(Chain, InitialEstimateUsesDatasetIntrinsics) {
  std::mt19937_64 rng(22);
  const CalibrationDataset ds = one_camera_dataset(random_config(rng));
  const ChainEstimate e = initial_estimate(ds);
  EXPECT_EQ(e.model("cam"), ds.cameras[0]);
  EXPECT_EQ(e.extrinsic("cam"), RigidTransform::identity());
  EXPECT_THROW(e.extrinsic("other"), Error);
}

}  // namespace
}  // namespace mocap_calib

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
// End-to-end run on a synthetic four-camera headset: calibrate from board
// observations, then score the result on a Lollypop recording.
//
//   calibrate_synthetic [seed] [pixel_noise_px]

#include <cstdio>
#include <cstdlib>

#include "mocap_calib/solver.hpp"
#include "mocap_calib/synth.hpp"
#include "mocap_calib/verify.hpp"

int main(int argc, char** argv) {
  using namespace mocap_calib;
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const double sigma = argc > 2 ? std::strtod(argv[2], nullptr) : 0.2;

  SceneSpec spec = default_scene_spec(seed, 4, 200, sigma);
  spec.lollypop.frame_count = 200;
  const SyntheticScene scene = generate_scene(spec);
  std::printf("scene: %zu frames, %zu corner observations, %zu Lollypop frames\n",
              scene.dataset.frames.size(), scene.dataset.observations.size(),
              scene.lollypop_recording.size());

  try {
    const CalibrationResult r = calibrate(scene.dataset, SolverOptions{});
    for (const auto& s : r.stages) {
      std::printf("%-18s %4d iterations  %.4e -> %.4e\n", s.stage.c_str(), s.iterations,
                  s.start_objective, s.end_objective);
    }
    std::printf("board RMSE %.3f px\n", r.board_rmse);

    const RigidTransform& x = r.estimate.board_to_marker;
    const RigidTransform& xt = scene.ground_truth.board_to_marker;
    std::printf("X error: %.4f mrad, %.4f mm\n",
                1e3 * rotation_angle_between(x.rotation, xt.rotation),
                1e3 * (x.translation - xt.translation).norm());
    for (const auto& [id, y] : r.estimate.extrinsics) {
      const RigidTransform& yt = scene.ground_truth.extrinsic(id);
      std::printf("%s error: %.4f mrad, %.4f mm\n", id.c_str(),
                  1e3 * rotation_angle_between(y.rotation, yt.rotation),
                  1e3 * (y.translation - yt.translation).norm());
    }

    const VerificationReport rep = verify(scene.lollypop_recording, r.estimate);
    for (const auto& c : rep.per_camera) {
      std::printf("%s  Lollypop %.2f px  %.2f mm  %s\n", c.camera_id.c_str(), c.rmse_2d,
                  1e3 * c.rmse_3d, c.pass ? "PASS" : "FAIL");
    }
    std::printf("overall    Lollypop %.2f px  %s\n", rep.rmse_2d, rep.pass ? "PASS" : "FAIL");
    return rep.pass ? 0 : 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }
}

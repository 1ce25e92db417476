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
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mocap_calib/commands.hpp"

namespace {

using namespace mocap_calib;

struct SolverFlags {
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<int> candidates;
  std::optional<int> pool;
  std::optional<int> rounds;
  std::optional<int> max_iters;
  bool skip1 = false;
  bool skip2 = false;
  bool skip3 = false;
  bool fix_intrinsics = false;
  bool optimize_intrinsics = false;
  std::optional<double> lambda;

  void add_to(CLI::App* app) {
    app->add_option("--seed", seed, "Seed for the Stage-1 rotation candidates");
    app->add_option("--epsilon", epsilon, "LM relative-improvement tolerance");
    app->add_option("--candidates", candidates, "Number of Stage-1 rotation candidates");
    app->add_option("--pool", pool, "Size of the random pool candidates are drawn from");
    app->add_option("--procrustes-rounds", rounds, "Alternation rounds per candidate");
    app->add_option("--max-iters", max_iters, "LM iteration cap per stage");
    app->add_flag("--skip-stage1", skip1, "Skip Procrustes initialization");
    app->add_flag("--skip-stage2", skip2, "Skip 3-D refinement");
    app->add_flag("--skip-stage3", skip3, "Skip 2-D reprojection refinement");
    auto* fix = app->add_flag("--fix-intrinsics", fix_intrinsics, "Keep intrinsics at the dataset values");
    auto* opt = app->add_flag("--optimize-intrinsics", optimize_intrinsics, "Refine intrinsics in Stage 3");
    fix->excludes(opt);
    app->add_option("--lambda", lambda, "Intrinsic regularization weight");
  }

  void apply(CliConfig& cfg) const {
    if (seed) cfg.solver.seed = *seed;
    if (epsilon) cfg.solver.epsilon = *epsilon;
    if (candidates) cfg.solver.candidate_count = *candidates;
    if (pool) cfg.solver.pool_size = *pool;
    if (rounds) cfg.solver.procrustes_rounds = *rounds;
    if (max_iters) cfg.solver.lm_max_iters = *max_iters;
    if (skip1) cfg.solver.skip_stage1 = true;
    if (skip2) cfg.solver.skip_stage2 = true;
    if (skip3) cfg.solver.skip_stage3 = true;
    if (fix_intrinsics) cfg.solver.optimize_intrinsics = false;
    if (optimize_intrinsics) cfg.solver.optimize_intrinsics = true;
    if (lambda) cfg.regularization.lambda = *lambda;
  }
};

PerturbSelector parse_target(const std::string& s) {
  PerturbSelector sel;
  if (s == "cameras") {
    sel.all_cameras = true;
  } else if (s == "x") {
    sel.board_to_marker = true;
  } else if (s == "all") {
    sel.all_cameras = true;
    sel.board_to_marker = true;
  } else {
    std::size_t start = 0;
    while (start <= s.size()) {
      const std::size_t end = std::min(s.find(',', start), s.size());
      if (end > start) sel.cameras.push_back(s.substr(start, end - start));
      start = end + 1;
    }
  }
  return sel;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera-to-mocap extrinsic calibration and Lollypop verification"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 std::string("JSON config file (default: $") + kConfigEnvVar + ")");

  SolverFlags solver_flags;
  std::optional<double> threshold;
  std::optional<int> bin_size;
  std::optional<double> max_incidence_deg;

  std::string dataset, out, known_x, recording, calibration, report, prefix, camera;
  std::string units_name = "meters";
  std::vector<std::string> reports;

  auto* calibrate = app.add_subcommand("calibrate", "Run the three-stage calibration");
  calibrate->add_option("dataset", dataset, "Dataset file")->required();
  calibrate->add_option("-o,--out", out, "Result file")->required();
  solver_flags.add_to(calibrate);

  auto* baseline = app.add_subcommand("baseline", "Fixed-X baseline with Huber refinement");
  baseline->add_option("dataset", dataset, "Dataset file")->required();
  baseline->add_option("--known-x", known_x, "Board-to-marker transform (JSON)")->required();
  baseline->add_option("-o,--out", out, "Result file")->required();
  baseline->add_option("--units", units_name, "Units of the known-X translation (meters|millimeters)");
  solver_flags.add_to(baseline);

  auto* verify = app.add_subcommand("verify", "Score a calibration on a Lollypop recording");
  verify->add_option("recording", recording, "Recording file")->required();
  verify->add_option("calibration", calibration, "Calibration result")->required();
  verify->add_option("-o,--out", out, "Report file")->required();
  verify->add_option("--threshold-2d", threshold, "Pass threshold on rmse_2d (px)");
  verify->add_option("--max-incidence-deg", max_incidence_deg, "Drop frames viewed more obliquely");

  auto* heatmap = app.add_subcommand("heatmap", "Per-camera spatial error maps");
  heatmap->add_option("report", report, "Verification report")->required();
  heatmap->add_option("calibration", calibration, "Calibration result")->required();
  heatmap->add_option("--prefix", prefix, "Output prefix")->required();
  heatmap->add_option("--camera", camera, "Only this camera");
  heatmap->add_option("--bin-size", bin_size, "Bin size (px)");

  auto* drift = app.add_subcommand("drift", "Trend over a chronological series of reports");
  drift->add_option("reports", reports, "Verification reports, oldest first")->required();
  drift->add_option("-o,--out", out, "Series table file");

  SynthRequest synth_req;
  double mocap_rot_mrad = 0.0, mocap_trans_mm = 0.0, perturb_rot_mrad = 0.0, perturb_trans_mm = 0.0;
  std::string perturb_target = "cameras";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  synth->add_option("-o,--out", synth_req.dataset_out, "Dataset file")->required();
  synth->add_option("--seed", synth_req.seed, "Scene seed");
  synth->add_option("--cameras", synth_req.cameras, "Camera count")->check(CLI::PositiveNumber);
  synth->add_option("--frames", synth_req.frames, "Calibration frames")->check(CLI::NonNegativeNumber);
  synth->add_option("--pixel-noise", synth_req.pixel_noise, "Corner noise sigma (px)");
  synth->add_option("--mocap-rotation-noise-mrad", mocap_rot_mrad, "Board pose rotation noise");
  synth->add_option("--mocap-translation-noise-mm", mocap_trans_mm, "Board pose translation noise");
  synth->add_option("--lollypop-frames", synth_req.lollypop_frames, "Lollypop frames");
  synth->add_option("--recording", synth_req.recording_out, "Write Lollypop frames to a separate file");
  synth->add_option("--truth", synth_req.truth_out, "Ground truth as a calibration result");
  synth->add_option("--perturbed", synth_req.perturbed_out, "Perturbed ground truth as a calibration result");
  synth->add_option("--perturb-rotation-mrad", perturb_rot_mrad, "Perturbation rotation");
  synth->add_option("--perturb-translation-mm", perturb_trans_mm, "Perturbation translation");
  synth->add_option("--perturb-target", perturb_target, "cameras | x | all | comma-separated camera ids");
  synth->add_option("--units", units_name, "Length unit of the written files (meters|millimeters)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInputError;
  }

  CliConfig cfg;
  LengthUnit units = LengthUnit::Meters;
  try {
    cfg = load_config(config_path);
    units = parse_unit(units_name);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return kExitInputError;
  }
  solver_flags.apply(cfg);
  if (threshold) cfg.threshold_2d = *threshold;
  if (bin_size) cfg.bin_size = *bin_size;
  if (max_incidence_deg) cfg.max_incidence = *max_incidence_deg * kDeg;

  if (*calibrate) return cmd_calibrate(dataset, cfg, out);
  if (*baseline) return cmd_baseline(dataset, known_x, cfg, out, units);
  if (*verify) return cmd_verify(recording, calibration, cfg, out);
  if (*heatmap) return cmd_heatmap(report, calibration, cfg, prefix, camera);
  if (*drift) return cmd_drift(reports, out);
  synth_req.units = units;
  synth_req.mocap_rotation_noise = mocap_rot_mrad * 1e-3;
  synth_req.mocap_translation_noise = mocap_trans_mm * 1e-3;
  synth_req.perturb_rotation = perturb_rot_mrad * 1e-3;
  synth_req.perturb_translation = perturb_trans_mm * 1e-3;
  synth_req.perturb_target = parse_target(perturb_target);
  return cmd_synth(synth_req);
}

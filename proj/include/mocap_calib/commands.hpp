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

// Operator-facing commands. Each returns a process exit code:
// 0 success / pass, 1 verification fail, 2 solver failure, 3 input error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mocap_calib/error.hpp"
#include "mocap_calib/io.hpp"
#include "mocap_calib/solver.hpp"
#include "mocap_calib/synth.hpp"
#include "mocap_calib/verify.hpp"

namespace mocap_calib {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFail = 1;
inline constexpr int kExitSolverFailure = 2;
inline constexpr int kExitInputError = 3;

inline constexpr const char* kConfigEnvVar = "MOCAP_CALIB_CONFIG";

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoConvergence:
    case ErrorCode::SingularNormalEquations:
    case ErrorCode::Divergence:
    case ErrorCode::DegenerateConfiguration:
      return kExitSolverFailure;
    default:
      return kExitInputError;
  }
}

/// Settings shared by the commands; read from a JSON config file and then
/// overridden by command-line flags.
struct CliConfig {
  SolverOptions solver;
  RegularizationConfig regularization;
  double threshold_2d = 1.0;
  int bin_size = 64;
  std::optional<double> max_incidence;  // rad
};

/// Reads `path`, or the file named by MOCAP_CALIB_CONFIG when `path` is empty.
/// Missing both yields the defaults.
inline CliConfig load_config(const std::string& path = {}) {
  CliConfig cfg;
  std::string p = path;
  if (p.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar)) p = env;
  }
  if (p.empty()) return cfg;
  const json j = read_json_file(p);
  parse_guarded(p, [&] {
    if (j.contains("solver")) io_detail::options_from(j.at("solver"), cfg.solver);
    if (j.contains("regularization")) io_detail::regularization_from(j.at("regularization"), cfg.regularization);
    if (j.contains("verify")) {
      const json& v = j.at("verify");
      cfg.threshold_2d = v.value("threshold_2d", cfg.threshold_2d);
      cfg.bin_size = v.value("bin_size", cfg.bin_size);
      if (v.contains("max_incidence_deg")) cfg.max_incidence = v.at("max_incidence_deg").get<double>() * kDeg;
    }
    return 0;
  });
  return cfg;
}

namespace cmd_detail {

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
}

inline std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline void print_rmse_table(const CalibrationResult& r, const CalibrationDataset& ds,
                             std::ostream& out) {
  out << "camera        board RMSE (px)\n";
  double sum = 0.0;
  int n = 0;
  for (const auto& c : ds.cameras) {
    if (!r.estimate.extrinsics.contains(c.camera_id)) {
      out << c.camera_id << std::string(14 - std::min<std::size_t>(13, c.camera_id.size()), ' ')
          << "uncalibrated\n";
      continue;
    }
    const double v = camera_board_rmse(r.estimate, ds, c.camera_id);
    sum += v;
    ++n;
    out << c.camera_id << std::string(14 - std::min<std::size_t>(13, c.camera_id.size()), ' ')
        << fixed2(v) << '\n';
  }
  if (n > 0) out << "mean          " << fixed2(sum / n) << '\n';
  out << "pooled        " << fixed2(r.board_rmse) << "  (" << sci(r.board_rmse) << ")\n";
}

inline RigidTransform load_known_x(const std::string& path, LengthUnit units) {
  const json j = read_json_file(path);
  return parse_guarded(path, [&] {
    if (j.contains("kind") && j.at("kind") == "calibration_result") {
      return calibration_result_from_json(j).estimate.board_to_marker;
    }
    const json& t = j.contains("board_to_marker") ? j.at("board_to_marker") : j;
    return io_detail::transform_from(t, unit_scale(units));
  });
}

}  // namespace cmd_detail

inline int cmd_calibrate(const std::string& dataset_path, const CliConfig& cfg,
                         const std::string& out_path, std::ostream& out = std::cout,
                         std::ostream& err = std::cerr) {
  return cmd_detail::guarded(err, [&] {
    const CalibrationDataset ds = load_dataset(dataset_path);
    const CalibrationResult r = calibrate(ds, cfg.solver, cfg.regularization);
    save_result(out_path, r);
    cmd_detail::print_rmse_table(r, ds, out);
    for (const auto& s : r.stages) {
      out << s.stage << ": " << s.iterations << " iterations, objective " << cmd_detail::sci(s.start_objective)
          << " -> " << cmd_detail::sci(s.end_objective);
      if (!s.note.empty()) out << " (" << s.note << ")";
      out << '\n';
    }
    for (const auto& id : r.uncalibrated_cameras) out << "warning: camera " << id << " has no board references\n";
    if (!r.converged) {
      err << "solver did not converge\n";
      return kExitSolverFailure;
    }
    return kExitOk;
  });
}

inline int cmd_baseline(const std::string& dataset_path, const std::string& known_x_path,
                        const CliConfig& cfg, const std::string& out_path,
                        LengthUnit units = LengthUnit::Meters, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return cmd_detail::guarded(err, [&] {
    const CalibrationDataset ds = load_dataset(dataset_path);
    const RigidTransform x = cmd_detail::load_known_x(known_x_path, units);
    const CalibrationResult r = calibrate_fixed_x(ds, x, cfg.solver);
    save_result(out_path, r);
    cmd_detail::print_rmse_table(r, ds, out);
    return r.converged ? kExitOk : kExitSolverFailure;
  });
}

inline int cmd_verify(const std::string& recording_path, const std::string& calibration_path,
                      const CliConfig& cfg, const std::string& out_path,
                      std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return cmd_detail::guarded(err, [&] {
    const std::vector<LollypopFrame> rec = load_lollypop(recording_path);
    const CalibrationResult cal = load_calibration_result(calibration_path);
    VerifyOptions vo;
    vo.threshold_2d = cfg.threshold_2d;
    vo.max_incidence = cfg.max_incidence;
    const VerificationReport rep = verify(rec, cal.estimate, vo);
    save_result(out_path, rep);
    out << "camera        frames  RMSE 2D (px)  RMSE 3D (mm)  result\n";
    for (const auto& c : rep.per_camera) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-13s %6d  %12.2f  %12.2f  %s\n", c.camera_id.c_str(), c.frames,
                    c.rmse_2d, c.rmse_3d * 1e3, c.pass ? "PASS" : "FAIL");
      out << buf;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-13s %6zu  %12.2f  %12.2f  %s (threshold %.2f px)\n", "overall",
                  rep.per_frame.size(), rep.rmse_2d, rep.rmse_3d * 1e3, rep.pass ? "PASS" : "FAIL",
                  rep.threshold_2d);
    out << buf;
    if (rep.filtered_frames > 0) out << rep.filtered_frames << " frames dropped by the viewing-angle filter\n";
    return rep.pass ? kExitOk : kExitVerifyFail;
  });
}

/// Writes <prefix>_<camera>.ppm and <prefix>_<camera>.txt for every camera in
/// the report (or only `camera_id` when given).
inline int cmd_heatmap(const std::string& report_path, const std::string& calibration_path,
                       const CliConfig& cfg, const std::string& out_prefix,
                       const std::string& camera_id = {}, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  return cmd_detail::guarded(err, [&] {
    const VerificationReport rep = load_verification_report(report_path);
    const CalibrationResult cal = load_calibration_result(calibration_path);
    std::vector<std::string> cams;
    for (const auto& c : rep.per_camera) {
      if (camera_id.empty() || c.camera_id == camera_id) cams.push_back(c.camera_id);
    }
    if (cams.empty()) fail(ErrorCode::ValidationError, "no frames for camera " + camera_id);
    for (const auto& id : cams) {
      const ErrorHeatmap hm = build_heatmap(rep, cal.estimate.model(id), cfg.bin_size);
      const std::string base = out_prefix + "_" + id;
      std::ofstream ppm(base + ".ppm");
      std::ofstream txt(base + ".txt");
      if (!ppm || !txt) fail(ErrorCode::InvalidArgument, "cannot write " + base + ".{ppm,txt}");
      write_heatmap_ppm(hm, ppm);
      write_heatmap_grid(hm, txt);
      out << id << ": " << hm.total_count() << " frames in " << hm.cols << "x" << hm.rows << " bins -> "
          << base << ".ppm\n";
    }
    return kExitOk;
  });
}

inline void write_drift_table(const DriftSeries& s, std::ostream& os) {
  os << "index  rmse_2d_px  rmse_3d_mm\n";
  char buf[96];
  for (const auto& p : s.points) {
    std::snprintf(buf, sizeof buf, "%5d  %10.2f  %10.2f\n", p.index, p.rmse_2d, p.rmse_3d * 1e3);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "slope_2d %.6g px/report, slope_3d %.6g mm/report\n", s.slope_2d,
                s.slope_3d * 1e3);
  os << buf;
  os << "trend " << (s.increasing ? "increasing" : "not increasing")
     << (s.strictly_increasing ? " (strictly monotone)" : "") << '\n';
}

inline int cmd_drift(const std::vector<std::string>& report_paths, const std::string& out_path,
                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return cmd_detail::guarded(err, [&] {
    std::vector<VerificationReport> reps;
    for (const auto& p : report_paths) reps.push_back(load_verification_report(p));
    const DriftSeries s = drift_series(reps);
    write_drift_table(s, out);
    if (!out_path.empty()) {
      std::ofstream os(out_path);
      if (!os) fail(ErrorCode::InvalidArgument, "cannot write " + out_path);
      write_drift_table(s, os);
    }
    return kExitOk;
  });
}

struct SynthRequest {
  std::uint64_t seed = 0;
  int cameras = 4;
  int frames = 200;
  double pixel_noise = 0.0;       // px
  double mocap_rotation_noise = 0.0;     // rad
  double mocap_translation_noise = 0.0;  // m
  int lollypop_frames = 0;
  LengthUnit units = LengthUnit::Meters;
  std::string dataset_out;
  std::string recording_out;  // optional, Lollypop frames only
  std::string truth_out;      // optional, ground truth as a calibration result
  // Optional perturbed copy of the truth, e.g. for verification and drift runs.
  std::string perturbed_out;
  double perturb_rotation = 0.0;     // rad
  double perturb_translation = 0.0;  // m
  PerturbSelector perturb_target{false, true, {}};
};

inline CalibrationResult truth_result(const ChainEstimate& est, std::string method) {
  CalibrationResult r;
  r.method = std::move(method);
  r.estimate = est;
  r.converged = true;
  return r;
}

inline int cmd_synth(const SynthRequest& req, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  return cmd_detail::guarded(err, [&] {
    SceneSpec spec = default_scene_spec(req.seed, req.cameras, req.frames, req.pixel_noise);
    spec.mocap_rotation_noise = req.mocap_rotation_noise;
    spec.mocap_translation_noise = req.mocap_translation_noise;
    spec.lollypop.frame_count = req.lollypop_frames;
    const SyntheticScene scene = generate_scene(spec);
    const bool split = !req.recording_out.empty();
    save_dataset(req.dataset_out, scene.dataset, split ? std::vector<LollypopFrame>{} : scene.lollypop_recording,
                 req.units);
    if (split) {
      CalibrationDataset empty;
      save_dataset(req.recording_out, empty, scene.lollypop_recording, req.units);
    }
    if (!req.truth_out.empty()) save_result(req.truth_out, truth_result(scene.ground_truth, "ground_truth"));
    if (!req.perturbed_out.empty()) {
      const ChainEstimate p = perturb_estimate(scene.ground_truth, req.perturb_rotation,
                                               req.perturb_translation, req.perturb_target, req.seed);
      save_result(req.perturbed_out, truth_result(p, "perturbed_ground_truth"));
    }
    out << "synthetic scene seed " << req.seed << ": " << scene.dataset.frames.size() << " frames, "
        << scene.dataset.observations.size() << " observations, " << scene.lollypop_recording.size()
        << " Lollypop frames\n";
    return kExitOk;
  });
}

}  // namespace mocap_calib

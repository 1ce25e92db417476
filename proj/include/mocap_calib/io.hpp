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

// Line-delimited dataset files and JSON result files.
//
// Dataset files hold one JSON object per line, each tagged by "kind". The
// first record is a header {"kind":"header","format_version":1,"units":...}
// where units is "meters" or "millimeters"; lengths in millimeter files are
// converted to meters on load. Result files are a single JSON object whose
// numbers are written in shortest round-trip form, so load(save(x)) == x.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mocap_calib/camera.hpp"
#include "mocap_calib/chain.hpp"
#include "mocap_calib/error.hpp"
#include "mocap_calib/geometry.hpp"
#include "mocap_calib/homography.hpp"
#include "mocap_calib/solver.hpp"
#include "mocap_calib/verify.hpp"

namespace mocap_calib {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

enum class LengthUnit { Meters, Millimeters };

inline LengthUnit parse_unit(const std::string& s) {
  if (s == "meters" || s == "m") return LengthUnit::Meters;
  if (s == "millimeters" || s == "mm") return LengthUnit::Millimeters;
  fail(ErrorCode::ParseError, "unknown length unit '" + s + "'");
}

inline const char* to_string(LengthUnit u) {
  return u == LengthUnit::Meters ? "meters" : "millimeters";
}

inline double unit_scale(LengthUnit u) { return u == LengthUnit::Meters ? 1.0 : 1e-3; }

/// Everything a dataset file can carry.
struct DatasetFile {
  CalibrationDataset dataset;
  std::vector<LollypopFrame> lollypop;
  LengthUnit units = LengthUnit::Meters;
  int dropped_frames = 0;  // mocap frames without a board pose
};

namespace io_detail {

inline json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json vec2_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

inline json transform_json(const RigidTransform& t, double to_file = 1.0) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  }
  return {{"rotation", rot}, {"translation", vec_json(t.translation * to_file)}};
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const json& j) {
  if (!j.is_array() || j.size() != N) fail(ErrorCode::ParseError, "expected array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

inline RigidTransform transform_from(const json& j, double scale = 1.0) {
  const json& rot = j.at("rotation");
  if (!rot.is_array() || rot.size() != 9) fail(ErrorCode::ParseError, "rotation needs 9 values");
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot.at(static_cast<std::size_t>(3 * r + c)).get<double>();
  }
  t.translation = vec_from<3>(j.at("translation")) * scale;
  return t;
}

inline void check_rotation(const Eigen::Matrix3d& r, const std::string& what) {
  if (!r.allFinite() || (r.transpose() * r - Eigen::Matrix3d::Identity()).norm() > 1e-6 ||
      r.determinant() < 0.0) {
    fail(ErrorCode::ValidationError, what + ": rotation is not orthonormal");
  }
}

inline json camera_json(const CameraModel& m) {
  return {{"camera_id", m.camera_id}, {"model", "fisheye62"}, {"width", m.width},
          {"height", m.height}, {"fx", m.fx}, {"fy", m.fy}, {"cx", m.cx}, {"cy", m.cy},
          {"radial", m.radial}, {"tangential", m.tangential}, {"theta_max", m.theta_max}};
}

inline CameraModel camera_from(const json& j) {
  if (j.contains("model") && j.at("model").get<std::string>() != "fisheye62") {
    fail(ErrorCode::ParseError, "unsupported camera model " + j.at("model").get<std::string>());
  }
  CameraModel m;
  m.camera_id = j.at("camera_id").get<std::string>();
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  m.fx = j.at("fx").get<double>();
  m.fy = j.at("fy").get<double>();
  m.cx = j.at("cx").get<double>();
  m.cy = j.at("cy").get<double>();
  m.radial = j.at("radial").get<std::array<double, 6>>();
  m.tangential = j.at("tangential").get<std::array<double, 2>>();
  if (j.contains("theta_max")) m.theta_max = j.at("theta_max").get<double>();
  return m;
}

inline json lollypop_json(const LollypopFrame& f, double to_file) {
  json corners = json::array();
  for (const auto& c : f.aruco_corners) corners.push_back(vec2_json(c));
  json j = {{"kind", "lollypop_frame"}, {"frame_id", f.frame_id}, {"camera_id", f.camera_id},
            {"aruco_corners", corners}, {"mocap_centroid", vec_json(f.mocap_centroid * to_file)}};
  if (f.platform_pose) j["platform_pose"] = transform_json(*f.platform_pose, to_file);
  return j;
}

inline LollypopFrame lollypop_from(const json& j, double scale) {
  LollypopFrame f;
  f.frame_id = j.at("frame_id").get<int>();
  f.camera_id = j.at("camera_id").get<std::string>();
  const json& c = j.at("aruco_corners");
  if (!c.is_array() || c.size() != 4) {
    fail(ErrorCode::ValidationError, "lollypop frame " + std::to_string(f.frame_id) + ": needs exactly 4 corners");
  }
  for (std::size_t i = 0; i < 4; ++i) f.aruco_corners[i] = vec_from<2>(c.at(i));
  if (has_collinear_triple(std::span<const Eigen::Vector2d>(f.aruco_corners.data(), 4))) {
    fail(ErrorCode::ValidationError, "lollypop frame " + std::to_string(f.frame_id) + ": corners are collinear");
  }
  f.mocap_centroid = vec_from<3>(j.at("mocap_centroid")) * scale;
  if (j.contains("platform_pose") && !j.at("platform_pose").is_null()) {
    f.platform_pose = transform_from(j.at("platform_pose"), scale);
  }
  return f;
}

}  // namespace io_detail

/// Parses a dataset stream. Errors carry the 1-based line number.
inline DatasetFile parse_dataset(std::istream& in) {
  DatasetFile out;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  double scale = 1.0;
  std::vector<int> dropped_ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    try {
      const json j = json::parse(line);
      if (!j.is_object() || !j.contains("kind")) fail(ErrorCode::ParseError, "record has no kind");
      const std::string kind = j.at("kind").get<std::string>();
      if (!have_header) {
        if (kind != "header") fail(ErrorCode::ParseError, "first record must be the header");
        const int version = j.at("format_version").get<int>();
        if (version != kFormatVersion) {
          fail(ErrorCode::ParseError, "unsupported format_version " + std::to_string(version));
        }
        out.units = parse_unit(j.at("units").get<std::string>());
        scale = unit_scale(out.units);
        have_header = true;
      } else if (kind == "camera") {
        out.dataset.cameras.push_back(io_detail::camera_from(j));
      } else if (kind == "board") {
        if (!out.dataset.board.corners.empty()) fail(ErrorCode::ParseError, "duplicate board record");
        out.dataset.board.board_id = j.value("board_id", std::string("board"));
        for (const auto& c : j.at("corners")) {
          const int id = c.at("id").get<int>();
          if (!out.dataset.board.corners.emplace(id, io_detail::vec_from<3>(c.at("position")) * scale).second) {
            fail(ErrorCode::ValidationError, "duplicate board corner id " + std::to_string(id));
          }
        }
      } else if (kind == "mocap_frame") {
        MocapFrame f;
        f.frame_id = j.at("frame_id").get<int>();
        f.time = j.value("time", 0.0);
        if (j.at("board_pose").is_null()) {
          dropped_ids.push_back(f.frame_id);
          continue;
        }
        f.board_pose = io_detail::transform_from(j.at("board_pose"), scale);
        io_detail::check_rotation(f.board_pose.rotation, "frame " + std::to_string(f.frame_id));
        if (j.contains("platform_pose") && !j.at("platform_pose").is_null()) {
          f.platform_pose = io_detail::transform_from(j.at("platform_pose"), scale);
          io_detail::check_rotation(f.platform_pose->rotation,
                                    "frame " + std::to_string(f.frame_id) + " platform");
        }
        out.dataset.frames.push_back(f);
      } else if (kind == "observation") {
        Observation o;
        o.camera_id = j.at("camera_id").get<std::string>();
        o.frame_id = j.at("frame_id").get<int>();
        o.corner_id = j.at("corner_id").get<int>();
        o.pixel = io_detail::vec_from<2>(j.at("pixel"));
        out.dataset.observations.push_back(o);
      } else if (kind == "lollypop_frame") {
        out.lollypop.push_back(io_detail::lollypop_from(j, scale));
      } else if (kind == "header") {
        fail(ErrorCode::ParseError, "duplicate header");
      } else {
        fail(ErrorCode::ParseError, "unknown record kind '" + kind + "'");
      }
    } catch (const Error& e) {
      throw Error(e.code(), where + e.what());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, where + e.what());
    }
  }
  if (!have_header) fail(ErrorCode::ParseError, "line 1: missing header record");

  if (!dropped_ids.empty()) {
    std::sort(dropped_ids.begin(), dropped_ids.end());
    auto& obs = out.dataset.observations;
    std::erase_if(obs, [&](const Observation& o) {
      return std::binary_search(dropped_ids.begin(), dropped_ids.end(), o.frame_id);
    });
  }
  out.dropped_frames = static_cast<int>(dropped_ids.size());
  return out;
}

inline DatasetFile read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open " + path);
  return parse_dataset(in);
}

/// Loads and validates a calibration dataset (cameras, board, frames, observations).
inline CalibrationDataset load_dataset(const std::string& path) {
  DatasetFile f = read_dataset_file(path);
  if (f.dataset.cameras.empty()) fail(ErrorCode::ValidationError, path + ": no camera records");
  if (f.dataset.board.corners.empty()) fail(ErrorCode::ValidationError, path + ": no board record");
  for (const auto& c : f.dataset.cameras) c.validate();
  f.dataset.validate();
  return std::move(f.dataset);
}

inline std::vector<LollypopFrame> load_lollypop(const std::string& path) {
  return read_dataset_file(path).lollypop;
}

/// Writes a dataset (and optional Lollypop frames) as line-delimited records.
inline void write_dataset(std::ostream& os, const CalibrationDataset& ds,
                          const std::vector<LollypopFrame>& lollypop = {},
                          LengthUnit units = LengthUnit::Meters) {
  const double to_file = 1.0 / unit_scale(units);
  os << json{{"kind", "header"}, {"format_version", kFormatVersion}, {"units", to_string(units)}}.dump() << '\n';
  for (const auto& c : ds.cameras) {
    json j = io_detail::camera_json(c);
    j["kind"] = "camera";
    os << j.dump() << '\n';
  }
  if (!ds.board.corners.empty()) {
    json corners = json::array();
    for (const auto& [id, p] : ds.board.corners) {
      corners.push_back({{"id", id}, {"position", io_detail::vec_json(p * to_file)}});
    }
    os << json{{"kind", "board"}, {"board_id", ds.board.board_id}, {"corners", corners}}.dump() << '\n';
  }
  for (const auto& f : ds.frames) {
    json j = {{"kind", "mocap_frame"}, {"frame_id", f.frame_id}, {"time", f.time},
              {"board_pose", io_detail::transform_json(f.board_pose, to_file)}};
    if (f.platform_pose) j["platform_pose"] = io_detail::transform_json(*f.platform_pose, to_file);
    os << j.dump() << '\n';
  }
  for (const auto& o : ds.observations) {
    os << json{{"kind", "observation"}, {"camera_id", o.camera_id}, {"frame_id", o.frame_id},
               {"corner_id", o.corner_id}, {"pixel", io_detail::vec2_json(o.pixel)}}
              .dump()
       << '\n';
  }
  for (const auto& f : lollypop) os << io_detail::lollypop_json(f, to_file).dump() << '\n';
}

inline void save_dataset(const std::string& path, const CalibrationDataset& ds,
                         const std::vector<LollypopFrame>& lollypop = {},
                         LengthUnit units = LengthUnit::Meters) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::InvalidArgument, "cannot write " + path);
  write_dataset(os, ds, lollypop, units);
}

// ---------------------------------------------------------------------------
// Result files

namespace io_detail {

inline json estimate_json(const ChainEstimate& est) {
  json cams = json::array();
  for (const auto& [id, y] : est.extrinsics) {
    json c = {{"camera_id", id}, {"extrinsic", transform_json(y)}};
    const auto it = est.intrinsics.find(id);
    if (it != est.intrinsics.end()) c["intrinsics"] = camera_json(it->second);
    cams.push_back(c);
  }
  for (const auto& [id, m] : est.intrinsics) {
    if (!est.extrinsics.contains(id)) cams.push_back({{"camera_id", id}, {"intrinsics", camera_json(m)}});
  }
  return {{"board_to_marker", transform_json(est.board_to_marker)}, {"cameras", cams}};
}

inline ChainEstimate estimate_from(const json& j) {
  ChainEstimate est;
  est.board_to_marker = transform_from(j.at("board_to_marker"));
  for (const auto& c : j.at("cameras")) {
    const std::string id = c.at("camera_id").get<std::string>();
    if (c.contains("extrinsic")) est.extrinsics[id] = transform_from(c.at("extrinsic"));
    if (c.contains("intrinsics")) est.intrinsics[id] = camera_from(c.at("intrinsics"));
  }
  return est;
}

inline json options_json(const SolverOptions& o) {
  return {{"candidate_count", o.candidate_count}, {"pool_size", o.pool_size},
          {"procrustes_rounds", o.procrustes_rounds}, {"lm_max_iters", o.lm_max_iters},
          {"epsilon", o.epsilon}, {"optimize_intrinsics", o.optimize_intrinsics},
          {"seed", o.seed}, {"skip_stage1", o.skip_stage1}, {"skip_stage2", o.skip_stage2},
          {"skip_stage3", o.skip_stage3}, {"initial_x", transform_json(o.initial_x)},
          {"huber_delta", o.huber_delta}, {"huber_rounds", o.huber_rounds}};
}

inline void options_from(const json& j, SolverOptions& o) {
  o.candidate_count = j.value("candidate_count", o.candidate_count);
  o.pool_size = j.value("pool_size", o.pool_size);
  o.procrustes_rounds = j.value("procrustes_rounds", o.procrustes_rounds);
  o.lm_max_iters = j.value("lm_max_iters", o.lm_max_iters);
  o.epsilon = j.value("epsilon", o.epsilon);
  o.optimize_intrinsics = j.value("optimize_intrinsics", o.optimize_intrinsics);
  o.seed = j.value("seed", o.seed);
  o.skip_stage1 = j.value("skip_stage1", o.skip_stage1);
  o.skip_stage2 = j.value("skip_stage2", o.skip_stage2);
  o.skip_stage3 = j.value("skip_stage3", o.skip_stage3);
  if (j.contains("initial_x")) o.initial_x = transform_from(j.at("initial_x"));
  o.huber_delta = j.value("huber_delta", o.huber_delta);
  o.huber_rounds = j.value("huber_rounds", o.huber_rounds);
}

inline json regularization_json(const RegularizationConfig& r) {
  using R = RegularizationConfig;
  return {{"lambda", r.lambda}, {"focal_weight", r.focal_weight},
          {"principal_point_weight", r.principal_point_weight},
          {"distortion_weight", r.distortion_weight},
          {"principal_point_prior",
           r.principal_point_prior == R::PrincipalPointPrior::Factory ? "factory" : "image_center"},
          {"distortion_prior", r.distortion_prior == R::DistortionPrior::Zero ? "zero" : "factory"}};
}

inline void regularization_from(const json& j, RegularizationConfig& r) {
  using R = RegularizationConfig;
  r.lambda = j.value("lambda", r.lambda);
  r.focal_weight = j.value("focal_weight", r.focal_weight);
  r.principal_point_weight = j.value("principal_point_weight", r.principal_point_weight);
  r.distortion_weight = j.value("distortion_weight", r.distortion_weight);
  if (j.contains("principal_point_prior")) {
    const auto s = j.at("principal_point_prior").get<std::string>();
    if (s == "factory") {
      r.principal_point_prior = R::PrincipalPointPrior::Factory;
    } else if (s == "image_center") {
      r.principal_point_prior = R::PrincipalPointPrior::ImageCenter;
    } else {
      fail(ErrorCode::ParseError, "unknown principal_point_prior '" + s + "'");
    }
  }
  if (j.contains("distortion_prior")) {
    const auto s = j.at("distortion_prior").get<std::string>();
    if (s == "zero") {
      r.distortion_prior = R::DistortionPrior::Zero;
    } else if (s == "factory") {
      r.distortion_prior = R::DistortionPrior::Factory;
    } else {
      fail(ErrorCode::ParseError, "unknown distortion_prior '" + s + "'");
    }
  }
}

}  // namespace io_detail

inline json to_json(const CalibrationResult& r) {
  json stages = json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"stage", s.stage}, {"iterations", s.iterations},
                      {"start_objective", s.start_objective}, {"end_objective", s.end_objective},
                      {"selected_candidate", s.selected_candidate}, {"converged", s.converged},
                      {"note", s.note}});
  }
  return {{"kind", "calibration_result"}, {"format_version", kFormatVersion},
          {"method", r.method}, {"converged", r.converged}, {"board_rmse", r.board_rmse},
          {"estimate", io_detail::estimate_json(r.estimate)}, {"stages", stages},
          {"uncalibrated_cameras", r.uncalibrated_cameras},
          {"config", {{"solver", io_detail::options_json(r.options)},
                      {"regularization", io_detail::regularization_json(r.regularization)}}}};
}

inline CalibrationResult calibration_result_from_json(const json& j) {
  if (j.at("kind").get<std::string>() != "calibration_result") {
    fail(ErrorCode::ParseError, "not a calibration_result");
  }
  CalibrationResult r;
  r.method = j.at("method").get<std::string>();
  r.converged = j.at("converged").get<bool>();
  r.board_rmse = j.at("board_rmse").get<double>();
  r.estimate = io_detail::estimate_from(j.at("estimate"));
  for (const auto& s : j.at("stages")) {
    StageDiagnostics d;
    d.stage = s.at("stage").get<std::string>();
    d.iterations = s.at("iterations").get<int>();
    d.start_objective = s.at("start_objective").get<double>();
    d.end_objective = s.at("end_objective").get<double>();
    d.selected_candidate = s.at("selected_candidate").get<int>();
    d.converged = s.at("converged").get<bool>();
    d.note = s.at("note").get<std::string>();
    r.stages.push_back(d);
  }
  r.uncalibrated_cameras = j.at("uncalibrated_cameras").get<std::vector<std::string>>();
  io_detail::options_from(j.at("config").at("solver"), r.options);
  io_detail::regularization_from(j.at("config").at("regularization"), r.regularization);
  return r;
}

inline json to_json(const VerificationReport& r) {
  json frames = json::array();
  for (const auto& e : r.per_frame) {
    frames.push_back({{"frame_id", e.frame_id}, {"camera_id", e.camera_id}, {"e2d", e.e2d},
                      {"e3d", e.e3d}, {"p_aruco", io_detail::vec2_json(e.p_aruco)},
                      {"p_mocap", io_detail::vec2_json(e.p_mocap)}});
  }
  json cams = json::array();
  for (const auto& c : r.per_camera) {
    cams.push_back({{"camera_id", c.camera_id}, {"frames", c.frames}, {"rmse_2d", c.rmse_2d},
                    {"rmse_3d", c.rmse_3d}, {"pass", c.pass}});
  }
  return {{"kind", "verification_report"}, {"format_version", kFormatVersion},
          {"rmse_2d", r.rmse_2d}, {"rmse_3d", r.rmse_3d}, {"pass", r.pass},
          {"threshold_2d", r.threshold_2d}, {"filtered_frames", r.filtered_frames},
          {"per_camera", cams}, {"per_frame", frames},
          {"config", {{"threshold_2d", r.threshold_2d}}}};
}

inline VerificationReport verification_report_from_json(const json& j) {
  if (j.at("kind").get<std::string>() != "verification_report") {
    fail(ErrorCode::ParseError, "not a verification_report");
  }
  VerificationReport r;
  r.rmse_2d = j.at("rmse_2d").get<double>();
  r.rmse_3d = j.at("rmse_3d").get<double>();
  r.pass = j.at("pass").get<bool>();
  r.threshold_2d = j.at("threshold_2d").get<double>();
  r.filtered_frames = j.value("filtered_frames", 0);
  for (const auto& c : j.at("per_camera")) {
    r.per_camera.push_back({c.at("camera_id").get<std::string>(), c.at("frames").get<int>(),
                            c.at("rmse_2d").get<double>(), c.at("rmse_3d").get<double>(),
                            c.at("pass").get<bool>()});
  }
  for (const auto& f : j.at("per_frame")) {
    FrameError e;
    e.frame_id = f.at("frame_id").get<int>();
    e.camera_id = f.at("camera_id").get<std::string>();
    e.e2d = f.at("e2d").get<double>();
    e.e3d = f.at("e3d").get<double>();
    e.p_aruco = io_detail::vec_from<2>(f.at("p_aruco"));
    e.p_mocap = io_detail::vec_from<2>(f.at("p_mocap"));
    r.per_frame.push_back(e);
  }
  return r;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::InvalidArgument, "cannot write " + path);
  os << j.dump(2) << '\n';
}

inline void save_result(const std::string& path, const CalibrationResult& r) {
  write_json_file(path, to_json(r));
}

inline void save_result(const std::string& path, const VerificationReport& r) {
  write_json_file(path, to_json(r));
}

template <class F>
auto parse_guarded(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

inline CalibrationResult load_calibration_result(const std::string& path) {
  const json j = read_json_file(path);
  return parse_guarded(path, [&] { return calibration_result_from_json(j); });
}

inline VerificationReport load_verification_report(const std::string& path) {
  const json j = read_json_file(path);
  return parse_guarded(path, [&] { return verification_report_from_json(j); });
}

}  // namespace mocap_calib

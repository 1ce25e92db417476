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

// Three-stage joint calibration of the board-to-marker transform X and the
// camera extrinsics Y_c:
//   1. random-restart alternating Procrustes on camera-frame PnP references,
//   2. LM on the 3-D point-matching objective,
//   3. LM on the pixel reprojection objective (optionally with intrinsics).
// Also provides the fixed-X baseline (least squares, then Huber IRLS).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mocap_calib/camera.hpp"
#include "mocap_calib/chain.hpp"
#include "mocap_calib/error.hpp"
#include "mocap_calib/geometry.hpp"
#include "mocap_calib/lm.hpp"
#include "mocap_calib/pnp.hpp"

namespace mocap_calib {

struct SolverOptions {
  int candidate_count = 30;
  int pool_size = 300;
  int procrustes_rounds = 5;
  int lm_max_iters = 100;
  double epsilon = 1e-4;
  bool optimize_intrinsics = false;
  std::uint64_t seed = 0;
  bool skip_stage1 = false;
  bool skip_stage2 = false;
  bool skip_stage3 = false;
  RigidTransform initial_x;  // X used when stage 1 is skipped
  double huber_delta = 1.345;  // px
  int huber_rounds = 10;

  void validate() const {
    if (!(epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
    if (candidate_count <= 0 || candidate_count > pool_size) {
      fail(ErrorCode::InvalidArgument, "need 0 < candidate_count <= pool_size");
    }
    if (procrustes_rounds < 1 || lm_max_iters < 1 || huber_rounds < 1) {
      fail(ErrorCode::InvalidArgument, "iteration counts must be positive");
    }
    if (!(huber_delta > 0.0)) fail(ErrorCode::InvalidArgument, "huber_delta must be positive");
  }

  bool operator==(const SolverOptions&) const = default;
};

struct StageDiagnostics {
  std::string stage;
  int iterations = 0;
  double start_objective = 0.0;
  double end_objective = 0.0;
  int selected_candidate = -1;  // stage 1 only
  bool converged = false;
  std::string note;

  bool operator==(const StageDiagnostics&) const = default;
};

struct CalibrationResult {
  std::string method;  // "joint" or "fixed_x"
  ChainEstimate estimate;
  double board_rmse = 0.0;  // px, over observations of calibrated cameras
  std::vector<StageDiagnostics> stages;
  bool converged = false;
  std::vector<std::string> uncalibrated_cameras;
  SolverOptions options;
  RegularizationConfig regularization;

  bool operator==(const CalibrationResult&) const = default;
};

namespace detail {

// Flattened view of a dataset restricted to the cameras being solved.
struct SolverData {
  struct Obs {
    int cam;
    int frame;
    Eigen::Vector3d p_local;
    PixelPoint pixel;
  };
  struct Ref {
    int cam;
    int frame;
    Eigen::Vector3d p_local;
    Eigen::Vector3d p_eye;
  };

  std::vector<std::string> camera_ids;
  std::vector<CameraModel> factory;
  std::vector<RigidTransform> marker_to_platform;  // per dataset frame index
  std::vector<Obs> obs;
  std::vector<Ref> refs;
  std::vector<std::vector<std::size_t>> refs_by_cam;
  // Reference moments per (camera, frame): src = board-local corner, dst = p_eye.
  struct RefGroup {
    int cam;
    int frame;
    PointMoments m;
  };
  std::vector<RefGroup> groups;
  std::vector<std::vector<std::size_t>> groups_by_cam;

  int camera_count() const { return static_cast<int>(camera_ids.size()); }
};

inline SolverData flatten(const CalibrationDataset& ds, const std::vector<std::string>& cameras,
                          const PnpReferences* refs) {
  SolverData d;
  d.camera_ids = cameras;
  std::map<std::string, int> cam_index;
  for (const auto& id : cameras) {
    cam_index[id] = static_cast<int>(d.factory.size());
    d.factory.push_back(ds.camera(id));
  }
  std::map<int, int> frame_index;
  for (const auto& f : ds.frames) {
    frame_index[f.frame_id] = static_cast<int>(d.marker_to_platform.size());
    d.marker_to_platform.push_back(f.marker_to_platform());
  }
  for (const auto& o : ds.observations) {
    const auto c = cam_index.find(o.camera_id);
    if (c == cam_index.end()) continue;
    d.obs.push_back({c->second, frame_index.at(o.frame_id), ds.board.corner(o.corner_id), o.pixel});
  }
  d.refs_by_cam.resize(cameras.size());
  if (refs != nullptr) {
    for (const auto& [key, p_eye] : refs->points) {
      const auto c = cam_index.find(key.camera_id);
      if (c == cam_index.end()) continue;
      d.refs_by_cam[static_cast<std::size_t>(c->second)].push_back(d.refs.size());
      d.refs.push_back(
          {c->second, frame_index.at(key.frame_id), ds.board.corner(key.corner_id), p_eye});
    }
  }
  d.groups_by_cam.resize(cameras.size());
  for (const auto& r : d.refs) {
    if (d.groups.empty() || d.groups.back().cam != r.cam || d.groups.back().frame != r.frame) {
      d.groups_by_cam[static_cast<std::size_t>(r.cam)].push_back(d.groups.size());
      d.groups.push_back({r.cam, r.frame, {}});
    }
    d.groups.back().m.add(r.p_local, r.p_eye);
  }
  return d;
}

struct ChainState {
  RigidTransform x;
  std::vector<RigidTransform> y;
  std::vector<IntrinsicsVector> intrinsics;
};

inline ChainState to_state(const ChainEstimate& est, const SolverData& d) {
  ChainState s;
  s.x = est.board_to_marker;
  for (const auto& id : d.camera_ids) {
    s.y.push_back(est.extrinsic(id));
    s.intrinsics.push_back(est.model(id).params());
  }
  return s;
}

inline void write_state(const ChainState& s, const SolverData& d, ChainEstimate& est) {
  est.board_to_marker = s.x;
  for (std::size_t c = 0; c < d.camera_ids.size(); ++c) {
    est.extrinsics[d.camera_ids[c]] = s.y[c];
    est.intrinsics[d.camera_ids[c]].set_params(s.intrinsics[c]);
  }
}

inline double e3d(const SolverData& d, const RigidTransform& x, const std::vector<RigidTransform>& y) {
  double sum = 0.0;
  for (const auto& r : d.refs) {
    const Eigen::Vector3d p =
        y[static_cast<std::size_t>(r.cam)] *
        (d.marker_to_platform[static_cast<std::size_t>(r.frame)] * (x * r.p_local));
    sum += (p - r.p_eye).squaredNorm();
  }
  return sum;
}

// Y_c in closed form from the references of camera c given X. Sources are
// s = G p + b per frame, so their moments follow from the per-frame moments.
inline RigidTransform solve_extrinsic(const SolverData& d, int cam, const RigidTransform& x) {
  PointMoments acc;
  for (const std::size_t gi : d.groups_by_cam[static_cast<std::size_t>(cam)]) {
    const auto& g = d.groups[gi];
    const RigidTransform t = d.marker_to_platform[static_cast<std::size_t>(g.frame)] * x;
    const Eigen::Matrix3d& rg = t.rotation;
    const Eigen::Vector3d& b = t.translation;
    const Eigen::Vector3d gp = rg * g.m.sum_src;
    acc.count += g.m.count;
    acc.sum_src += gp + g.m.count * b;
    acc.sum_dst += g.m.sum_dst;
    acc.src_src += rg * g.m.src_src * rg.transpose() + gp * b.transpose() + b * gp.transpose() +
                   g.m.count * b * b.transpose();
    acc.src_dst += rg * g.m.src_dst + b * g.m.sum_dst.transpose();
  }
  return procrustes_from_moments(acc);
}

// X in closed form from the references of all cameras given every Y_c.
// Destinations are d = W^-1 p_eye with W = Y_c * M_t.
inline RigidTransform solve_board_to_marker(const SolverData& d,
                                            const std::vector<RigidTransform>& y) {
  PointMoments acc;
  for (const auto& g : d.groups) {
    const RigidTransform w =
        y[static_cast<std::size_t>(g.cam)] * d.marker_to_platform[static_cast<std::size_t>(g.frame)];
    const Eigen::Matrix3d& rw = w.rotation;
    const Eigen::Vector3d& tw = w.translation;
    acc.count += g.m.count;
    acc.sum_src += g.m.sum_src;
    acc.sum_dst += rw.transpose() * (g.m.sum_dst - g.m.count * tw);
    acc.src_src += g.m.src_src;
    acc.src_dst += (g.m.src_dst - g.m.sum_src * tw.transpose()) * rw;
  }
  return procrustes_from_moments(acc);
}

// Least squares on E3D over all Y_c and X. Layout [Y_0 .. Y_{n-1}, X].
struct PointMatchingProblem {
  using State = ChainState;
  const SolverData* data = nullptr;

  int dimension() const { return 6 * data->camera_count() + 6; }

  double cost(const State& s) const { return e3d(*data, s.x, s.y); }

  double linearize(const State& s, Eigen::MatrixXd& jtj, Eigen::VectorXd& jtr) const {
    const int n = dimension();
    const int xo = n - 6;
    jtj.setZero(n, n);
    jtr.setZero(n);
    double sum = 0.0;
    for (const auto& r : data->refs) {
      const RigidTransform& y = s.y[static_cast<std::size_t>(r.cam)];
      const RigidTransform& m = data->marker_to_platform[static_cast<std::size_t>(r.frame)];
      const Eigen::Vector3d p_rb = s.x * r.p_local;
      const Eigen::Vector3d p_cam = y * (m * p_rb);
      const Eigen::Vector3d e = p_cam - r.p_eye;
      Eigen::Matrix<double, 3, 12> j;
      j.leftCols<3>() = -hat(p_cam);
      j.block<3, 3>(0, 3).setIdentity();
      const Eigen::Matrix3d rc = y.rotation * m.rotation;
      j.block<3, 3>(0, 6) = -rc * hat(p_rb);
      j.block<3, 3>(0, 9) = rc;
      const Eigen::Matrix<double, 12, 12> h = j.transpose() * j;
      const Eigen::Matrix<double, 12, 1> g = j.transpose() * e;
      const int yo = 6 * r.cam;
      jtj.block<6, 6>(yo, yo) += h.topLeftCorner<6, 6>();
      jtj.block<6, 6>(yo, xo) += h.topRightCorner<6, 6>();
      jtj.block<6, 6>(xo, yo) += h.bottomLeftCorner<6, 6>();
      jtj.block<6, 6>(xo, xo) += h.bottomRightCorner<6, 6>();
      jtr.segment<6>(yo) += g.head<6>();
      jtr.segment<6>(xo) += g.tail<6>();
      sum += e.squaredNorm();
    }
    return sum;
  }

  State retract(const State& s, const Eigen::VectorXd& delta) const {
    State out = s;
    for (int c = 0; c < data->camera_count(); ++c) {
      out.y[static_cast<std::size_t>(c)] =
          retract_left(s.y[static_cast<std::size_t>(c)], delta.segment<6>(6 * c));
    }
    out.x = retract_left(s.x, delta.tail<6>());
    return out;
  }
};

// Weighted pixel reprojection least squares plus intrinsic regularization.
// Layout [Y_0 .. Y_{n-1}, X (if free), theta_0 .. theta_{n-1} (if free)].
struct ReprojectionProblem {
  using State = ChainState;
  const SolverData* data = nullptr;
  bool free_x = true;
  bool free_intrinsics = false;
  RegularizationConfig reg;
  std::vector<IntrinsicsVector> priors;
  const std::vector<double>* weights = nullptr;  // per observation, 1 when null

  int x_offset() const { return 6 * data->camera_count(); }
  int intrinsics_offset() const { return x_offset() + (free_x ? 6 : 0); }
  int dimension() const {
    return intrinsics_offset() + (free_intrinsics ? 12 * data->camera_count() : 0);
  }

  double weight(std::size_t i) const { return weights == nullptr ? 1.0 : (*weights)[i]; }

  // Adds one observation's normal-equation contribution. Local columns are
  // [Y twist (6), X twist (6), intrinsics (12)]; negative offsets are fixed blocks.
  template <int Local>
  static void accumulate(const ChainJacobian& jac, const Eigen::Vector2d& r, double w,
                         const int (&offsets)[3], Eigen::MatrixXd& jtj, Eigen::VectorXd& jtr) {
    const Eigen::Matrix<double, 2, Local> j = jac.template leftCols<Local>();
    const Eigen::Matrix<double, Local, Local> h = w * (j.transpose() * j);
    const Eigen::Matrix<double, Local, 1> g = w * (j.transpose() * r);
    constexpr int kSizes[3] = {6, 6, 12};
    constexpr int kStarts[3] = {0, 6, 12};
    constexpr int kBlocks = Local == 24 ? 3 : 2;
    for (int a = 0; a < kBlocks; ++a) {
      if (offsets[a] < 0) continue;
      jtr.segment(offsets[a], kSizes[a]) += g.segment(kStarts[a], kSizes[a]);
      for (int b = 0; b < kBlocks; ++b) {
        if (offsets[b] < 0) continue;
        jtj.block(offsets[a], offsets[b], kSizes[a], kSizes[b]) +=
            h.block(kStarts[a], kStarts[b], kSizes[a], kSizes[b]);
      }
    }
  }

  CameraModel model_for(const State& s, int cam) const {
    CameraModel m = data->factory[static_cast<std::size_t>(cam)];
    m.set_params(s.intrinsics[static_cast<std::size_t>(cam)]);
    return m;
  }

  double regularization(const State& s) const {
    if (reg.lambda == 0.0) return 0.0;
    const IntrinsicsVector w = reg.weights();
    double sum = 0.0;
    for (int c = 0; c < data->camera_count(); ++c) {
      const IntrinsicsVector diff =
          s.intrinsics[static_cast<std::size_t>(c)] - priors[static_cast<std::size_t>(c)];
      sum += reg.lambda * (w.array() * diff.array().square()).sum();
    }
    return sum;
  }

  double cost(const State& s) const {
    std::vector<CameraModel> models;
    for (int c = 0; c < data->camera_count(); ++c) models.push_back(model_for(s, c));
    double sum = 0.0;
    for (std::size_t i = 0; i < data->obs.size(); ++i) {
      const auto& o = data->obs[i];
      const PixelPoint px = chain_predict(
          s.y[static_cast<std::size_t>(o.cam)],
          data->marker_to_platform[static_cast<std::size_t>(o.frame)], s.x, o.p_local,
          models[static_cast<std::size_t>(o.cam)], false, nullptr);
      sum += weight(i) * (px - o.pixel).squaredNorm();
    }
    return sum + regularization(s);
  }

  double linearize(const State& s, Eigen::MatrixXd& jtj, Eigen::VectorXd& jtr) const {
    const int n = dimension();
    const int xo = x_offset();
    const int io = intrinsics_offset();
    jtj.setZero(n, n);
    jtr.setZero(n);
    std::vector<CameraModel> models;
    for (int c = 0; c < data->camera_count(); ++c) models.push_back(model_for(s, c));

    // Only the Y_c, X and theta_c blocks of one observation are non-zero.
    double sum = 0.0;
    for (std::size_t i = 0; i < data->obs.size(); ++i) {
      const auto& o = data->obs[i];
      ChainJacobian jac;
      const PixelPoint px = chain_predict(
          s.y[static_cast<std::size_t>(o.cam)],
          data->marker_to_platform[static_cast<std::size_t>(o.frame)], s.x, o.p_local,
          models[static_cast<std::size_t>(o.cam)], false, &jac);
      const Eigen::Vector2d r = px - o.pixel;
      const double w = weight(i);
      sum += w * r.squaredNorm();
      const int offsets[3] = {6 * o.cam, free_x ? xo : -1, free_intrinsics ? io + 12 * o.cam : -1};
      if (free_intrinsics) {
        accumulate<24>(jac, r, w, offsets, jtj, jtr);
      } else {
        accumulate<12>(jac, r, w, offsets, jtj, jtr);
      }
    }
    if (free_intrinsics && reg.lambda != 0.0) {
      const IntrinsicsVector w = reg.weights();
      for (int c = 0; c < data->camera_count(); ++c) {
        const IntrinsicsVector diff =
            s.intrinsics[static_cast<std::size_t>(c)] - priors[static_cast<std::size_t>(c)];
        for (int k = 0; k < 12; ++k) {
          jtj(io + 12 * c + k, io + 12 * c + k) += reg.lambda * w(k);
          jtr(io + 12 * c + k) += reg.lambda * w(k) * diff(k);
        }
      }
    }
    return sum + regularization(s);
  }

  State retract(const State& s, const Eigen::VectorXd& delta) const {
    State out = s;
    for (int c = 0; c < data->camera_count(); ++c) {
      out.y[static_cast<std::size_t>(c)] =
          retract_left(s.y[static_cast<std::size_t>(c)], delta.segment<6>(6 * c));
    }
    if (free_x) out.x = retract_left(s.x, delta.segment<6>(x_offset()));
    if (free_intrinsics) {
      for (int c = 0; c < data->camera_count(); ++c) {
        out.intrinsics[static_cast<std::size_t>(c)] +=
            delta.segment<12>(intrinsics_offset() + 12 * c);
      }
    }
    return out;
  }
};

inline std::vector<std::string> cameras_with_references(const CalibrationDataset& ds,
                                                        const PnpReferences& refs) {
  std::vector<std::string> out;
  for (const auto& c : ds.cameras) {
    if (std::find(refs.cameras_without_references.begin(), refs.cameras_without_references.end(),
                  c.camera_id) == refs.cameras_without_references.end()) {
      out.push_back(c.camera_id);
    }
  }
  return out;
}

inline double pooled_rmse(const SolverData& d, const ChainState& s) {
  if (d.obs.empty()) fail(ErrorCode::EmptyDataset, "no observations for calibrated cameras");
  ReprojectionProblem p;
  p.data = &d;
  p.reg.lambda = 0.0;
  return std::sqrt(p.cost(s) / static_cast<double>(d.obs.size()));
}

inline LmOptions stage_lm_options(const SolverOptions& opts, double improvement_floor) {
  LmOptions lm;
  lm.max_iterations = opts.lm_max_iters;
  lm.epsilon = opts.epsilon;
  lm.improvement_floor = improvement_floor;
  return lm;
}

// E3D is in m^2, so stage 2 uses an essentially relative improvement test.
inline constexpr double kStage2ImprovementFloor = 1e-12;

}  // namespace detail

/// Throws SingularNormalEquations unless at least three observed frames have
/// pairwise distinct board orientations (>= 5 deg apart).
inline void check_orientation_diversity(const CalibrationDataset& dataset,
                                        double min_angle = 5.0 * std::numbers::pi / 180.0) {
  std::set<int> observed;
  for (const auto& o : dataset.observations) observed.insert(o.frame_id);
  std::vector<Eigen::Matrix3d> distinct;
  for (const auto& f : dataset.frames) {
    if (observed.count(f.frame_id) == 0) continue;
    const Eigen::Matrix3d r = f.marker_to_platform().rotation;
    const bool is_new = std::all_of(distinct.begin(), distinct.end(), [&](const auto& q) {
      return rotation_angle_between(q, r) >= min_angle;
    });
    if (is_new) distinct.push_back(r);
    if (distinct.size() >= 3) return;
  }
  fail(ErrorCode::SingularNormalEquations,
       "rank deficiency: need >= 3 observed frames with distinct board orientations (found " +
           std::to_string(distinct.size()) + ")");
}

/// Stage 1 over an explicit candidate set for the rotation of X. Returns the
/// estimate with the lowest E3D after alternation, and the winning index.
inline std::pair<ChainEstimate, int> stage1_procrustes(const CalibrationDataset& dataset,
                                                       const PnpReferences& refs,
                                                       const SolverOptions& opts,
                                                       const RotationCandidateSet& candidates) {
  if (refs.points.empty()) fail(ErrorCode::EmptyReferences, "stage 1 needs references");
  const auto cams = detail::cameras_with_references(dataset, refs);
  const detail::SolverData d = detail::flatten(dataset, cams, &refs);

  double best_cost = std::numeric_limits<double>::infinity();
  int best_index = -1;
  RigidTransform best_x;
  std::vector<RigidTransform> best_y;
  for (std::size_t k = 0; k < candidates.rotations.size(); ++k) {
    RigidTransform x{candidates.rotations[k], Eigen::Vector3d::Zero()};
    std::vector<RigidTransform> y(cams.size());
    for (int round = 0; round < opts.procrustes_rounds; ++round) {
      for (int c = 0; c < d.camera_count(); ++c) {
        y[static_cast<std::size_t>(c)] = detail::solve_extrinsic(d, c, x);
      }
      // X last, so it does not absorb the global rigid motion.
      x = detail::solve_board_to_marker(d, y);
    }
    const double cost = detail::e3d(d, x, y);
    if (cost < best_cost) {
      best_cost = cost;
      best_index = static_cast<int>(k);
      best_x = x;
      best_y = y;
    }
  }

  ChainEstimate est = initial_estimate(dataset);
  est.board_to_marker = best_x;
  for (std::size_t c = 0; c < cams.size(); ++c) est.extrinsics[cams[c]] = best_y[c];
  return {est, best_index};
}

inline std::pair<ChainEstimate, int> stage1_procrustes(const CalibrationDataset& dataset,
                                                       const PnpReferences& refs,
                                                       const SolverOptions& opts) {
  return stage1_procrustes(
      dataset, refs, opts,
      sample_candidate_rotations(opts.candidate_count, opts.pool_size, opts.seed));
}

/// Closed-form Y_c for every referenced camera given a fixed X.
inline ChainEstimate initialize_extrinsics(const CalibrationDataset& dataset,
                                           const PnpReferences& refs, const RigidTransform& x) {
  const auto cams = detail::cameras_with_references(dataset, refs);
  const detail::SolverData d = detail::flatten(dataset, cams, &refs);
  ChainEstimate est = initial_estimate(dataset);
  est.board_to_marker = x;
  for (int c = 0; c < d.camera_count(); ++c) {
    est.extrinsics[cams[static_cast<std::size_t>(c)]] = detail::solve_extrinsic(d, c, x);
  }
  return est;
}

/// LM on E3D over all Y_c and X with intrinsics held fixed.
inline ChainEstimate stage2_refine_3d(const ChainEstimate& estimate,
                                      const CalibrationDataset& dataset, const PnpReferences& refs,
                                      const SolverOptions& opts, StageDiagnostics* diag = nullptr) {
  const auto cams = detail::cameras_with_references(dataset, refs);
  const detail::SolverData d = detail::flatten(dataset, cams, &refs);
  detail::PointMatchingProblem problem;
  problem.data = &d;
  auto [state, lm] = lm_minimize(problem, detail::to_state(estimate, d),
                                 detail::stage_lm_options(opts, detail::kStage2ImprovementFloor));
  ChainEstimate out = estimate;
  detail::write_state(state, d, out);
  if (diag != nullptr) {
    diag->stage = "stage2_3d";
    diag->iterations = lm.iterations;
    diag->start_objective = lm.initial_objective;
    diag->end_objective = lm.final_objective;
    diag->converged = lm.converged;
    diag->note = lm.accepted_steps == 0 ? "NoDecrease" : lm.termination;
  }
  return out;
}

/// LM on the full 2-D objective. Intrinsics are refined when
/// opts.optimize_intrinsics is set.
inline CalibrationResult stage3_refine_2d(const ChainEstimate& estimate,
                                          const CalibrationDataset& dataset,
                                          const SolverOptions& opts,
                                          const RegularizationConfig& reg,
                                          const std::vector<std::string>& cameras) {
  const detail::SolverData d = detail::flatten(dataset, cameras, nullptr);
  detail::ReprojectionProblem problem;
  problem.data = &d;
  problem.free_intrinsics = opts.optimize_intrinsics;
  problem.reg = reg;
  for (const auto& f : d.factory) problem.priors.push_back(reg.prior(f));

  const detail::ChainState start = detail::to_state(estimate, d);
  auto [state, lm] = lm_minimize(problem, start, detail::stage_lm_options(opts, 1.0));
  if (lm.final_objective > 10.0 * lm.initial_objective) {
    fail(ErrorCode::Divergence, "stage 3 objective grew above 10x its initial value");
  }

  CalibrationResult result;
  result.method = "joint";
  result.estimate = estimate;
  detail::write_state(state, d, result.estimate);
  result.board_rmse = detail::pooled_rmse(d, state);
  result.converged = lm.converged;
  result.options = opts;
  result.regularization = reg;
  StageDiagnostics sd;
  sd.stage = "stage3_2d";
  sd.iterations = lm.iterations;
  sd.start_objective = lm.initial_objective;
  sd.end_objective = lm.final_objective;
  sd.converged = lm.converged;
  sd.note = lm.termination;
  result.stages.push_back(sd);
  return result;
}

inline CalibrationResult stage3_refine_2d(const ChainEstimate& estimate,
                                          const CalibrationDataset& dataset,
                                          const SolverOptions& opts,
                                          const RegularizationConfig& reg) {
  std::vector<std::string> cams;
  for (const auto& c : dataset.cameras) cams.push_back(c.camera_id);
  return stage3_refine_2d(estimate, dataset, opts, reg, cams);
}

/// Full pipeline: references, stage 1, stage 2, stage 3. Stages can be
/// skipped individually through the options.
inline CalibrationResult calibrate(const CalibrationDataset& dataset, const SolverOptions& opts,
                                   const RegularizationConfig& reg = {}) {
  opts.validate();
  dataset.validate();
  check_orientation_diversity(dataset);

  const PnpReferences refs = build_references(dataset);
  const auto cams = detail::cameras_with_references(dataset, refs);
  std::vector<StageDiagnostics> stages;

  ChainEstimate est;
  if (!opts.skip_stage1) {
    const auto candidates =
        sample_candidate_rotations(opts.candidate_count, opts.pool_size, opts.seed);
    const detail::SolverData d = detail::flatten(dataset, cams, &refs);
    StageDiagnostics sd;
    sd.stage = "stage1_procrustes";
    sd.iterations = opts.procrustes_rounds * static_cast<int>(candidates.rotations.size());
    const ChainEstimate start = initialize_extrinsics(dataset, refs, opts.initial_x);
    sd.start_objective = detail::e3d(d, start.board_to_marker, detail::to_state(start, d).y);
    auto [e, idx] = stage1_procrustes(dataset, refs, opts, candidates);
    est = std::move(e);
    sd.selected_candidate = idx;
    sd.end_objective = detail::e3d(d, est.board_to_marker, detail::to_state(est, d).y);
    sd.converged = true;
    stages.push_back(sd);
  } else {
    est = initialize_extrinsics(dataset, refs, opts.initial_x);
  }

  if (!opts.skip_stage2) {
    StageDiagnostics sd;
    est = stage2_refine_3d(est, dataset, refs, opts, &sd);
    stages.push_back(sd);
  }

  CalibrationResult result;
  if (!opts.skip_stage3) {
    result = stage3_refine_2d(est, dataset, opts, reg, cams);
    stages.push_back(result.stages.front());
    result.converged = result.stages.front().converged;
  } else {
    const detail::SolverData d = detail::flatten(dataset, cams, nullptr);
    result.method = "joint";
    result.estimate = est;
    result.board_rmse = detail::pooled_rmse(d, detail::to_state(est, d));
    result.options = opts;
    result.regularization = reg;
    result.converged = stages.empty() || stages.back().converged;
  }
  result.stages = std::move(stages);
  result.uncalibrated_cameras = refs.cameras_without_references;
  return result;
}

inline double huber_weight(double residual_norm, double delta) {
  return residual_norm <= delta ? 1.0 : delta / residual_norm;
}

/// Baseline with a known X: Y_c only, plain least squares for basin capture
/// followed by Huber-weighted IRLS on the per-corner pixel residual norm.
inline CalibrationResult calibrate_fixed_x(const CalibrationDataset& dataset,
                                           const RigidTransform& known_x,
                                           const SolverOptions& opts) {
  opts.validate();
  dataset.validate();
  const PnpReferences refs = build_references(dataset);
  const auto cams = detail::cameras_with_references(dataset, refs);
  const ChainEstimate init = initialize_extrinsics(dataset, refs, known_x);

  const detail::SolverData d = detail::flatten(dataset, cams, nullptr);
  detail::ReprojectionProblem problem;
  problem.data = &d;
  problem.free_x = false;
  problem.free_intrinsics = false;
  problem.reg.lambda = 0.0;

  CalibrationResult result;
  result.method = "fixed_x";
  result.options = opts;
  result.regularization.lambda = 0.0;
  const auto lm_opts = detail::stage_lm_options(opts, 1.0);

  auto [state, lm] = lm_minimize(problem, detail::to_state(init, d), lm_opts);
  StageDiagnostics ls;
  ls.stage = "baseline_least_squares";
  ls.iterations = lm.iterations;
  ls.start_objective = lm.initial_objective;
  ls.end_objective = lm.final_objective;
  ls.converged = lm.converged;
  ls.note = lm.termination;
  result.stages.push_back(ls);

  StageDiagnostics hub;
  hub.stage = "baseline_huber_irls";
  std::vector<double> weights(d.obs.size(), 1.0);
  problem.weights = &weights;
  bool converged = lm.converged;
  double prev = std::numeric_limits<double>::infinity();
  for (int round = 0; round < opts.huber_rounds; ++round) {
    detail::ReprojectionProblem plain = problem;
    plain.weights = nullptr;
    double huber_cost = 0.0;
    for (std::size_t i = 0; i < d.obs.size(); ++i) {
      const auto& o = d.obs[i];
      const double r = (detail::chain_predict(
                            state.y[static_cast<std::size_t>(o.cam)],
                            d.marker_to_platform[static_cast<std::size_t>(o.frame)], state.x,
                            o.p_local, d.factory[static_cast<std::size_t>(o.cam)], false, nullptr) -
                        o.pixel)
                           .norm();
      weights[i] = huber_weight(r, opts.huber_delta);
      huber_cost += r <= opts.huber_delta ? 0.5 * r * r
                                         : opts.huber_delta * (r - 0.5 * opts.huber_delta);
    }
    if (round == 0) hub.start_objective = huber_cost;
    hub.end_objective = huber_cost;
    if (std::abs(prev - huber_cost) < opts.epsilon * (1.0 + huber_cost)) {
      hub.converged = true;
      break;
    }
    prev = huber_cost;
    auto [next, wlm] = lm_minimize(problem, state, lm_opts);
    state = std::move(next);
    hub.iterations += wlm.iterations;
    converged = wlm.converged;
  }
  hub.note = hub.converged ? "weights_stable" : "max_rounds";
  result.stages.push_back(hub);

  result.estimate = init;
  detail::write_state(state, d, result.estimate);
  result.board_rmse = detail::pooled_rmse(d, state);
  result.converged = converged;
  result.uncalibrated_cameras = refs.cameras_without_references;
  return result;
}

}  // namespace mocap_calib

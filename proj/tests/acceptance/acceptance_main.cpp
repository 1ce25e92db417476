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
// Acceptance suite. Prints one PASS/FAIL line per criterion (detail lines are
// indented). `--criterion N` runs a single criterion; exit status is 0 only
// when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mocap_calib/io.hpp"
#include "mocap_calib/solver.hpp"
#include "mocap_calib/synth.hpp"
#include "mocap_calib/verify.hpp"
#include "test_support.hpp"

namespace {

using namespace mocap_calib;

// Tolerances.
constexpr double kAc1RotTol = 1e-4 * 1e-3;  // rad (1e-4 mrad)
constexpr double kAc1TransTol = 1e-6;       // m
constexpr double kAc1RmseTol = 1e-6;        // px
constexpr int kAc1Seeds = 100;
constexpr int kAc1MinPass = 95;
constexpr double kAc1MaxSeconds = 60.0;

constexpr double kAc2Sigma = 0.2;
constexpr double kAc2Low = 0.15;
constexpr double kAc2High = 0.25;
constexpr int kAc2Seeds = 20;

constexpr int kAc3Seeds = 50;
constexpr int kAc3AdversarialSeeds = 20;
constexpr double kAc3StageOneRatio = 100.0;
constexpr double kAc3AdversarialFactor = 10.0;
constexpr double kAc3AdversarialFraction = 0.5;
constexpr double kAc3FullFactor = 2.0;
constexpr double kAc3FullFraction = 0.99;

constexpr int kAc4Seeds = 50;

constexpr int kAc5Seeds = 20;
constexpr double kAc5Rotation = 2.0 * kDeg;
constexpr double kAc5Translation = 5e-3;

constexpr double kAc6ClosureTol = 1e-6;  // px
constexpr double kAc6Delta = 2e-3;       // rad
constexpr double kAc6RelTol = 0.2;

constexpr int kAc7Seeds = 10;
constexpr int kAc7Steps = 5;

constexpr int kAc8Seeds = 5;
constexpr double kAc8RatioMin = 2.0;

constexpr int kAc9Configs = 1000;
constexpr double kAc9JacobianTol = 1e-5;
constexpr double kAc9ProcrustesTol = 1e-10;
constexpr double kAc9RoundTripTol = 1e-6;  // px

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void detail(const std::string& s) { std::printf("    %s\n", s.c_str()); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double rot_err(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle_between(a.rotation, b.rotation);
}

double trans_err(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation - b.translation).norm();
}

// Worst rotation / translation error over X and every Y_c.
std::pair<double, double> chain_error(const ChainEstimate& est, const ChainEstimate& truth) {
  double r = rot_err(est.board_to_marker, truth.board_to_marker);
  double t = trans_err(est.board_to_marker, truth.board_to_marker);
  for (const auto& [id, y] : truth.extrinsics) {
    r = std::max(r, rot_err(est.extrinsic(id), y));
    t = std::max(t, trans_err(est.extrinsic(id), y));
  }
  return {r, t};
}

SyntheticScene scene_for(std::uint64_t seed, double sigma, int lollypop_frames = 0) {
  SceneSpec spec = default_scene_spec(seed, 4, 200, sigma);
  spec.lollypop.frame_count = lollypop_frames;
  return generate_scene(spec);
}

// 1. Exact recovery on noise-free scenes.
Outcome criterion1() {
  int passed = 0;
  double worst_time = 0.0;
  double worst_rot = 0.0;
  double worst_trans = 0.0;
  double worst_rmse = 0.0;
  for (int seed = 1; seed <= kAc1Seeds; ++seed) {
    const SyntheticScene s = scene_for(seed, 0.0);
    const auto t0 = std::chrono::steady_clock::now();
    const CalibrationResult r = calibrate(s.dataset, SolverOptions{});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto [re, te] = chain_error(r.estimate, s.ground_truth);
    worst_time = std::max(worst_time, secs);
    worst_rot = std::max(worst_rot, re);
    worst_trans = std::max(worst_trans, te);
    worst_rmse = std::max(worst_rmse, r.board_rmse);
    const bool ok = re < kAc1RotTol && te < kAc1TransTol && r.board_rmse < kAc1RmseTol;
    if (ok) {
      ++passed;
    } else {
      detail(fmt("seed %d: rot %.3e mrad, trans %.3e m, rmse %.3e px", seed, re * 1e3, te, r.board_rmse));
    }
  }
  detail(fmt("worst: rot %.3e mrad, trans %.3e m, rmse %.3e px, %.2f s per scene", worst_rot * 1e3,
             worst_trans, worst_rmse, worst_time));
  return {passed >= kAc1MinPass && worst_time < kAc1MaxSeconds,
          fmt("exact recovery in %d/%d noise-free scenes (need %d), slowest scene %.2f s (limit %.0f s)",
              passed, kAc1Seeds, kAc1MinPass, worst_time, kAc1MaxSeconds)};
}

// 2. Converged board RMSE at sigma = 0.2 px.
Outcome criterion2() {
  std::vector<double> rmse;
  std::vector<double> at_truth;
  for (int seed = 1; seed <= kAc2Seeds; ++seed) {
    const SyntheticScene s = scene_for(seed, kAc2Sigma);
    rmse.push_back(calibrate(s.dataset, SolverOptions{}).board_rmse);
    at_truth.push_back(board_rmse(s.ground_truth, s.dataset));
  }
  const double med = median(rmse);
  detail(fmt("median board RMSE at the ground truth %.4f px; sigma*sqrt(2) = %.4f px", median(at_truth),
             kAc2Sigma * std::sqrt(2.0)));
  detail(fmt("range over seeds [%.4f, %.4f] px", *std::min_element(rmse.begin(), rmse.end()),
             *std::max_element(rmse.begin(), rmse.end())));
  return {med >= kAc2Low && med <= kAc2High,
          fmt("median converged board RMSE %.4f px over %d seeds at sigma %.1f px (need [%.2f, %.2f])", med,
              kAc2Seeds, kAc2Sigma, kAc2Low, kAc2High)};
}

// 3. Ablation structure.
Outcome criterion3() {
  int full_ok = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  std::vector<double> ratios;
  std::vector<double> clean_ratios;
  for (int seed = 1; seed <= kAc3Seeds; ++seed) {
    const SyntheticScene s = scene_for(seed, kAc2Sigma);
    const double floor = board_rmse(s.ground_truth, s.dataset);
    const CalibrationResult full = calibrate(s.dataset, SolverOptions{});
    SolverOptions only1;
    only1.skip_stage2 = true;
    only1.skip_stage3 = true;
    const CalibrationResult s1 = calibrate(s.dataset, only1);
    const double ratio = s1.board_rmse / full.board_rmse;
    ratios.push_back(ratio);
    min_ratio = std::min(min_ratio, ratio);
    if (full.board_rmse <= kAc3FullFactor * floor) ++full_ok;
    if (seed <= 5) {
      const SyntheticScene c = scene_for(seed, 0.0);
      clean_ratios.push_back(calibrate(c.dataset, only1).board_rmse / calibrate(c.dataset, SolverOptions{}).board_rmse);
    }
  }
  detail(fmt("stage-1-only / full RMSE on sigma %.1f scenes: min %.1f, median %.1f", kAc2Sigma, min_ratio,
             median(ratios)));
  detail(fmt("same ratio on noise-free scenes (5 seeds): min %.3g", *std::min_element(clean_ratios.begin(), clean_ratios.end())));

  int trapped = 0;
  std::vector<double> adv_factor;
  std::mt19937_64 rng(1234);
  for (int seed = 1; seed <= kAc3AdversarialSeeds; ++seed) {
    const SyntheticScene s = scene_for(seed, kAc2Sigma);
    const double floor = board_rmse(s.ground_truth, s.dataset);
    SolverOptions adv;
    adv.skip_stage1 = true;
    const Eigen::Vector3d axis = random_unit_vector(rng);
    adv.initial_x = RigidTransform{so3_exp(std::numbers::pi * axis), Eigen::Vector3d::Zero()} *
                    s.ground_truth.board_to_marker;
    double f;
    try {
      f = calibrate(s.dataset, adv).board_rmse / floor;
    } catch (const Error& e) {
      f = std::numeric_limits<double>::infinity();
      detail(fmt("seed %d: adversarial start failed: %s", seed, e.what()));
    }
    adv_factor.push_back(f);
    if (f >= kAc3AdversarialFactor) ++trapped;
  }
  detail(fmt("180 deg start without stage 1: final RMSE / noise floor median %.2f, max %.2f", median(adv_factor),
             *std::max_element(adv_factor.begin(), adv_factor.end())));

  const bool c1 = min_ratio >= kAc3StageOneRatio;
  const bool c2 = trapped >= kAc3AdversarialFraction * kAc3AdversarialSeeds;
  const bool c3 = full_ok >= kAc3FullFraction * kAc3Seeds;
  detail(fmt("stage-1 ratio clause %s, adversarial clause %s, full-pipeline clause %s", c1 ? "met" : "not met",
             c2 ? "met" : "not met", c3 ? "met" : "not met"));
  return {c1 && c2 && c3,
          fmt("stage-1-only ratio min %.1f (need >= %.0f); adversarial trapped %d/%d (need >= %.0f%%); "
              "full <= %.0fx floor %d/%d (need >= %.0f%%)",
              min_ratio, kAc3StageOneRatio, trapped, kAc3AdversarialSeeds, 100 * kAc3AdversarialFraction,
              kAc3FullFactor, full_ok, kAc3Seeds, 100 * kAc3FullFraction)};
}

int stage2_iterations(const CalibrationResult& r) {
  for (const auto& s : r.stages) {
    if (s.stage == "stage2_3d") return s.iterations;
  }
  return -1;
}

// 4. Stage-2 iterations with and without Procrustes initialization.
Outcome criterion4() {
  std::vector<double> with;
  std::vector<double> without;
  for (int seed = 1; seed <= kAc4Seeds; ++seed) {
    const SyntheticScene s = scene_for(seed, kAc2Sigma);
    SolverOptions opts;
    opts.skip_stage3 = true;
    with.push_back(stage2_iterations(calibrate(s.dataset, opts)));
    opts.skip_stage1 = true;
    without.push_back(stage2_iterations(calibrate(s.dataset, opts)));
  }
  const double a = mean(with);
  const double b = mean(without);
  return {a < b, fmt("mean stage-2 iterations %.2f with stage 1 vs %.2f from identity X over %d seeds", a, b,
                     kAc4Seeds)};
}

// 5. Baseline with a wrong X against joint calibration, scored by Lollypop.
Outcome criterion5() {
  int ordered = 0;
  std::vector<double> ours;
  std::vector<double> base;
  for (int seed = 1; seed <= kAc5Seeds; ++seed) {
    const SyntheticScene s = scene_for(seed, kAc2Sigma, 200);
    const RigidTransform wrong = perturb_estimate(s.ground_truth, kAc5Rotation, kAc5Translation,
                                                  PerturbSelector{true, false, {}}, 1000 + seed)
                                     .board_to_marker;
    const double e_ours = verify(s.lollypop_recording, calibrate(s.dataset, SolverOptions{}).estimate).rmse_2d;
    const double e_base =
        verify(s.lollypop_recording, calibrate_fixed_x(s.dataset, wrong, SolverOptions{}).estimate).rmse_2d;
    ours.push_back(e_ours);
    base.push_back(e_base);
    if (e_base > e_ours) {
      ++ordered;
    } else {
      detail(fmt("seed %d: baseline %.3f px <= joint %.3f px", seed, e_base, e_ours));
    }
  }
  return {ordered == kAc5Seeds,
          fmt("baseline > joint Lollypop RMSE in %d/%d seeds (median %.2f vs %.2f px)", ordered, kAc5Seeds,
              median(base), median(ours))};
}

// 6. Verification closure and first-order rotation response.
Outcome criterion6() {
  SceneSpec spec = default_scene_spec(6, 4, 0, 0.0);
  spec.lollypop.frame_count = 200;
  const ChainEstimate truth = ground_truth_estimate(spec);
  const auto full = generate_lollypop(spec, truth);
  const double closure = verify(full, truth).rmse_2d;

  spec.lollypop.max_normalized_radius = 0.05;
  const auto central = generate_lollypop(spec, truth);
  double worst_rel = 0.0;
  ChainEstimate off = truth;
  // Rotation about each camera's x axis, perpendicular to its optical axis.
  for (auto& [id, y] : off.extrinsics) {
    y = RigidTransform{so3_exp(Eigen::Vector3d(kAc6Delta, 0.0, 0.0)), Eigen::Vector3d::Zero()} * y;
  }
  const VerificationReport rep = verify(central, off);
  for (const auto& c : rep.per_camera) {
    const double predicted = truth.model(c.camera_id).fy * kAc6Delta;
    const double rel = std::abs(c.rmse_2d - predicted) / predicted;
    worst_rel = std::max(worst_rel, rel);
    detail(fmt("%s: rmse_2d %.4f px, f*delta %.4f px", c.camera_id.c_str(), c.rmse_2d, predicted));
  }
  return {closure < kAc6ClosureTol && worst_rel <= kAc6RelTol,
          fmt("closure rmse_2d %.3e px (need < %.0e); 2 mrad response within %.1f%% of f*delta (need <= %.0f%%)",
              closure, kAc6ClosureTol, 100 * worst_rel, 100 * kAc6RelTol)};
}

// 7. Drift over a growing perturbation schedule.
Outcome criterion7() {
  int ok = 0;
  for (int seed = 1; seed <= kAc7Seeds; ++seed) {
    SceneSpec spec = default_scene_spec(seed, 4, 0, kAc2Sigma);
    spec.lollypop.frame_count = 200;
    const ChainEstimate truth = ground_truth_estimate(spec);
    const auto rec = generate_lollypop(spec, truth);
    std::vector<VerificationReport> reps;
    for (int k = 0; k < kAc7Steps; ++k) {
      reps.push_back(verify(rec, perturb_estimate(truth, 1e-3 * k, 1e-3 * k, PerturbSelector{false, true, {}},
                                                  500 + seed)));
    }
    const DriftSeries d = drift_series(reps);
    if (d.strictly_increasing && d.increasing) {
      ++ok;
    } else {
      std::string line = fmt("seed %d:", seed);
      for (const auto& p : d.points) line += fmt(" %.3f", p.rmse_2d);
      detail(line);
    }
    if (seed == 1) {
      std::string line = "seed 1 series:";
      for (const auto& p : d.points) line += fmt(" %.3f", p.rmse_2d);
      detail(line + fmt(" px, slope %.3f px/step", d.slope_2d));
    }
  }
  return {ok == kAc7Seeds, fmt("strictly increasing series with positive slope in %d/%d schedules", ok, kAc7Seeds)};
}

// 8. Periphery effect of a radial distortion error.
Outcome criterion8() {
  int ok = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  for (int seed = 1; seed <= kAc8Seeds; ++seed) {
    SceneSpec spec = default_scene_spec(seed, 4, 0, 0.0);
    spec.lollypop.frame_count = 2000;
    const ChainEstimate truth = ground_truth_estimate(spec);
    const auto rec = generate_lollypop(spec, truth);
    ChainEstimate off = truth;
    off.intrinsics["cam0"].radial[0] += 1e-3;
    const VerificationReport rep = verify(rec, off);
    const ErrorHeatmap hm = build_heatmap(rep, off.model("cam0"), 64);
    const auto centre = region_mean_error(hm, off.model("cam0"), 0.0, 0.2);
    const auto outer = region_mean_error(hm, off.model("cam0"), 0.8, 1.0);
    if (!centre || !outer) {
      detail(fmt("seed %d: empty region", seed));
      continue;
    }
    const double ratio = *outer / std::max(*centre, 1e-300);
    min_ratio = std::min(min_ratio, ratio);
    if (ratio >= kAc8RatioMin) ++ok;
    if (seed == 1) detail(fmt("seed 1: centre %.4f px, outer annulus %.4f px", *centre, *outer));
  }
  return {ok == kAc8Seeds, fmt("outer/centre mean bin error >= %.0fx in %d/%d scenes (min ratio %.3g)",
                               kAc8RatioMin, ok, kAc8Seeds, min_ratio)};
}

// 9. Jacobians, Procrustes, round trip.
Outcome criterion9() {
  std::mt19937_64 rng(9);
  double jac_cam = 0.0;
  double jac_chain = 0.0;
  for (int i = 0; i < kAc9Configs; ++i) {
    const CameraModel m = testing::random_camera(rng);
    const Eigen::Vector3d p = testing::random_point_in_fov(rng, 100.0 * kDeg);
    const ProjectionJacobians j = project_jacobians(p, m);
    const Eigen::MatrixXd np = testing::numeric_jacobian(
        [&](const Eigen::VectorXd& q) -> Eigen::VectorXd { return project(Eigen::Vector3d(q), m); }, p, 1e-6);
    const Eigen::MatrixXd nk = testing::numeric_jacobian(
        [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
          CameraModel mm = m;
          mm.set_params(v);
          return project(p, mm);
        },
        m.params(), 1e-6);
    jac_cam = std::max({jac_cam, testing::relative_error(j.point, np), testing::relative_error(j.intrinsics, nk)});

    ChainEstimate est;
    est.board_to_marker = testing::random_pose(rng, 0.2);
    est.extrinsics["c"] = testing::random_pose(rng, 2.0);
    est.intrinsics["c"] = m;
    MocapFrame f;
    f.board_pose = testing::random_pose(rng, 2.0);
    f.platform_pose = testing::random_pose(rng, 1.0);
    BoardGeometry board;
    board.corners[0] =
        (est.extrinsic("c") * f.marker_to_platform() * est.board_to_marker).inverse() * p;
    const Observation obs{"c", 0, 0, PixelPoint::Zero()};
    const ChainJacobian cj = chain_jacobian(est, board, f, obs);
    Eigen::MatrixXd nc(2, 24);
    nc.leftCols<6>() = testing::numeric_jacobian(
        [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
          ChainEstimate e = est;
          e.extrinsics["c"] = retract_left(e.extrinsics["c"], d);
          return predict_pixel(e, board, f, "c", 0);
        },
        Vector6d::Zero(), 1e-7);
    nc.middleCols<6>(6) = testing::numeric_jacobian(
        [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
          ChainEstimate e = est;
          e.board_to_marker = retract_left(e.board_to_marker, d);
          return predict_pixel(e, board, f, "c", 0);
        },
        Vector6d::Zero(), 1e-7);
    nc.rightCols<12>() = nk;
    jac_chain = std::max({jac_chain, testing::relative_error(cj.leftCols<6>(), nc.leftCols<6>()),
                          testing::relative_error(cj.middleCols<6>(6), nc.middleCols<6>(6)),
                          testing::relative_error(cj.rightCols<12>(), nc.rightCols<12>())});
  }

  double procrustes = 0.0;
  for (int i = 0; i < kAc9Configs; ++i) {
    const RigidTransform t = testing::random_pose(rng, 2.0);
    std::vector<Eigen::Vector3d> src;
    std::vector<Eigen::Vector3d> dst;
    for (int k = 0; k < 12; ++k) {
      src.push_back(Eigen::Vector3d::Random());
      dst.push_back(t * src.back());
    }
    const RigidTransform e = procrustes_fit(src, dst);
    procrustes = std::max({procrustes, (e.rotation - t.rotation).norm(), (e.translation - t.translation).norm()});
  }

  double round_trip = 0.0;
  for (int i = 0; i < 10 * kAc9Configs; ++i) {
    const CameraModel m = (i % 2 == 0) ? default_fisheye_camera(i % 4) : testing::random_camera(rng);
    const PixelPoint px = project(testing::random_point_in_fov(rng, 100.0 * kDeg), m);
    round_trip = std::max(round_trip, (project(unproject(px, m), m) - px).norm());
  }
  detail(fmt("camera Jacobian %.2e, chain Jacobian %.2e, Procrustes %.2e, round trip %.2e px", jac_cam, jac_chain,
             procrustes, round_trip));
  return {jac_cam < kAc9JacobianTol && jac_chain < kAc9JacobianTol && procrustes < kAc9ProcrustesTol &&
              round_trip < kAc9RoundTripTol,
          fmt("Jacobians within %.0e relative, Procrustes to %.0e, round trip < %.0e px on %d configurations",
              kAc9JacobianTol, kAc9ProcrustesTol, kAc9RoundTripTol, kAc9Configs)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10. Bit-identical result files across runs.
Outcome criterion10() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mocap_calib_acceptance_10";
  fs::create_directories(dir);
  bool same = true;
  for (int seed = 1; seed <= 3; ++seed) {
    const SyntheticScene s = scene_for(seed, kAc2Sigma, 100);
    save_dataset((dir / "data.jsonl").string(), s.dataset, s.lollypop_recording);
    for (int run = 0; run < 2; ++run) {
      const DatasetFile f = read_dataset_file((dir / "data.jsonl").string());
      SolverOptions opts;
      opts.seed = 11;
      opts.optimize_intrinsics = seed == 3;
      const CalibrationResult r = calibrate(f.dataset, opts);
      save_result((dir / ("cal" + std::to_string(run) + ".json")).string(), r);
      save_result((dir / ("rep" + std::to_string(run) + ".json")).string(), verify(f.lollypop, r.estimate));
    }
    const bool cal_same = slurp(dir / "cal0.json") == slurp(dir / "cal1.json");
    const bool rep_same = slurp(dir / "rep0.json") == slurp(dir / "rep1.json");
    if (!cal_same || !rep_same) detail(fmt("seed %d differs (calibration %d, report %d)", seed, cal_same, rep_same));
    same = same && cal_same && rep_same;
  }
  fs::remove_all(dir);
  return {same, "calibration and verification files byte-identical across two runs for 3 scenes"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mocap_calib acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "Run only this criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                          criterion5, criterion6, criterion7, criterion8,
                                                          criterion9, criterion10};
  bool all = true;
  for (int i = 1; i <= 10; ++i) {
    if (only != 0 && i != only) continue;
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(i - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d: %s\n", o.pass ? "PASS" : "FAIL", i, o.summary.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

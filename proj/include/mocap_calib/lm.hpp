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

// Dense Levenberg-Marquardt over a manifold-valued state.
//
// A Problem supplies:
//   using State = ...;
//   int dimension() const;
//   double cost(const State&) const;                        // sum of squares
//   double linearize(const State&, Eigen::MatrixXd& jtj,    // J^T J, J^T r,
//                    Eigen::VectorXd& jtr) const;           // returns cost
//   State retract(const State&, const Eigen::VectorXd& delta) const;
//
// Damping is a multiple of diag(J^T J), starts at 1e-3 and moves by x10 on a
// rejected step and /10 on an accepted one. Iteration stops once an accepted
// step improves the objective by less than epsilon * (1 + E); the constant 1
// can be changed through LmOptions::improvement_floor for objectives whose
// units make an absolute floor meaningless.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mocap_calib/error.hpp"

namespace mocap_calib {

struct LmOptions {
  int max_iterations = 100;
  double epsilon = 1e-4;
  double initial_damping = 1e-3;
  double max_damping = 1e12;
  double gradient_tolerance = 0.0;  // stop when ||J^T r||_inf <= this (0 disables)
  double step_tolerance = 1e-12;    // stop when ||delta||_inf <= this
  double improvement_floor = 1.0;   // the test is improvement < epsilon * (floor + E)
};

struct LmDiagnostics {
  int iterations = 0;  // normal-equation solves, accepted or not
  int accepted_steps = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<double> accepted_objectives;  // starts with the initial objective
  bool converged = false;
  std::string termination;
};

template <class Problem>
std::pair<typename Problem::State, LmDiagnostics> lm_minimize(const Problem& problem,
                                                              typename Problem::State state,
                                                              const LmOptions& opts) {
  if (!(opts.epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
  const int n = problem.dimension();
  LmDiagnostics diag;

  Eigen::MatrixXd jtj(n, n);
  Eigen::VectorXd jtr(n);
  double cost = problem.linearize(state, jtj, jtr);
  diag.initial_objective = cost;
  diag.accepted_objectives.push_back(cost);
  if (!std::isfinite(cost)) fail(ErrorCode::Divergence, "initial objective is not finite");

  double damping = opts.initial_damping;
  bool relinearize = false;
  while (diag.iterations < opts.max_iterations) {
    if (relinearize) {
      problem.linearize(state, jtj, jtr);
      relinearize = false;
    }
    if (opts.gradient_tolerance > 0.0 && jtr.lpNorm<Eigen::Infinity>() <= opts.gradient_tolerance) {
      diag.converged = true;
      diag.termination = "gradient";
      break;
    }

    Eigen::MatrixXd a = jtj;
    a.diagonal() += damping * jtj.diagonal();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-14 * d.maxCoeff())) {
      fail(ErrorCode::SingularNormalEquations,
           "normal equations are rank deficient (insufficient excitation of the parameters)");
    }
    const Eigen::VectorXd delta = -ldlt.solve(jtr);
    ++diag.iterations;
    if (!delta.allFinite()) {
      fail(ErrorCode::SingularNormalEquations, "normal-equation solve produced non-finite step");
    }
    if (delta.lpNorm<Eigen::Infinity>() <= opts.step_tolerance) {
      diag.converged = true;
      diag.termination = "small_step";
      break;
    }

    typename Problem::State candidate = problem.retract(state, delta);
    const double new_cost = problem.cost(candidate);
    if (std::isfinite(new_cost) && new_cost < cost) {
      const double improvement = cost - new_cost;
      state = std::move(candidate);
      cost = new_cost;
      ++diag.accepted_steps;
      diag.accepted_objectives.push_back(cost);
      damping = std::max(damping / 10.0, 1e-15);
      relinearize = true;
      if (improvement < opts.epsilon * (opts.improvement_floor + cost)) {
        diag.converged = true;
        diag.termination = "relative_improvement";
        break;
      }
    } else {
      damping *= 10.0;
      if (damping > opts.max_damping) {
        // No descent direction is left at machine precision.
        diag.converged = true;
        diag.termination = "damping_limit";
        break;
      }
    }
  }
  if (diag.termination.empty()) diag.termination = "max_iterations";
  diag.final_objective = cost;
  return {std::move(state), std::move(diag)};
}

}  // namespace mocap_calib

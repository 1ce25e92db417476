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

#include <stdexcept>
#include <string>
#include <string_view>

namespace mocap_calib {

enum class ErrorCode {
  InvalidArgument,
  DegenerateConfiguration,
  BehindCamera,
  NoConvergence,
  InsufficientCorners,
  PlanarDegeneracy,
  EmptyReferences,
  EmptyDataset,
  SingularNormalEquations,
  Divergence,
  DegenerateHomography,
  EmptyRecording,
  TooFewReports,
  InfeasibleTrajectory,
  ParseError,
  ValidationError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InsufficientCorners: return "InsufficientCorners";
    case ErrorCode::PlanarDegeneracy: return "PlanarDegeneracy";
    case ErrorCode::EmptyReferences: return "EmptyReferences";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::DegenerateHomography: return "DegenerateHomography";
    case ErrorCode::EmptyRecording: return "EmptyRecording";
    case ErrorCode::TooFewReports: return "TooFewReports";
    case ErrorCode::InfeasibleTrajectory: return "InfeasibleTrajectory";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mocap_calib

// Copyright 2026 The privchange Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace privchange {

enum class ErrorKind {
  kShapeMismatch,
  kNonStochasticRow,
  kNegativeEntry,
  kNotIrreducible,
  kInfeasible,
  kUnbounded,
  kInfiniteCost,
  kNotConverged,
  kNonPositiveEntry,
  kNotSchur,
  kNotSpd,
  kSingularProjection,
  kSingularL,
  kLambdaNonpositive,
  kIndexOutOfRange,
  kParseError,
  kInvalidArgument,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNonStochasticRow: return "NonStochasticRow";
    case ErrorKind::kNegativeEntry: return "NegativeEntry";
    case ErrorKind::kNotIrreducible: return "NotIrreducible";
    case ErrorKind::kInfeasible: return "Infeasible";
    case ErrorKind::kUnbounded: return "Unbounded";
    case ErrorKind::kInfiniteCost: return "InfiniteCost";
    case ErrorKind::kNotConverged: return "NotConverged";
    case ErrorKind::kNonPositiveEntry: return "NonPositiveEntry";
    case ErrorKind::kNotSchur: return "NotSchur";
    case ErrorKind::kNotSpd: return "NotSPD";
    case ErrorKind::kSingularProjection: return "SingularProjection";
    case ErrorKind::kSingularL: return "SingularL";
    case ErrorKind::kLambdaNonpositive: return "LambdaNonpositive";
    case ErrorKind::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string message) {
  throw Error(kind, std::move(message));
}

}  // namespace privchange

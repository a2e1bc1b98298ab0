// Copyright 2024 The mabort Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mabort {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed configuration or out-of-range parameter.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A model that violates its structural invariants.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A signal with zero likelihood under the current belief.
class ImpossibleObservation : public Error {
 public:
  using Error::Error;
};

/// Root search could not bracket a solution.
class BracketError : public Error {
 public:
  using Error::Error;
};

/// to_spherical was asked for the anchor vertex.
class OriginError : public Error {
 public:
  using Error::Error;
};

enum class Action { kContinue, kAbort };

inline const char* to_string(Action a) {
  return a == Action::kAbort ? "abort" : "continue";
}

}  // namespace mabort

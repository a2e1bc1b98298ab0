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

#include "mabort/common.hpp"

#include <memory>
#include <string>

namespace mabort {

/// One mission under a decision rule. step() is called for n = 1..N-1 with
/// the signal Y_n in 1..K observed at period n, after the previous periods.
class Episode {
 public:
  virtual ~Episode() = default;
  virtual Action step(int n, int signal) = 0;
  /// Short text describing the rule's internal state, for traces.
  virtual std::string summary() const { return ""; }
};

/// Anything that can be rolled out: solved policies, benchmarks, baselines.
class AbortRule {
 public:
  virtual ~AbortRule() = default;
  virtual std::unique_ptr<Episode> start() const = 0;
  virtual std::string name() const = 0;
};

/// Continue until the end of the mission no matter what.
class NeverAbort : public AbortRule {
 public:
  std::unique_ptr<Episode> start() const override {
    struct E : Episode {
      Action step(int, int) override { return Action::kContinue; }
    };
    return std::make_unique<E>();
  }
  std::string name() const override { return "never-abort"; }
};

}  // namespace mabort

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

// Solve the small four-state instance with modified PBVI and compare the
// resulting policy with never aborting.

#include "mabort/experiment.hpp"

#include <iostream>

int main() {
  using namespace mabort;
  ExperimentConfig c = preset("small-ec41");
  c.reps = 5000;

  SolveOutcome s = solve_experiment(c);
  std::cout << "solver " << s.solver << ", n_hat " << s.thresholds.hat_n << ", value at start " << s.value0 << '\n';

  TruthSpec truth = c.truth();
  NeverAbort never;
  for (const AbortRule* rule : {static_cast<const AbortRule*>(s.policy.get()), static_cast<const AbortRule*>(&never)}) {
    RolloutSummary r = rollout(*rule, truth, c.reps, c.seed);
    std::cout << rule->name() << ": cost " << r.mean_cost << " +- " << r.ci95 << ", success " << r.success_prob
              << ", abort rate " << r.abort_rate << '\n';
  }
}

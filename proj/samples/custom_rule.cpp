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

// A hand-written abort rule on the Bayes filter, evaluated next to the
// tuned C-policy on the Weibull case study.

#include "mabort/bench.hpp"
#include "mabort/config.hpp"

#include <iostream>

using namespace mabort;

// Abort when the probability of the defective phases exceeds a level.
class DefectLevel : public AbortRule {
 public:
  DefectLevel(const SurrogateModel& m, ObservationModel obs, double level)
      : model_(m), obs_(std::move(obs)), level_(level) {}

  std::unique_ptr<Episode> start() const override {
    struct E : Episode {
      const DefectLevel* p;
      BeliefFilter f;
      Vec pi;
      explicit E(const DefectLevel* q) : p(q), f(q->model_, q->obs_, 1.0), pi(q->model_.pi0()) {}
      Action step(int, int signal) override {
        pi = f.update(pi, signal);
        return pi.tail(p->model_.m2()).sum() > p->level_ ? Action::kAbort : Action::kContinue;
      }
    };
    return std::make_unique<E>(this);
  }
  std::string name() const override { return "defect>" + std::to_string(level_); }

 private:
  SurrogateModel model_;
  ObservationModel obs_;
  double level_;
};

int main() {
  ExperimentConfig c = preset("table3");
  TruthSpec truth = c.truth();
  SurrogateModel m = c.surrogate_model();
  const long reps = 4000;

  for (double level : {0.5, 0.8, 0.95}) {
    auto r = rollout(DefectLevel(m, c.obs(), level), truth, reps, c.seed);
    std::cout << r.policy << ": cost " << r.mean_cost << " +- " << r.ci95 << '\n';
  }
  BenchmarkPolicy cp = tune_c_policy(truth, 1000, tuning_seed(c.seed, 1));
  auto r = rollout(*cp.rule, truth, reps, c.seed);
  std::cout << "C-policy " << cp.params.dump() << ": cost " << r.mean_cost << " +- " << r.ci95 << '\n';
}

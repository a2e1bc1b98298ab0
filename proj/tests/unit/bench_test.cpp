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

#include "mabort/bench.hpp"
#include "mabort/config.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace mabort {
namespace {

int first_abort(const AbortRule& r, const std::vector<int>& y) {
  auto ep = r.start();
  for (std::size_t n = 0; n < y.size(); ++n)
    if (ep->step(static_cast<int>(n) + 1, y[n]) == Action::kAbort) return static_cast<int>(n) + 1;
  return -1;
}

std::shared_ptr<const ValueModel> table3_vm() {
  auto c = preset("table3");
  c.surrogate.lambda = 0.134;
  return std::make_shared<const ValueModel>(c.surrogate_model(), c.cost(), c.obs());
}

TEST(CPolicy, TwoWarningsInThree) {
  EXPECT_EQ(first_abort(CountingPolicy(2, 3, 2), {1, 2, 2, 1}), 3);
  EXPECT_FALSE(c_policy_action({1, 2}, 2, 3, 2));
  EXPECT_TRUE(c_policy_action({1, 2, 2}, 2, 3, 2));
  EXPECT_FALSE(c_policy_action({2, 1, 1, 2}, 2, 3, 2));
}

TEST(CPolicy, SingleWarningRule) {
  EXPECT_EQ(first_abort(CountingPolicy(1, 1, 2), {1, 1, 1, 2, 1}), 4);
  EXPECT_EQ(first_abort(CountingPolicy(1, 1, 2), {1, 1, 1}), -1);
}

TEST(CPolicy, EpisodeMatchesHistoryRule) {
  Stream s(3);
  for (int t = 0; t < 200; ++t) {
    int m = 1 + t % 4, N = m + t % 5;
    std::vector<int> y;
    for (int n = 0; n < 40; ++n) y.push_back(s.uniform() < 0.3 ? 2 : 1);
    int expect = -1;
    for (int n = 1; n <= 40 && expect < 0; ++n)
      if (c_policy_action(std::vector<int>(y.begin(), y.begin() + n), m, N, 2)) expect = n;
    EXPECT_EQ(first_abort(CountingPolicy(m, N, 2), y), expect);
  }
}

TEST(CPolicy, RejectsMoreWarningsThanWindow) {
  EXPECT_THROW(CountingPolicy(4, 3, 2), ConfigError);
  EXPECT_THROW(c_policy_action({}, 0, 3, 2), ConfigError);
}

TEST(RPolicy, LastStateMedian) {
  auto vm = table3_vm();
  const auto& m = vm->model();
  Vec e = Vec::Unit(m.dim(), m.dim() - 1);
  auto tp = rul_percentile(m, e, 50, 185);
  ASSERT_TRUE(tp.has_value());
  EXPECT_NEAR(*tp, std::log(2.0) / 0.134, 1e-6);
  EXPECT_NEAR(*tp, 5.17, 0.005);
  EXPECT_EQ(r_policy_action(e, 150, 50, m, vm->cost()), Action::kAbort);
  EXPECT_EQ(remaining_time(vm->cost(), 150), 35.0);
}

TEST(RPolicy, PercentileRoundTrip) {
  auto vm = table3_vm();
  const auto& m = vm->model();
  Stream s(4);
  for (int t = 0; t < 50; ++t) {
    Vec p(m.dim());
    for (int i = 0; i < p.size(); ++i) p(i) = s.exponential(1);
    p /= p.sum();
    double q = 1 + 98 * s.uniform();
    auto tp = rul_percentile(m, p, q, 185);
    ASSERT_TRUE(tp.has_value());
    EXPECT_NEAR(kappa(m, p, *tp), q / 100, 1e-8);
  }
}

TEST(RPolicy, PercentileExtremes) {
  auto vm = table3_vm();
  const auto& m = vm->model();
  Vec e1 = Vec::Unit(m.dim(), 0);
  EXPECT_EQ(r_policy_action(e1, 0, 1e-9, m, vm->cost()), Action::kAbort);
  EXPECT_EQ(r_policy_action(e1, 0, 99.9, m, vm->cost()), Action::kContinue);
}

TEST(RPolicy, ScoreRuleMatchesPercentileRule) {
  auto vm = table3_vm();
  const auto& m = vm->model();
  Stream s(5);
  for (double p : {10.0, 50.0, 64.0}) {
    RulPolicy r(vm, p);
    for (int t = 0; t < 100; ++t) {
      Vec pi(m.dim());
      for (int i = 0; i < pi.size(); ++i) pi(i) = s.exponential(1) * (i > 5 ? 3 : 0.1);
      pi /= pi.sum();
      int n = static_cast<int>(s.uniform() * 159) + 1;
      bool ab = r.score(n, pi) > p / 100;
      EXPECT_EQ(ab, r_policy_action(pi, n, p, m, vm->cost()) == Action::kAbort);
    }
  }
  EXPECT_THROW(RulPolicy(vm, 100), ConfigError);
}

TEST(MPolicy, MeanMatchedRates) {
  auto c = preset("table3");
  auto m = m_policy_model(c.G, c.F, c.zeta);
  EXPECT_NEAR(m.Q()(0, 1), 8.01e-3 / 2, 1e-15);
  EXPECT_NEAR(m.Q()(0, 1), 4.01e-3, 1e-5);
  EXPECT_NEAR(m.Q()(0, 2), 1e-3, 1e-15);
  EXPECT_NEAR(1 / m.Q()(1, 2), c.F.mean(), 1e-9);
  EXPECT_NEAR(m.Q()(1, 2), 1.04e-2, 5e-5);
}

TEST(MPolicy, ExactForExponentialTruth) {
  auto G = DistributionSpec::exponential(0.004), F = DistributionSpec::exponential(0.02);
  auto m = m_policy_model(G, F, 1e-3);
  Mat Q(3, 3);
  Q << -0.005, 0.004, 1e-3,  //
      0, -0.02, 0.02,        //
      0, 0, 0;
  EXPECT_LT((m.Q() - Q).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(OnePhase, ErlangStartKeepsPhases) {
  auto c = preset("table3");
  auto m = one_phase_model(c.G, c.F, c.zeta);
  EXPECT_EQ(m.m1(), 2);
  EXPECT_EQ(m.m2(), 1);
  EXPECT_NEAR(m.lambda(), 1 / c.F.mean(), 1e-15);
}

TEST(Tune, SinglePointGrid) {
  auto spec = preset("table3").truth();
  auto b = tune_c_policy(spec, 200, 1, CGrid{1, 1});
  ASSERT_EQ(b.tuning.size(), 1u);
  EXPECT_EQ(b.params["m"], 1);
  EXPECT_EQ(b.params["N"], 1);
}

TEST(Tune, DeterministicUnderSeed) {
  auto spec = preset("table3").truth();
  auto a = tune_c_policy(spec, 300, 7, CGrid{2, 4});
  auto b = tune_c_policy(spec, 300, 7, CGrid{2, 4});
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.tuning.size(), b.tuning.size());
  for (std::size_t i = 0; i < a.tuning.size(); ++i) EXPECT_EQ(a.tuning[i].mean_cost, b.tuning[i].mean_cost);
}

TEST(Tune, ReturnsGridMinimizer) {
  auto spec = preset("table3").truth();
  auto b = tune_c_policy(spec, 300, 8, CGrid{3, 5});
  double best = 1e300;
  for (const auto& t : b.tuning) best = std::min(best, t.mean_cost);
  for (const auto& t : b.tuning)
    if (t.params == b.params) {
      EXPECT_EQ(t.mean_cost, best);
    }
}

TEST(Tune, RPolicyScanMatchesDirectRollout) {
  auto vm = table3_vm();
  auto spec = preset("table3").truth();
  auto b = tune_r_policy(vm, spec, 300, 9, {30, 64});
  for (std::size_t i = 0; i < b.tuning.size(); ++i) {
    double p = b.tuning[i].params["p"].get<double>();
    auto direct = rollout(RulPolicy(vm, p), spec, 300, 9);
    EXPECT_NEAR(b.tuning[i].mean_cost, direct.mean_cost, 1e-9) << p;
  }
  EXPECT_THROW(tune_r_policy(vm, spec, 10, 1, {0.0}), ConfigError);
}

TEST(Tune, SeedSeparatedFromEvaluation) { EXPECT_NE(tuning_seed(1, 1), tuning_seed(1, 2)); }

}  // namespace
}  // namespace mabort

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

#include "mabort/value.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace mabort {
namespace {

ObservationModel case_d() {
  Mat D(2, 2);
  D << 0.737, 0.263, 0.101, 0.899;
  return ObservationModel(D);
}

SurrogateModel table3_model(double lambda = 0.134) {
  return build_surrogate_deterministic_start(DistributionSpec::erlang(2, 8.01e-3), DistributionSpec::weibull(2.3, 108.8),
                                             1e-3, 20, lambda);
}

// Increasing-hazard instance on which the hazard certificate holds.
SurrogateModel monotone_model() {
  auto F = DistributionSpec::weibull(2.3, 40);
  return build_surrogate(DistributionSpec::exponential(0.01), F, 1e-4, 1, 10, moment_match_rate(F, 10));
}

CostModel table3_cost(double Cm = 2000) { return CostModel::single(2000, Cm, 1, 160, ramp_schedule(160, 1, 25)); }

Vec random_belief(int d, Stream& s) {
  Vec p(d);
  for (int i = 0; i < d; ++i) p(i) = s.exponential(1);
  return p / p.sum();
}

TEST(AbortCost, ZeroRescueAtStart) {
  ValueModel vm(table3_model(), table3_cost(), case_d());
  Stream s(1);
  for (int t = 0; t < 10; ++t) EXPECT_DOUBLE_EQ(vm.v_ab(0, random_belief(vm.dim(), s)), 2000.0);
}

TEST(AbortCost, LastStateClosedForm) {
  ValueModel vm(table3_model(), table3_cost(), case_d());
  Vec e = Vec::Unit(vm.dim(), vm.dim() - 1);
  EXPECT_NEAR(vm.v_ab(25, e), 2000 + 2000 * (1 - std::exp(-3.35)), 1e-9);
  EXPECT_NEAR(vm.v_ab(25, e), 3929.8, 0.05);
}

TEST(AbortCost, MonotoneInBeliefAndPeriod) {
  ValueModel vm(table3_model(), table3_cost(), case_d());
  Stream s(2);
  for (int t = 0; t < 1000; ++t) {
    Vec b = random_belief(vm.dim(), s);
    Vec a = b;
    double r = 1;
    for (int i = 0; i < a.size(); ++i) a(i) *= (r *= 1 + s.exponential(2));
    a /= a.sum();
    int n = static_cast<int>(s.uniform() * 159);
    EXPECT_LE(vm.v_ab(n, b), vm.v_ab(n, a) + 1e-9);
    EXPECT_LE(vm.v_ab(n, b), vm.v_ab(n + 1, b) + 1e-9);
  }
}

TEST(ContinueBound, TerminalAndLastPeriod) {
  ValueModel vm(table3_model(), table3_cost(), case_d());
  Vec e = Vec::Unit(vm.dim(), vm.dim() - 1);
  EXPECT_NEAR(vm.v_c_upper(159, e), 4000 * (1 - std::exp(-3.484)), 1e-9);
  EXPECT_NEAR(vm.v_c_upper(159, e), 3877.3, 0.05);
  Stream s(3);
  Vec pi = random_belief(vm.dim(), s);
  EXPECT_NEAR(vm.v_c_upper(160, pi), 4000 * vm.kappa(pi, 25), 1e-9);
  EXPECT_NEAR(vm.terminal_alpha().dot(pi), vm.v_c_upper(160, pi), 1e-9);
}

TEST(ContinueBound, NonincreasingInPeriod) {
  ValueModel vm(table3_model(), table3_cost(), case_d());
  Stream s(4);
  for (int t = 0; t < 200; ++t) {
    Vec pi = random_belief(vm.dim(), s);
    for (int n = 0; n < 160; n += 7) EXPECT_GE(vm.v_c_upper(n, pi), vm.v_c_upper(n + 1, pi) - 1e-9);
  }
}

TEST(NeverAbort, Examples) {
  auto c = CostModel::single(1, 4, 1, 135, ramp_schedule(135, 1, 25));
  EXPECT_NEAR(c.H() + c.wN(), 160, 0);
  EXPECT_TRUE(never_abort(c, 0.01));
  EXPECT_FALSE(never_abort(table3_cost(), 0.134));
  auto tiny = CostModel::single(1e-300, 1, 1, 160, ramp_schedule(160, 1, 25));
  EXPECT_TRUE(never_abort(tiny, 0.134));
  auto zero = CostModel::single(0, 1, 1, 160, ramp_schedule(160, 1, 25));
  EXPECT_TRUE(never_abort(zero, 0.134));
}

int hat_n_linear_scan(const ValueModel& vm) {
  for (int n = 0; n <= vm.N(); ++n)
    if ((vm.upper_alpha(n) - vm.abort_alpha(n)).maxCoeff() <= 0) return n;
  return vm.N();
}

TEST(HatN, BinarySearchMatchesLinearScan) {
  for (auto m : {table3_model(), monotone_model()}) {
    ValueModel vm(m, table3_cost(), case_d());
    EXPECT_EQ(find_hat_n(vm), hat_n_linear_scan(vm));
  }
}

TEST(HatN, ZeroWhenNeverAbortHolds) {
  auto F = DistributionSpec::exponential(1e-3);
  auto m = build_surrogate(DistributionSpec::exponential(0.01), F, 1e-4, 1, 1, 1e-3);
  ASSERT_TRUE(never_abort(table3_cost(), 1e-3));
  ValueModel vm(m, table3_cost(), case_d());
  EXPECT_EQ(find_hat_n(vm), 0);
}

TEST(HatN, ContinueBoundBelowAbortAfterThreshold) {
  ValueModel vm(monotone_model(), table3_cost(), case_d());
  const int hat = find_hat_n(vm);
  ASSERT_LT(hat, vm.N());
  Stream s(5);
  for (int n = hat; n <= vm.N(); ++n)
    for (int t = 0; t < 200; ++t) {
      Vec pi = random_belief(vm.dim(), s);
      EXPECT_LE(vm.v_c_upper(n, pi), vm.v_ab(n, pi) + 1e-9);
    }
}

// Scalar recursion at the last transient vertex: it only stays or fails.
struct VertexOracle {
  std::vector<double> vab, vc;
};

VertexOracle vertex_oracle(double lambda, double Cs, double Cm, int N, const std::vector<double>& w) {
  VertexOracle o;
  o.vab.resize(N + 1);
  o.vc.resize(N + 1);
  for (int n = 0; n <= N; ++n) o.vab[n] = Cm + Cs * (1 - std::exp(-lambda * w[n]));
  o.vc[N] = (Cs + Cm) * (1 - std::exp(-lambda * w[N]));
  double next = o.vc[N];
  for (int n = N - 1; n >= 0; --n) {
    o.vc[n] = (Cs + Cm) * (1 - std::exp(-lambda)) + std::exp(-lambda) * next;
    next = std::min(o.vab[n], o.vc[n]);
  }
  return o;
}

TEST(TildeN, VertexRecursionMatchesOracle) {
  for (double Cm : {0.0, 500.0, 2000.0}) {
    auto cost = table3_cost(Cm);
    ValueModel vm(table3_model(), cost, case_d());
    auto v = vertex_recursion(vm);
    auto o = vertex_oracle(0.134, 2000, Cm, 160, cost.w);
    for (int n = 0; n <= 160; ++n) {
      EXPECT_NEAR(v.vab[n], o.vab[n], 1e-8) << n;
      EXPECT_NEAR(v.vc[n], o.vc[n], 1e-8) << n;
    }
  }
}

TEST(TildeN, AbortBeatsContinueUpToThreshold) {
  ValueModel vm(table3_model(), table3_cost(), case_d());
  auto tilde = find_tilde_n(vm);
  ASSERT_TRUE(tilde.has_value());
  auto v = vertex_recursion(vm);
  for (int n = 0; n <= *tilde; ++n) EXPECT_GT(v.vc[n], v.vab[n]) << n;
  for (int n = *tilde + 1; n < vm.N(); ++n) EXPECT_LE(v.vc[n], v.vab[n]) << n;
}

TEST(TildeN, ZeroRescueSchedule) {
  auto cost = CostModel::single(2000, 2000, 1, 160, std::vector<double>(161, 0.0));
  ValueModel vm(monotone_model(), cost, case_d());
  const int hat = find_hat_n(vm);
  auto tilde = find_tilde_n(vm);
  ASSERT_TRUE(tilde.has_value());
  EXPECT_GE(*tilde, hat - 1);
  EXPECT_TRUE(no_intermediate_check(vm, hat).holds);
  EXPECT_TRUE(no_intermediate_check(vm, hat).zero_rescue);
}

TEST(TildeN, OrderedBelowHatN) {
  ValueModel vm(monotone_model(), table3_cost(), case_d());
  auto tilde = find_tilde_n(vm);
  ASSERT_TRUE(tilde.has_value());
  EXPECT_LT(*tilde, find_hat_n(vm));
}

TEST(NoIntermediate, ArgmaxByEnumeration) {
  ValueModel vm(monotone_model(), table3_cost(), case_d());
  const int hat = find_hat_n(vm);
  auto r = no_intermediate_check(vm, hat);
  const auto& c = vm.cost();
  int best = 0;
  double bv = -1e300;
  for (int i = 0; i < vm.dim(); ++i) {
    Vec e = Vec::Unit(vm.dim(), i);
    double g = (1 + c.Cm.back() / c.Cs) * vm.kappa(e, (c.N - hat + 1) * c.delta + c.wN()) - vm.kappa(e, c.w[hat - 1]);
    if (g > bv) {
      bv = g;
      best = i;
    }
  }
  EXPECT_EQ(r.argmax, best);
  EXPECT_EQ(r.holds, best == vm.dim() - 1);
}

CostModel multi_cost() {
  CostModel c;
  c.Cs = 2000;
  c.Cm = {500, 300, 200};
  c.Cr = 1000;
  c.delta = 1;
  c.N = 135;
  c.w = cosine_schedule(135);
  c.task_lengths = {35, 50, 50};
  c.validate();
  return c;
}

TEST(Multi, SingleMissionReducesToNeverAbort) {
  for (double Cm : {10.0, 2000.0, 1e7}) {
    auto c = table3_cost(Cm);
    EXPECT_EQ(multi_no_abort(c, 0.134), never_abort(c, 0.134)) << Cm;
    EXPECT_EQ(multi_no_abort(c, 0.001), never_abort(c, 0.001)) << Cm;
  }
}

TEST(Multi, CaseInstanceCanAbort) {
  EXPECT_FALSE(multi_no_abort(multi_cost(), 0.208456));
  auto big = multi_cost();
  big.Cm.back() = 1e20;
  EXPECT_TRUE(multi_no_abort(big, 0.208456));
}

TEST(Multi, MissionLossCountsUnfinished) {
  auto c = multi_cost();
  EXPECT_EQ(c.mission_loss(0), 1000);
  EXPECT_EQ(c.mission_loss(34), 1000);
  EXPECT_EQ(c.mission_loss(35), 500);
  EXPECT_EQ(c.mission_loss(85), 200);
  EXPECT_EQ(c.mission_loss(135), 200);
}

TEST(Multi, RepairCostInAbortValue) {
  auto m = table3_model();
  ValueModel vm(m, multi_cost(), case_d());
  Vec e = Vec::Unit(vm.dim(), vm.dim() - 1);
  const double w = vm.cost().w[40];
  const double surv = std::exp(-0.134 * w);
  EXPECT_NEAR(vm.v_ab(40, e), 500 + 2000 * (1 - surv) + 1000 * surv, 1e-8);
}

TEST(CostModel, Validation) {
  EXPECT_THROW(CostModel::single(1, 1, 1, 3, {0, 2, 1, 3}), ConfigError);
  EXPECT_THROW(CostModel::single(1, 1, 1, 3, {1, 1, 1, 1}), ConfigError);
  EXPECT_THROW(CostModel::single(1, 1, 1, 3, {0, 1, 1}), ConfigError);
  auto c = multi_cost();
  c.task_lengths = {35, 50, 49};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(multi_cost().validate());
}

TEST(Schedules, CosineShape) {
  auto w = cosine_schedule(185);
  EXPECT_EQ(w[0], 0);
  EXPECT_EQ(w[24], 24);
  EXPECT_EQ(w[40], 25);
  EXPECT_NEAR(w[72], std::sqrt(625 + 12.0 * -13.0), 1e-12);
  EXPECT_EQ(w[100], 25);
  EXPECT_EQ(w[150], 25);
  auto r = ramp_schedule(160, 1, 25);
  EXPECT_EQ(r[10], 10);
  EXPECT_EQ(r[160], 25);
}

}  // namespace
}  // namespace mabort

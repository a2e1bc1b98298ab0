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

#include "mabort/config.hpp"
#include "mabort/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

namespace mabort {
namespace {

TEST(Config, RoundTrip) {
  for (const auto& name : preset_names()) {
    auto c = preset(name);
    auto j = c.to_json();
    auto r = ExperimentConfig::from_json(j);
    EXPECT_EQ(r.to_json(), j) << name;
    EXPECT_EQ(r.cost().w, c.cost().w) << name;
  }
}

TEST(Config, UnknownFieldRejected) {
  auto j = preset("table3").to_json();
  j["pbvi"]["L2"] = 3;
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j = preset("table3").to_json();
  j["colour"] = "red";
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j = preset("table3").to_json();
  j["solver"] = "magic";
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  auto j = preset("table3").to_json();
  j["truth"]["D"] = {{0.5, 0.6}, {0.1, 0.9}};
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j = preset("table3").to_json();
  j["reps"] = 0;
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j = preset("table3").to_json();
  j["truth"]["N"] = "many";
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  EXPECT_THROW(preset("table9"), ConfigError);
}

TEST(Config, PartialConfigKeepsDefaults) {
  auto c = ExperimentConfig::from_json({{"cost", {{"Cm", {1500}}}}, {"reps", 50}});
  EXPECT_EQ(c.Cm, std::vector<double>{1500});
  EXPECT_EQ(c.N, 160);
  EXPECT_EQ(c.reps, 50);
}

TEST(Config, LoadFromFile) {
  const std::string path = ::testing::TempDir() + "mabort_config_test.json";
  {
    std::ofstream f(path);
    f << preset("table4").to_json().dump(2);
  }
  auto c = load_config(path);
  EXPECT_EQ(c.name, "table4");
  EXPECT_EQ(c.surrogate.m2, 50);
  std::remove(path.c_str());
  EXPECT_THROW(load_config(path), ConfigError);
}

TEST(Presets, CaseStudyConstants) {
  auto t3 = preset("table3");
  EXPECT_NEAR(t3.lambda(), 0.134, 0.0005);
  auto cost = t3.cost();
  EXPECT_EQ(cost.w[10], 10);
  EXPECT_EQ(cost.w[160], 25);
  EXPECT_EQ(cost.Cs, 2000);
  auto t4 = preset("table4");
  EXPECT_NEAR(t4.lambda(), 0.209, 0.001);
  auto mu = preset("multi-ec41").cost();
  EXPECT_EQ(mu.L(), 3);
  EXPECT_EQ(mu.N, 135);
  EXPECT_EQ(mu.Cr, 1000);
  auto small = preset("small-ec41").surrogate_model();
  EXPECT_EQ(small.dim(), 3);
  EXPECT_TRUE(small.violations().empty());
}

TEST(Dispatch, SolverFollowsPhaseStructure) {
  auto c = preset("table3");
  EXPECT_EQ(resolve_solver(c, c.surrogate_model()), "pbvi-modified");
  auto G = DistributionSpec::exponential(0.004);
  EXPECT_EQ(resolve_solver(c, build_surrogate(G, c.F, 1e-3, 1, 1, 0.01)), "exact-ctmc");
  EXPECT_EQ(resolve_solver(c, build_surrogate(G, c.F, 1e-3, 3, 1, 0.01)), "exact-dimred");
  c.solver = "pbvi-classical";
  EXPECT_EQ(resolve_solver(c, c.surrogate_model()), "pbvi-classical");
}

TEST(Dispatch, SingleSecondPhaseConfigSolvedExactly) {
  auto c = preset("table3");
  c.G = DistributionSpec::exponential(0.004);
  c.surrogate.m1 = 1;
  c.surrogate.m2 = 1;
  auto s = solve_experiment(c);
  EXPECT_EQ(s.solver, "exact-ctmc");
  ASSERT_TRUE(s.limits);
  EXPECT_EQ(s.policy_json()["kind"], "control-limit-table");
}

}  // namespace
}  // namespace mabort

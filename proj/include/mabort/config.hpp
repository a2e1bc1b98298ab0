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

#include "mabort/belief.hpp"
#include "mabort/common.hpp"
#include "mabort/ctmc.hpp"
#include "mabort/dist.hpp"
#include "mabort/sim.hpp"
#include "mabort/solve/pbvi.hpp"
#include "mabort/value.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace mabort {

namespace detail {

inline void only_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": object expected");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(where + ": unknown field \"" + it.key() + "\"");
  }
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Rescue schedule: ramp w_n = min(n delta, cap), the three-site cosine
/// schedule, or an explicit list w_0..w_N.
struct RescueSpec {
  std::string kind = "ramp";
  double cap = 25;
  std::vector<double> w;

  std::vector<double> build(int N, double delta) const {
    if (kind == "ramp") return ramp_schedule(N, delta, cap);
    if (kind == "cosine") return cosine_schedule(N);
    if (kind == "explicit") return w;
    throw ConfigError("rescue: unknown kind \"" + kind + "\"");
  }

  nlohmann::json to_json() const {
    if (kind == "ramp") return {{"kind", kind}, {"cap", cap}};
    if (kind == "explicit") return {{"kind", kind}, {"w", w}};
    return {{"kind", kind}};
  }

  static RescueSpec from_json(const nlohmann::json& j) {
    detail::only_keys(j, "rescue", {"kind", "cap", "w"});
    RescueSpec r;
    detail::read_opt(j, "kind", r.kind);
    detail::read_opt(j, "cap", r.cap);
    detail::read_opt(j, "w", r.w);
    if (r.kind != "ramp" && r.kind != "cosine" && r.kind != "explicit")
      throw ConfigError("rescue: unknown kind \"" + r.kind + "\"");
    return r;
  }
};

/// How the surrogate CTMC is formed. `lambda` empty means moment matching.
struct SurrogateSpec {
  std::string variant = "auto";
  int m1 = 1;
  int m2 = 20;
  std::optional<double> lambda;
  /// Rate matrix and initial belief for the rate-matrix variant.
  std::vector<std::vector<double>> Q;
  std::vector<double> pi0;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"variant", variant}, {"m1", m1}, {"m2", m2}};
    j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json("moment-match");
    if (!Q.empty()) j["Q"] = Q;
    if (!pi0.empty()) j["pi0"] = pi0;
    return j;
  }

  static SurrogateSpec from_json(const nlohmann::json& j) {
    detail::only_keys(j, "surrogate", {"variant", "m1", "m2", "lambda", "Q", "pi0"});
    SurrogateSpec s;
    detail::read_opt(j, "variant", s.variant);
    detail::read_opt(j, "m1", s.m1);
    detail::read_opt(j, "m2", s.m2);
    if (j.contains("lambda")) {
      const auto& l = j.at("lambda");
      if (l.is_string()) {
        if (l.get<std::string>() != "moment-match") throw ConfigError("surrogate: lambda must be a number or \"moment-match\"");
      } else {
        s.lambda = l.get<double>();
      }
    }
    detail::read_opt(j, "Q", s.Q);
    detail::read_opt(j, "pi0", s.pi0);
    if (s.variant != "auto") variant_from_string(s.variant);
    return s;
  }
};

struct BenchSpec {
  int c_m_max = 5;
  int c_N_max = 10;
  std::vector<double> r_grid;
  double granularity = 0.01;
  long tune_reps = 2000;

  nlohmann::json to_json() const {
    return {{"c_m_max", c_m_max}, {"c_N_max", c_N_max}, {"r_grid", r_grid}, {"granularity", granularity},
            {"tune_reps", tune_reps}};
  }

  static BenchSpec from_json(const nlohmann::json& j) {
    detail::only_keys(j, "bench", {"c_m_max", "c_N_max", "r_grid", "granularity", "tune_reps"});
    BenchSpec b;
    detail::read_opt(j, "c_m_max", b.c_m_max);
    detail::read_opt(j, "c_N_max", b.c_N_max);
    detail::read_opt(j, "r_grid", b.r_grid);
    detail::read_opt(j, "granularity", b.granularity);
    detail::read_opt(j, "tune_reps", b.tune_reps);
    return b;
  }
};

inline PbviConfig pbvi_config_from_json(const nlohmann::json& j) {
  detail::only_keys(j, "pbvi",
                    {"L1", "Z1", "Z2", "W", "eps", "seed", "max_points", "min_distance", "hull_cap", "hull_tol"});
  PbviConfig c;
  detail::read_opt(j, "L1", c.L1);
  detail::read_opt(j, "Z1", c.Z1);
  detail::read_opt(j, "Z2", c.Z2);
  detail::read_opt(j, "W", c.W);
  detail::read_opt(j, "eps", c.eps);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "max_points", c.max_points);
  detail::read_opt(j, "min_distance", c.min_distance);
  detail::read_opt(j, "hull_cap", c.hull_cap);
  detail::read_opt(j, "hull_tol", c.hull_tol);
  c.validate();
  return c;
}

/// Everything one experiment needs.
struct ExperimentConfig {
  std::string name = "custom";
  DistributionSpec G = DistributionSpec::erlang(2, 8.01e-3);
  DistributionSpec F = DistributionSpec::weibull(2.3, 108.8);
  double zeta = 1e-3;
  std::vector<std::vector<double>> D = {{0.737, 0.263}, {0.101, 0.899}};
  double delta = 1;
  int N = 160;
  RescueSpec rescue;
  double Cs = 2000;
  std::vector<double> Cm = {2000};
  double Cr = 0;
  std::vector<int> task_lengths;
  SurrogateSpec surrogate;
  /// auto, exact, pbvi-modified or pbvi-classical.
  std::string solver = "auto";
  PbviConfig pbvi;
  BenchSpec bench;
  long reps = 10000;
  std::uint64_t seed = 1;
  std::string out = "out";

  ObservationModel obs() const {
    Mat m(2, static_cast<Eigen::Index>(D.at(0).size()));
    for (int i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < D.at(0).size(); ++k) m(i, k) = D.at(i).at(k);
    return ObservationModel(m);
  }

  CostModel cost() const {
    CostModel c;
    c.Cs = Cs;
    c.Cm = Cm;
    c.Cr = Cr;
    c.delta = delta;
    c.N = N;
    c.w = rescue.build(N, delta);
    c.task_lengths = task_lengths.empty() ? std::vector<int>{N} : task_lengths;
    c.validate();
    return c;
  }

  TruthSpec truth() const { return TruthSpec{G, F, zeta, obs(), cost()}; }

  /// Rate of the second-chain phases after moment matching when unset.
  double lambda() const {
    if (surrogate.lambda) return *surrogate.lambda;
    return moment_match_rate(F, surrogate.m2);
  }

  SurrogateModel surrogate_model() const {
    std::string v = surrogate.variant;
    if (v == "auto") {
      if (!surrogate.Q.empty()) v = "rate-matrix";
      else v = G.kind() == DistributionSpec::Kind::kErlang ? "deterministic-start" : "erlang-mixture-start";
    }
    if (v == "rate-matrix") {
      const int n = static_cast<int>(surrogate.Q.size());
      Mat Q(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) Q(i, j) = surrogate.Q.at(i).at(j);
      Vec pi0 = Vec::Zero(n - 1);
      if (surrogate.pi0.empty()) pi0(0) = 1;
      else
        for (int i = 0; i < n - 1; ++i) pi0(i) = surrogate.pi0.at(i);
      return surrogate_from_rates(Q, pi0, surrogate.m1, surrogate.m2);
    }
    if (v == "deterministic-start") return build_surrogate_deterministic_start(G, F, zeta, surrogate.m2, lambda());
    return build_surrogate(G, F, zeta, surrogate.m1, surrogate.m2, lambda());
  }

  nlohmann::json to_json() const {
    return {{"name", name},
            {"truth",
             {{"G", G.to_json()},
              {"F", F.to_json()},
              {"zeta", zeta},
              {"D", D},
              {"delta", delta},
              {"N", N},
              {"rescue", rescue.to_json()}}},
            {"cost", {{"Cs", Cs}, {"Cm", Cm}, {"Cr", Cr}, {"task_lengths", task_lengths}}},
            {"surrogate", surrogate.to_json()},
            {"solver", solver},
            {"pbvi", pbvi.to_json()},
            {"bench", bench.to_json()},
            {"reps", reps},
            {"seed", seed},
            {"out", out}};
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    try {
      detail::only_keys(j, "config",
                        {"name", "truth", "cost", "surrogate", "solver", "pbvi", "bench", "reps", "seed", "out"});
      ExperimentConfig c;
      detail::read_opt(j, "name", c.name);
      if (j.contains("truth")) {
        const auto& t = j.at("truth");
        detail::only_keys(t, "truth", {"G", "F", "zeta", "D", "delta", "N", "rescue"});
        if (t.contains("G")) c.G = DistributionSpec::from_json(t.at("G"));
        if (t.contains("F")) c.F = DistributionSpec::from_json(t.at("F"));
        detail::read_opt(t, "zeta", c.zeta);
        detail::read_opt(t, "D", c.D);
        detail::read_opt(t, "delta", c.delta);
        detail::read_opt(t, "N", c.N);
        if (t.contains("rescue")) c.rescue = RescueSpec::from_json(t.at("rescue"));
      }
      if (j.contains("cost")) {
        const auto& k = j.at("cost");
        detail::only_keys(k, "cost", {"Cs", "Cm", "Cr", "task_lengths"});
        detail::read_opt(k, "Cs", c.Cs);
        detail::read_opt(k, "Cm", c.Cm);
        detail::read_opt(k, "Cr", c.Cr);
        detail::read_opt(k, "task_lengths", c.task_lengths);
      }
      if (j.contains("surrogate")) c.surrogate = SurrogateSpec::from_json(j.at("surrogate"));
      detail::read_opt(j, "solver", c.solver);
      if (c.solver != "auto" && c.solver != "exact" && c.solver != "pbvi-modified" && c.solver != "pbvi-classical")
        throw ConfigError("config: unknown solver \"" + c.solver + "\"");
      if (j.contains("pbvi")) c.pbvi = pbvi_config_from_json(j.at("pbvi"));
      if (j.contains("bench")) c.bench = BenchSpec::from_json(j.at("bench"));
      detail::read_opt(j, "reps", c.reps);
      detail::read_opt(j, "seed", c.seed);
      detail::read_opt(j, "out", c.out);
      if (c.reps < 1) throw ConfigError("config: reps must be positive");
      c.obs();
      c.cost();
      return c;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
};

inline DistributionSpec weibull_mixture_f() {
  return DistributionSpec::mixture({0.5, 0.5},
                                   {DistributionSpec::weibull(2.6, 180.8), DistributionSpec::weibull(2.3, 36.3)});
}

inline std::vector<std::string> preset_names() { return {"table3", "table4", "multi-ec41", "small-ec41"}; }

/// Built-in case-study parameterizations.
inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "table3") {
    c.surrogate.m2 = 20;
    return c;
  }
  if (name == "table4") {
    c.F = weibull_mixture_f();
    c.surrogate.m2 = 50;
    return c;
  }
  if (name == "multi-ec41") {
    c.F = weibull_mixture_f();
    c.surrogate.m2 = 50;
    c.N = 135;
    c.rescue.kind = "cosine";
    c.Cm = {500, 300, 200};
    c.Cr = 1000;
    c.task_lengths = {35, 50, 50};
    c.reps = 1000;
    return c;
  }
  if (name == "small-ec41") {
    c.G = DistributionSpec::exponential(2.29e-3);
    c.F = DistributionSpec::exponential(1 / (1 / 1.038e-2 + (6.92e-3 / 1.038e-2) / 2.86e-2));
    c.zeta = 4.59e-4;
    c.surrogate.variant = "rate-matrix";
    c.surrogate.m1 = 1;
    c.surrogate.m2 = 2;
    c.surrogate.Q = {{-2.75e-3, 2.29e-3, 0, 4.59e-4},
                     {0, -1.04e-2, 6.92e-3, 3.46e-3},
                     {0, 0, -2.86e-2, 2.86e-2},
                     {0, 0, 0, 0}};
    c.surrogate.pi0 = {1, 0, 0};
    c.pbvi.L1 = 2;
    c.pbvi.Z1 = 30;
    c.pbvi.Z2 = 10;
    return c;
  }
  throw ConfigError("unknown preset \"" + name + "\"");
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

}  // namespace mabort

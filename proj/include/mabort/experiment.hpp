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

#include "mabort/bench.hpp"
#include "mabort/config.hpp"
#include "mabort/sim.hpp"
#include "mabort/solve/exact.hpp"
#include "mabort/solve/pbvi.hpp"
#include "mabort/solve/policy.hpp"
#include "mabort/validate.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <iomanip>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace mabort {

/// Solver chosen for a config: exact for a single second-chain phase,
/// modified PBVI otherwise, unless the config names one.
inline std::string resolve_solver(const ExperimentConfig& c, const SurrogateModel& m) {
  if (c.solver != "auto") return c.solver;
  if (m.m2() == 1) return m.m1() == 1 ? "exact-ctmc" : "exact-dimred";
  return "pbvi-modified";
}

struct SolveOutcome {
  std::shared_ptr<const ValueModel> vm;
  std::shared_ptr<AbortRule> policy;
  /// Set when a PBVI solver ran.
  std::shared_ptr<AlphaPolicy> alpha;
  std::shared_ptr<ControlLimitPolicy> limits;
  std::string solver;
  Thresholds thresholds;
  HazardCheck hazard;
  bool obs_tp2 = true;
  double value0 = 0;
  double seconds = 0;
  std::vector<PbviIteration> iterations;
  std::vector<std::string> log;

  bool certificates_ok() const { return hazard.ok && obs_tp2; }

  nlohmann::json policy_json() const { return alpha ? alpha->to_json() : limits->to_json(); }

  nlohmann::json report() const {
    nlohmann::json j = {{"solver", solver},
                        {"thresholds", thresholds.to_json()},
                        {"hazard_monotone", hazard.ok},
                        {"observation_tp2", obs_tp2},
                        {"lambda", vm->model().lambda()},
                        {"m1", vm->model().m1()},
                        {"m2", vm->model().m2()},
                        {"value0", value0},
                        {"seconds", seconds},
                        {"log", log}};
    if (!hazard.ok) j["hazard_reason"] = hazard.reason;
    return j;
  }
};

inline SolveOutcome solve_experiment(const ExperimentConfig& c, unsigned threads = 1) {
  SolveOutcome out;
  auto t0 = std::chrono::steady_clock::now();
  out.vm = std::make_shared<const ValueModel>(c.surrogate_model(), c.cost(), c.obs());
  out.hazard = check_hazard_monotone(out.vm->model());
  out.obs_tp2 = out.vm->obs().tp2();
  if (!out.hazard.ok) out.log.push_back("hazard certificate failed: " + out.hazard.reason + "; n-hat set to N");
  if (!out.obs_tp2) out.log.push_back("observation matrix is not TP2");
  out.solver = resolve_solver(c, out.vm->model());
  if (out.solver == "exact" || out.solver == "exact-ctmc" || out.solver == "exact-dimred") {
    if (out.vm->model().m2() != 1) throw ConfigError("solver exact requires m2 = 1");
    out.solver = out.vm->model().m1() == 1 ? "exact-ctmc" : "exact-dimred";
    out.limits = out.solver == "exact-ctmc" ? exact_backward_ctmc(out.vm, c.bench.granularity)
                                            : exact_backward_dimred(out.vm, c.bench.granularity);
    out.limits->set_name("proposed");
    out.policy = out.limits;
    out.thresholds = out.limits->thresholds();
    out.value0 = out.limits->value0();
  } else if (out.solver == "pbvi-modified" || out.solver == "pbvi-classical") {
    PbviConfig cfg = c.pbvi;
    cfg.threads = threads;
    auto res = pbvi(out.vm, cfg, out.solver == "pbvi-modified" ? PbviVariant::kModified : PbviVariant::kClassical);
    out.alpha = res.policy;
    out.policy = res.policy;
    out.thresholds = res.policy->thresholds();
    out.iterations = res.iterations;
    out.log.insert(out.log.end(), res.log.begin(), res.log.end());
    if (!res.iterations.empty()) out.value0 = res.iterations.back().value0;
  } else {
    throw ConfigError("unknown solver \"" + out.solver + "\"");
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct PolicyRow {
  RolloutSummary summary;
  nlohmann::json params = nlohmann::json::object();
};

struct BenchOutcome {
  SolveOutcome solved;
  BenchmarkPolicy c_policy, r_policy;
  /// proposed, C-policy, R-policy, M-policy, one-phase.
  std::vector<PolicyRow> rows;

  const PolicyRow& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.summary.policy == name) return r;
    throw ConfigError("no bench row " + name);
  }
};

/// Solves, tunes the benchmarks on their own streams, then rolls out all five
/// policies on the evaluation stream of c.seed.
inline BenchOutcome run_bench(const ExperimentConfig& c, unsigned threads = 1, std::ostream* log = nullptr) {
  BenchOutcome b;
  auto say = [&](const std::string& s) {
    if (log) *log << s << std::endl;
  };
  b.solved = solve_experiment(c, threads);
  say("solved with " + b.solved.solver + " in " + std::to_string(b.solved.seconds) + " s");
  const TruthSpec truth = c.truth();
  const CostModel cost = c.cost();
  const ObservationModel obs = c.obs();
  b.c_policy = tune_c_policy(truth, c.bench.tune_reps, tuning_seed(c.seed, 1), CGrid{c.bench.c_m_max, c.bench.c_N_max},
                             threads);
  say("C-policy tuned: " + b.c_policy.params.dump());
  b.r_policy = tune_r_policy(b.solved.vm, truth, c.bench.tune_reps, tuning_seed(c.seed, 2), c.bench.r_grid, threads);
  say("R-policy tuned: " + b.r_policy.params.dump());
  auto m = build_m_policy(c.G, c.F, c.zeta, cost, obs, c.bench.granularity);
  auto one = build_one_phase(c.G, c.F, c.zeta, cost, obs, c.bench.granularity, b.solved.vm->model().m1());
  say("M-policy and one-phase solved");
  RolloutOptions opt;
  opt.threads = threads;
  auto add = [&](const AbortRule& rule, nlohmann::json params) {
    b.rows.push_back({rollout(rule, truth, c.reps, c.seed, opt), std::move(params)});
    say(rule.name() + ": " + std::to_string(b.rows.back().summary.mean_cost));
  };
  add(*b.solved.policy, {{"solver", b.solved.solver}});
  add(*b.c_policy.rule, b.c_policy.params);
  add(*b.r_policy.rule, b.r_policy.params);
  add(*m, {{"granularity", c.bench.granularity}});
  add(*one, {{"granularity", c.bench.granularity}});
  return b;
}

namespace detail {
inline std::string csv_field(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  return s;
}
}  // namespace detail

inline void write_bench_csv(std::ostream& os, const BenchOutcome& b) {
  const double base = b.rows.front().summary.mean_cost;
  os << "policy,mean_cost,ci95,success_prob,failure_prob,abort_rate,relative_increase,params\n";
  os << std::setprecision(10);
  for (const auto& r : b.rows) {
    const auto& s = r.summary;
    os << s.policy << ',' << s.mean_cost << ',' << s.ci95 << ',' << s.success_prob << ',' << s.failure_prob << ','
       << s.abort_rate << ',' << (base > 0 ? s.mean_cost / base - 1 : 0.0) << ','
       << detail::csv_field(r.params.dump()) << '\n';
  }
}

/// No-abort certificates of a multi-mission cost model.
inline nlohmann::json multi_certificates(const ValueModel& vm) {
  const double lambda = vm.model().lambda();
  nlohmann::json after = nlohmann::json::array();
  for (int l = 1; l < vm.cost().L(); ++l) after.push_back({{"after_mission", l}, {"no_abort", multi_no_abort_after(l, vm, lambda)}});
  return {{"multi_no_abort", multi_no_abort(vm.cost(), lambda)}, {"no_abort_after", after}};
}

/// Property suite on the solved model of a config.
inline ValidationReport validate_experiment(const ExperimentConfig& c, const SolveOutcome& s, int ks_samples = 100000,
                                            int samples = 1000) {
  ValidationInputs in;
  in.instance = c.name;
  in.vm = s.vm;
  in.policy = s.alpha;
  in.G = c.G;
  in.F = c.F;
  in.seed = c.seed;
  in.ks_samples = ks_samples;
  in.samples = samples;
  in.one_phase =
      std::make_shared<const ValueModel>(one_phase_model(c.G, c.F, c.zeta, s.vm->model().m1()), c.cost(), c.obs());
  return run_validation(in);
}

}  // namespace mabort

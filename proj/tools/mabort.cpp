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

#include "mabort/experiment.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace mabort;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCertificate = 3;
constexpr int kExitValidation = 4;

struct Common {
  std::string config;
  std::string preset = "table3";
  std::optional<std::uint64_t> seed;
  std::optional<long> reps;
  std::optional<std::string> out;
  unsigned threads = 1;
  bool strict = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--preset", c.preset, "built-in parameterization")
      ->check(CLI::IsMember(preset_names()));
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--reps", c.reps, "Monte Carlo replications");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--threads", c.threads, "worker threads, 0 = all cores");
  sub->add_flag("--strict", c.strict, "exit 3 when a structural certificate fails");
}

ExperimentConfig load(const Common& o, fs::path& out_dir) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config);
    out_dir = fs::path(o.config).parent_path() / c.out;
  } else {
    c = preset(o.preset);
    out_dir = c.out;
  }
  if (o.seed) c.seed = *o.seed;
  if (o.reps) c.reps = *o.reps;
  if (o.out) out_dir = *o.out;
  if (c.reps < 1) throw ConfigError("reps must be positive");
  fs::create_directories(out_dir);
  return c;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  std::ofstream f(dir / name, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + (dir / name).string());
  f << std::setprecision(10);
  return f;
}

void write_json(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
  auto f = open_out(dir, name);
  f << j.dump(2) << '\n';
}

void write_iterations(const fs::path& dir, const SolveOutcome& s) {
  auto f = open_out(dir, "pbvi_iterations.csv");
  f << "tau,value0,change,points,alphas,pruned\n";
  for (const auto& it : s.iterations)
    f << it.tau << ',' << it.value0 << ',' << it.change << ',' << it.points << ','
      << it.alphas << ',' << it.pruned << '\n';
}

int certificate_exit(const Common& o, const SolveOutcome& s) {
  for (const auto& l : s.log) std::cerr << "warning: " << l << '\n';
  return o.strict && !s.certificates_ok() ? kExitCertificate : 0;
}

int cmd_approx(const Common& o, int m_max) {
  fs::path dir;
  auto c = load(o, dir);
  const double horizon = c.N * c.delta + c.rescue.build(c.N, c.delta).back();
  auto sweep = open_out(dir, "approx_sweep.csv");
  sweep << "m,lambda,mean,sup_norm_error\n";
  for (int m = 1; m <= m_max; ++m) {
    double lam = moment_match_rate(c.F, m);
    auto fit = erlang_mixture_approx(c.F, m, lam);
    sweep << m << ',' << lam << ',' << fit.mean() << ',' << sup_norm_error(c.F, fit, horizon) << '\n';
  }
  const double lam = c.lambda();
  auto fit = erlang_mixture_approx(c.F, c.surrogate.m2, lam);
  auto cdf = open_out(dir, "approx_cdf.csv");
  cdf << "t,F,F_lambda\n";
  for (int i = 0; i <= c.N + 25; ++i) {
    double t = horizon * i / (c.N + 25);
    cdf << t << ',' << c.F.cdf(t) << ',' << fit.cdf(t) << '\n';
  }
  nlohmann::json rep = {{"m2", c.surrogate.m2},
                        {"lambda", lam},
                        {"moment_matched", !c.surrogate.lambda},
                        {"sup_norm_error", sup_norm_error(c.F, fit, horizon)}};
  write_json(dir, "approx.json", rep);
  std::cout << "m2=" << c.surrogate.m2 << " lambda=" << lam << '\n';
  return 0;
}

int cmd_solve(const Common& o) {
  fs::path dir;
  auto c = load(o, dir);
  auto s = solve_experiment(c, o.threads);
  write_json(dir, "policy.json", s.policy_json());
  write_json(dir, "thresholds.json", s.report());
  if (!s.iterations.empty()) write_iterations(dir, s);
  std::cout << "solver=" << s.solver << " n_hat=" << s.thresholds.hat_n << " n_tilde="
            << (s.thresholds.tilde_n ? std::to_string(*s.thresholds.tilde_n) : "none") << " value0=" << s.value0
            << " seconds=" << s.seconds << '\n';
  return certificate_exit(o, s);
}

void write_bench(const fs::path& dir, const std::string& csv, const BenchOutcome& b, const ExperimentConfig& c,
                 nlohmann::json extra) {
  auto f = open_out(dir, csv);
  write_bench_csv(f, b);
  auto ct = open_out(dir, "tuning_c_policy.csv");
  b.c_policy.write_tuning_csv(ct);
  auto rt = open_out(dir, "tuning_r_policy.csv");
  b.r_policy.write_tuning_csv(rt);
  write_json(dir, "policy.json", b.solved.policy_json());
  extra["config"] = c.to_json();
  extra["solve"] = b.solved.report();
  extra["c_policy"] = b.c_policy.to_json();
  extra["r_policy"] = b.r_policy.to_json();
  write_json(dir, "summary.json", extra);
  write_bench_csv(std::cout, b);
}

int cmd_bench(const Common& o) {
  fs::path dir;
  auto c = load(o, dir);
  auto b = run_bench(c, o.threads, &std::cerr);
  write_bench(dir, "bench.csv", b, c, nlohmann::json::object());
  return certificate_exit(o, b.solved);
}

int cmd_multi(const Common& o) {
  Common m = o;
  if (o.config.empty() && o.preset == "table3") m.preset = "multi-ec41";
  fs::path dir;
  auto c = load(m, dir);
  if (c.task_lengths.size() < 2 && c.Cr == 0) throw ConfigError("multi: config has a single mission and no repair cost");
  auto b = run_bench(c, o.threads, &std::cerr);
  auto cert = multi_certificates(*b.solved.vm);
  std::cerr << "certificates: " << cert.dump() << '\n';
  write_bench(dir, "multi.csv", b, c, {{"certificates", cert}});
  return certificate_exit(o, b.solved);
}

int cmd_validate(const Common& o, int ks_samples) {
  fs::path dir;
  auto c = load(o, dir);
  auto s = solve_experiment(c, o.threads);
  auto r = validate_experiment(c, s, ks_samples);
  auto f = open_out(dir, "validate.csv");
  r.write_csv(f);
  r.write_csv(std::cout);
  return r.ok() ? 0 : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mabort: mission-abort policies for partially observed three-state systems"};
  app.require_subcommand(1);
  Common common;
  int m_max = 50;
  int ks_samples = 100000;

  auto* approx = app.add_subcommand("approx", "Erlang-mixture fit and m-sweep");
  add_common(approx, common);
  approx->add_option("--m-max", m_max, "largest m in the sweep")->check(CLI::PositiveNumber);
  auto* solve = app.add_subcommand("solve", "solve the surrogate POMDP and write the policy");
  add_common(solve, common);
  auto* bench = app.add_subcommand("bench", "proposed policy against the four benchmarks");
  add_common(bench, common);
  auto* multi = app.add_subcommand("multi", "multi-mission comparison");
  add_common(multi, common);
  auto* validate = app.add_subcommand("validate", "structural property suite");
  add_common(validate, common);
  validate->add_option("--ks-samples", ks_samples, "draws per side for the absorption KS check")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*approx) return cmd_approx(common, m_max);
    if (*solve) return cmd_solve(common);
    if (*bench) return cmd_bench(common);
    if (*multi) return cmd_multi(common);
    if (*validate) return cmd_validate(common, ks_samples);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

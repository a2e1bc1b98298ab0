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
#include "mabort/rng.hpp"
#include "mabort/sim.hpp"
#include "mabort/solve/exact.hpp"
#include "mabort/solve/policy.hpp"
#include "mabort/value.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace mabort {

enum class CheckStatus { kPass, kFail, kWarn, kSkip };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::kPass: return "PASS";
    case CheckStatus::kFail: return "FAIL";
    case CheckStatus::kWarn: return "WARN";
    case CheckStatus::kSkip: return "SKIP";
  }
  return "";
}

struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::kPass;
  /// Worst observed violation (0 when none).
  double metric = 0;
  std::string detail;
};

struct ValidationReport {
  std::string instance;
  std::vector<CheckResult> checks;

  bool ok() const {
    return std::none_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.status == CheckStatus::kFail; });
  }

  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }

  void write_csv(std::ostream& os, bool header = true) const {
    if (header) os << "instance,check,status,metric,detail\n";
    for (const auto& c : checks) {
      std::string d = c.detail;
      std::replace(d.begin(), d.end(), ',', ';');
      os << instance << ',' << c.name << ',' << to_string(c.status) << ',' << c.metric << ',' << d << '\n';
    }
  }
};

namespace detail {

inline Vec random_belief(int d, Stream& s) {
  Vec p(d);
  for (int i = 0; i < d; ++i) p(i) = s.exponential(1.0);
  return p / p.sum();
}

/// Belief concentrated on a random face, so that vertices and edges are hit.
inline Vec random_sparse_belief(int d, Stream& s) {
  Vec p = random_belief(d, s);
  for (int i = 0; i < d; ++i)
    if (s.uniform() < 0.5) p(i) = 0;
  if (p.sum() <= 0) p(static_cast<int>(s.uniform() * d) % d) = 1;
  return p / p.sum();
}

/// b scaled by a random nondecreasing positive ratio, so that a >=_LR b.
inline Vec mlr_dominating(const Vec& b, Stream& s) {
  Vec a(b.size());
  double r = 1;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    r *= 1 + s.exponential(2.0);
    a(i) = b(i) * r;
  }
  return a / a.sum();
}

inline CheckResult make(std::string name, bool pass, double metric, std::string detail) {
  return {std::move(name), pass ? CheckStatus::kPass : CheckStatus::kFail, metric, std::move(detail)};
}

}  // namespace detail

/// Bayes updates of random beliefs stay on the simplex.
inline CheckResult check_simplex_preservation(const ValueModel& vm, Stream& s, int samples = 1000) {
  const int d = vm.dim();
  double worst = 0;
  for (int i = 0; i < samples; ++i) {
    Vec pi = i % 2 ? detail::random_sparse_belief(d, s) : detail::random_belief(d, s);
    for (int k = 1; k <= vm.K(); ++k) {
      Vec post;
      try {
        post = bayes_update(pi, k, vm.Ptilde(), vm.obs(), vm.model().m1());
      } catch (const ImpossibleObservation&) {
        continue;
      }
      worst = std::max({worst, std::abs(post.sum() - 1), -post.minCoeff()});
    }
  }
  return detail::make("simplex_preservation", worst <= 1e-12, worst, "max |sum-1| or negative mass");
}

/// P(s+t) = P(s) P(t).
inline CheckResult check_semigroup(const SurrogateModel& m) {
  const double pairs[][2] = {{0.5, 0.5}, {1, 1}, {1, 24}, {5, 25}, {25, 25}, {0.3, 7.7}};
  double worst = 0;
  for (const auto& p : pairs) {
    Mat a = m.kernel(p[0])->P * m.kernel(p[1])->P;
    worst = std::max(worst, (a - m.kernel(p[0] + p[1])->P).cwiseAbs().maxCoeff());
  }
  return detail::make("semigroup", worst <= 1e-8, worst, "max |P(s+t) - P(s)P(t)|");
}

inline CheckResult check_ptilde_tp2(const SurrogateModel& m, double delta) {
  std::vector<double> ts = {0.5, 1, 5, 25, delta};
  std::string bad;
  for (double t : ts)
    if (!is_tp2(m.kernel(t)->Ptilde, 1e-12)) bad += (bad.empty() ? "" : " ") + std::to_string(t);
  return detail::make("ptilde_tp2", bad.empty(), bad.empty() ? 0.0 : 1.0,
                      bad.empty() ? "P~(t) TP2 at t in {0.5,1,5,25,delta}" : "not TP2 at t = " + bad);
}

inline CheckResult check_observation_tp2(const ObservationModel& obs) {
  bool ok = obs.tp2();
  return {"observation_tp2", ok ? CheckStatus::kPass : CheckStatus::kWarn, ok ? 0.0 : 1.0,
          ok ? "D is TP2" : "D is not TP2; MLR properties are not guaranteed"};
}

/// p_{i,fail}(t) nondecreasing in i.
inline CheckResult check_fail_monotone(const SurrogateModel& m, double horizon) {
  std::vector<double> ts = {0.5, 1, 5, 25, horizon};
  double worst = 0;
  std::string where;
  for (double t : ts) {
    const Vec& f = m.kernel(t)->fail;
    for (Eigen::Index i = 1; i < f.size(); ++i) {
      double drop = f(i - 1) - f(i);
      if (drop > worst) {
        worst = drop;
        std::ostringstream os;
        os << "largest decrease at t=" << t << " between states " << i << " and " << i + 1;
        where = os.str();
      }
    }
  }
  if (worst <= 1e-12) where = "nondecreasing at t in {0.5,1,5,25,H}";
  return detail::make("fail_prob_monotone", worst <= 1e-12, worst, where);
}

/// Hazard certificate; failure downgrades the solver to n-hat = N.
inline CheckResult check_hazard_certificate(const SurrogateModel& m) {
  auto h = check_hazard_monotone(m);
  if (h.ok) return {"hazard_certificate", CheckStatus::kPass, 0, "ok"};
  return {"hazard_certificate", CheckStatus::kWarn, 1,
          h.reason + " (state " + std::to_string(h.index + 1) + "); n-hat set to N"};
}

/// Two-sample KS distance between the surrogate's absorption time and the
/// direct construction T13 if T13 <= T12, else T12 + T23, with T12 and T23
/// drawn from the Erlang-mixture approximants.
inline CheckResult check_absorption_ks(const SurrogateModel& m, const DistributionSpec& G, const DistributionSpec& F,
                                  std::uint64_t seed, int samples = 100000) {
  if (m.variant() == SurrogateVariant::kRateMatrix)
    return {"absorption_ks", CheckStatus::kSkip, 0, "rate-matrix model has no direct construction"};
  const double lambda = m.lambda();
  ErlangMixture t23 = erlang_mixture_approx(F, m.m2(), lambda);
  std::optional<ErlangMixture> t12;
  if (m.variant() == SurrogateVariant::kErlangMixtureStart) t12 = erlang_mixture_approx(G, m.m1(), lambda - m.zeta());
  Stream a(derive_seed(seed, 0x6b73, 0)), b(derive_seed(seed, 0x6b73, 1));
  std::vector<double> xa(samples), xb(samples);
  for (int i = 0; i < samples; ++i) xa[i] = absorption_sampler(m, a);
  for (int i = 0; i < samples; ++i) {
    double T12 = t12 ? t12->sample(b) : G.sample(b);
    double T13 = m.zeta() > 0 ? b.exponential(m.zeta()) : std::numeric_limits<double>::infinity();
    double T23 = t23.sample(b);
    xb[i] = T13 <= T12 ? T13 : T12 + T23;
  }
  double ks = ks_two_sample(xa, xb);
  return detail::make("absorption_ks", ks < 0.01, ks, "two-sample KS at " + std::to_string(samples) + " draws");
}

/// Value of the solved policy: min of abort and the one-step lookahead.
inline double policy_value(const AlphaPolicy& p, int n, const Vec& pi) {
  return std::min(p.value_model().v_ab(n, pi), p.continue_value(n, pi));
}

inline CheckResult check_concavity(const AlphaPolicy& p, Stream& s, int samples = 1000) {
  const int d = p.value_model().dim();
  const int N = p.value_model().N();
  double worst = 0;
  for (int i = 0; i < samples; ++i) {
    int n = static_cast<int>(s.uniform() * N) % N;
    Vec a = detail::random_belief(d, s), b = detail::random_sparse_belief(d, s);
    double t = s.uniform();
    double lhs = policy_value(p, n, t * a + (1 - t) * b);
    double rhs = t * policy_value(p, n, a) + (1 - t) * policy_value(p, n, b);
    worst = std::max(worst, rhs - lhs);
  }
  return detail::make("value_concavity", worst <= 1e-9 * std::max(1.0, p.value_model().cost().Cs), worst,
                      "max chord excess over " + std::to_string(samples) + " triples");
}

inline CheckResult check_mlr_monotone(const AlphaPolicy& p, Stream& s, int samples = 1000) {
  const int d = p.value_model().dim();
  const int N = p.value_model().N();
  double worst = 0;
  for (int i = 0; i < samples; ++i) {
    int n = static_cast<int>(s.uniform() * N) % N;
    Vec b = detail::random_belief(d, s);
    Vec a = detail::mlr_dominating(b, s);
    worst = std::max(worst, policy_value(p, n, b) - policy_value(p, n, a));
  }
  return detail::make("value_mlr_monotone", worst <= 1e-6, worst,
                      "max V(n,b) - V(n,a) over " + std::to_string(samples) + " pairs with a >=_LR b");
}

/// Midpoints of abort beliefs are abort beliefs.
inline CheckResult check_convex_abort(const AlphaPolicy& p, Stream& s, int probes = 1000) {
  const auto& vm = p.value_model();
  const int d = vm.dim();
  const int hat = p.thresholds().hat_n;
  if (hat <= 0) return {"convex_abort_region", CheckStatus::kSkip, 0, "abort never optimal"};
  std::vector<std::vector<Vec>> pool(hat);
  int found = 0;
  for (int i = 0; i < 200000 && found < 4 * probes; ++i) {
    int n = static_cast<int>(s.uniform() * hat) % hat;
    Vec pi = detail::mlr_dominating(detail::random_belief(d, s), s);
    if (p.action(n, pi) == Action::kAbort) {
      pool[n].push_back(pi);
      ++found;
    }
  }
  int done = 0, bad = 0;
  for (int i = 0; i < 100 * probes && done < probes; ++i) {
    int n = static_cast<int>(s.uniform() * hat) % hat;
    if (pool[n].size() < 2) continue;
    const Vec& a = pool[n][static_cast<std::size_t>(s.uniform() * pool[n].size()) % pool[n].size()];
    const Vec& b = pool[n][static_cast<std::size_t>(s.uniform() * pool[n].size()) % pool[n].size()];
    if (p.action(n, 0.5 * (a + b)) != Action::kAbort) ++bad;
    ++done;
  }
  if (done == 0) return {"convex_abort_region", CheckStatus::kSkip, 0, "no abort beliefs sampled"};
  return detail::make("convex_abort_region", bad == 0, bad,
                      std::to_string(bad) + " of " + std::to_string(done) + " midpoints left the abort region");
}

/// n-hat: no abort at or after it; n-tilde: the vertex recursion agrees.
inline CheckResult check_thresholds(const AlphaPolicy& p, Stream& s) {
  const auto& vm = p.value_model();
  const auto& th = p.thresholds();
  const int d = vm.dim();
  const int N = vm.N();
  double worst = 0;
  std::ostringstream os;
  for (int n = th.hat_n; n < N; ++n)
    for (int i = 0; i < 200; ++i) {
      Vec pi = i < d ? Vec(Vec::Unit(d, i)) : detail::random_belief(d, s);
      worst = std::max(worst, vm.v_c_upper(n, pi) - vm.v_ab(n, pi));
    }
  bool ok = worst <= 1e-9 * std::max(1.0, vm.cost().Cs);
  os << "n_hat=" << th.hat_n;
  if (!vm.cost().multi()) {
    auto vr = vertex_recursion(vm);
    auto tilde = find_tilde_n(vm);
    if (tilde != th.tilde_n) ok = false;
    if (tilde) {
      for (int n = 0; n <= *tilde; ++n)
        if (!(vr.vc[n] > vr.vab[n])) {
          ok = false;
          os << " vertex condition broken at " << n;
          break;
        }
      if (!th.never_abort && th.hat_n >= 1 && !(*tilde < th.hat_n)) {
        ok = false;
        os << " order n_tilde < n_hat broken";
      }
    }
    os << " n_tilde=" << (tilde ? std::to_string(*tilde) : "none");
  }
  return detail::make("threshold_certificates", ok, std::max(worst, 0.0), os.str());
}

inline CheckResult check_spherical_roundtrip(int d, Stream& s, int samples = 1000) {
  double worst = 0;
  for (int i = 0; i < samples; ++i) {
    Vec p = i % 3 ? detail::random_belief(d, s) : detail::random_sparse_belief(d, s);
    if (spherical_radius(p) < 1e-12) continue;
    Vec q = from_spherical(to_spherical(p));
    worst = std::max(worst, (q - p).cwiseAbs().maxCoeff());
  }
  return detail::make("spherical_roundtrip", worst <= 1e-10, worst, "max |p - from(to(p))|");
}

/// Angle update of the single-phase second chain against the angles of the
/// Bayes-updated belief.
inline CheckResult check_dimred_angles(const ValueModel& vm1, Stream& s, int samples = 1000) {
  if (vm1.model().m2() != 1) return {"dimred_angles", CheckStatus::kSkip, 0, "requires m2 = 1"};
  const int d = vm1.dim();
  double worst = 0;
  int used = 0;
  for (int i = 0; i < samples; ++i) {
    Vec pi = detail::random_belief(d, s);
    auto sb = to_spherical(pi);
    auto next = dimred_next_angles(vm1.Ptilde(), sb.phi);
    for (int k = 1; k <= vm1.K(); ++k) {
      Vec post = bayes_update(pi, k, vm1.Ptilde(), vm1.obs(), vm1.model().m1());
      if (spherical_radius(post) < 1e-9) continue;
      auto ref = to_spherical(post).phi;
      for (std::size_t j = 0; j < ref.size(); ++j) worst = std::max(worst, std::abs(ref[j] - next[j]));
      ++used;
    }
  }
  return detail::make("dimred_angles", worst <= 1e-8, worst,
                      "max angle difference over " + std::to_string(used) + " updates");
}

struct ValidationInputs {
  std::string instance;
  std::shared_ptr<const ValueModel> vm;
  /// Solved policy on vm; value-function checks are skipped when null.
  std::shared_ptr<const AlphaPolicy> policy;
  /// Companion model with a single second-chain phase, for the angle check.
  std::shared_ptr<const ValueModel> one_phase;
  DistributionSpec G = DistributionSpec::exponential(1);
  DistributionSpec F = DistributionSpec::exponential(1);
  std::uint64_t seed = 1;
  int ks_samples = 100000;
  int samples = 1000;
};

inline ValidationReport run_validation(const ValidationInputs& in) {
  ValidationReport r;
  r.instance = in.instance;
  const auto& vm = *in.vm;
  const auto& m = vm.model();
  Stream s(derive_seed(in.seed, 0x76616c, 0));
  auto viol = m.violations();
  r.checks.push_back(detail::make("model_invariants", viol.empty(), static_cast<double>(viol.size()),
                                  viol.empty() ? "Q, pi0 valid" : viol.front()));
  r.checks.push_back(check_simplex_preservation(vm, s, in.samples));
  r.checks.push_back(check_semigroup(m));
  r.checks.push_back(check_ptilde_tp2(m, vm.cost().delta));
  r.checks.push_back(check_observation_tp2(vm.obs()));
  r.checks.push_back(check_hazard_certificate(m));
  r.checks.push_back(check_fail_monotone(m, vm.cost().H() + vm.cost().wN()));
  r.checks.push_back(check_absorption_ks(m, in.G, in.F, in.seed, in.ks_samples));
  if (in.policy) {
    r.checks.push_back(check_concavity(*in.policy, s, in.samples));
    r.checks.push_back(check_mlr_monotone(*in.policy, s, in.samples));
    r.checks.push_back(check_convex_abort(*in.policy, s, in.samples));
    r.checks.push_back(check_thresholds(*in.policy, s));
  } else {
    for (const char* n : {"value_concavity", "value_mlr_monotone", "convex_abort_region", "threshold_certificates"})
      r.checks.push_back({n, CheckStatus::kSkip, 0, "no solved policy"});
  }
  r.checks.push_back(check_spherical_roundtrip(vm.dim(), s, in.samples));
  if (in.one_phase) r.checks.push_back(check_dimred_angles(*in.one_phase, s, in.samples));
  else r.checks.push_back({"dimred_angles", CheckStatus::kSkip, 0, "no single-phase companion"});
  return r;
}

}  // namespace mabort

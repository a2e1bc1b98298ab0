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
#include "mabort/parallel.hpp"
#include "mabort/rule.hpp"
#include "mabort/sim.hpp"
#include "mabort/solve/exact.hpp"
#include "mabort/solve/policy.hpp"
#include "mabort/value.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace mabort {

/// True when the trailing window of length Nc of the signal history holds at
/// least mc warnings (signal value K).
inline bool c_policy_action(const std::vector<int>& history, int mc, int Nc, int K) {
  if (mc < 1 || mc > Nc) throw ConfigError("c-policy: need 1 <= m <= N");
  int count = 0;
  const int n = static_cast<int>(history.size());
  for (int i = std::max(0, n - Nc); i < n; ++i) count += history[i] == K;
  return count >= mc;
}

/// Abort on receiving mc warning signals in Nc consecutive periods.
class CountingPolicy : public AbortRule {
 public:
  CountingPolicy(int mc, int Nc, int K) : mc_(mc), Nc_(Nc), K_(K) {
    if (mc < 1 || mc > Nc) throw ConfigError("c-policy: need 1 <= m <= N");
    if (K < 1) throw ConfigError("c-policy: K must be >= 1");
  }
  int m() const { return mc_; }
  int window() const { return Nc_; }

  std::unique_ptr<Episode> start() const override {
    struct E : Episode {
      const CountingPolicy* p;
      std::deque<int> win;
      int count = 0;
      explicit E(const CountingPolicy* q) : p(q) {}
      Action step(int, int signal) override {
        win.push_back(signal == p->K_);
        count += win.back();
        if (static_cast<int>(win.size()) > p->Nc_) {
          count -= win.front();
          win.pop_front();
        }
        return count >= p->mc_ ? Action::kAbort : Action::kContinue;
      }
      std::string summary() const override { return "warnings=" + std::to_string(count); }
    };
    return std::make_unique<E>(this);
  }
  std::string name() const override { return "C-policy"; }

 private:
  int mc_, Nc_, K_;
};

/// Time left for the mission and the final stop phase at period n.
inline double remaining_time(const CostModel& c, int n) { return (c.N - n) * c.delta + c.wN(); }

/// p-th percentile of the residual life from belief pi, by bisection on
/// kappa(t, pi) = p/100. Empty when the percentile lies beyond 10 horizons.
inline std::optional<double> rul_percentile(const SurrogateModel& m, const Vec& pi, double p, double horizon,
                                            double tol = 1e-10) {
  if (!(p > 0 && p < 100)) throw ConfigError("r-policy: p must lie in (0, 100)");
  const double target = p / 100;
  double hi = 10 * horizon;
  if (kappa(m, pi, hi) < target) return std::nullopt;
  double lo = 0;
  while (hi - lo > tol * std::max(1.0, hi)) {
    double mid = 0.5 * (lo + hi);
    if (kappa(m, pi, mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Abort iff the p-th RUL percentile is shorter than the remaining time.
inline Action r_policy_action(const Vec& pi, int n, double p, const SurrogateModel& m, const CostModel& c) {
  auto tp = rul_percentile(m, pi, p, c.H() + c.wN());
  if (!tp) return Action::kContinue;
  return *tp < remaining_time(c, n) ? Action::kAbort : Action::kContinue;
}

/// RUL-percentile rule on the surrogate filter. Since kappa(., pi) is
/// nondecreasing, t_p < T iff kappa(T, pi) > p/100, which is what the
/// episode evaluates.
class RulPolicy : public AbortRule {
 public:
  RulPolicy(std::shared_ptr<const ValueModel> vm, double p) : vm_(std::move(vm)), p_(p) {
    if (!(p > 0 && p < 100)) throw ConfigError("r-policy: p must lie in (0, 100)");
    const auto& c = vm_->cost();
    for (int n = 0; n <= c.N; ++n) fail_.push_back(vm_->fail(remaining_time(c, n)));
  }
  double p() const { return p_; }

  /// kappa of the remaining time at period n.
  double score(int n, const Vec& pi) const { return pi.dot(fail_.at(n)); }

  std::unique_ptr<Episode> start() const override {
    struct E : Episode {
      const RulPolicy* p;
      BeliefFilter f;
      Vec pi;
      double s = 0;
      explicit E(const RulPolicy* q)
          : p(q), f(q->vm_->model(), q->vm_->obs(), q->vm_->cost().delta), pi(q->vm_->model().pi0()) {}
      Action step(int n, int signal) override {
        pi = f.update(pi, signal);
        renormalize(pi);
        s = p->score(n, pi);
        return s > p->p_ / 100 ? Action::kAbort : Action::kContinue;
      }
      std::string summary() const override {
        std::ostringstream os;
        os << "kappa=" << s;
        return os.str();
      }
    };
    return std::make_unique<E>(this);
  }
  std::string name() const override { return "R-policy"; }

 private:
  std::shared_ptr<const ValueModel> vm_;
  double p_;
  std::vector<Vec> fail_;
};

/// Three-state Markov model with mean-matched rates.
inline SurrogateModel m_policy_model(const DistributionSpec& G, const DistributionSpec& F, double zeta) {
  Mat Q = Mat::Zero(3, 3);
  Q(0, 1) = 1 / G.mean();
  Q(0, 2) = zeta;
  Q(1, 2) = 1 / F.mean();
  Vec pi0 = Vec::Zero(2);
  pi0(0) = 1;
  return surrogate_from_rates(Q, pi0, 1, 1);
}

inline std::shared_ptr<ControlLimitPolicy> build_m_policy(const DistributionSpec& G, const DistributionSpec& F,
                                                          double zeta, const CostModel& cost,
                                                          const ObservationModel& obs, double granularity = 0.01) {
  auto vm = std::make_shared<const ValueModel>(m_policy_model(G, F, zeta), cost, obs);
  auto p = exact_backward_ctmc(vm, granularity);
  p->set_name("M-policy");
  return p;
}

/// Surrogate with a single phase for the defective sojourn (rate 1/mean(F));
/// an Erlang G keeps its phases, any other G uses m1 phases at the same rate.
inline SurrogateModel one_phase_model(const DistributionSpec& G, const DistributionSpec& F, double zeta,
                                      int m1 = 1) {
  const double lambda = 1 / F.mean();
  if (G.kind() == DistributionSpec::Kind::kErlang) return build_surrogate_deterministic_start(G, F, zeta, 1, lambda);
  return build_surrogate(G, F, zeta, m1, 1, lambda);
}

inline std::shared_ptr<ControlLimitPolicy> build_one_phase(const DistributionSpec& G, const DistributionSpec& F,
                                                           double zeta, const CostModel& cost,
                                                           const ObservationModel& obs, double granularity = 0.01,
                                                           int m1 = 1) {
  auto vm = std::make_shared<const ValueModel>(one_phase_model(G, F, zeta, m1), cost, obs);
  std::shared_ptr<ControlLimitPolicy> p =
      vm->model().m1() == 1 ? exact_backward_ctmc(vm, granularity) : exact_backward_dimred(vm, granularity);
  p->set_name("one-phase");
  return p;
}

struct TunePoint {
  nlohmann::json params;
  double mean_cost = 0;
  double ci95 = 0;
};

struct BenchmarkPolicy {
  std::string kind;
  nlohmann::json params;
  std::shared_ptr<AbortRule> rule;
  std::vector<TunePoint> tuning;

  nlohmann::json to_json() const {
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& t : tuning) grid.push_back({{"params", t.params}, {"mean_cost", t.mean_cost}, {"ci95", t.ci95}});
    return {{"kind", kind}, {"params", params}, {"tuning", grid}};
  }

  void write_tuning_csv(std::ostream& os) const {
    os << "kind,params,mean_cost,ci95\n";
    for (const auto& t : tuning) {
      std::string s = t.params.dump();
      std::replace(s.begin(), s.end(), ',', ';');
      os << kind << ',' << s << ',' << t.mean_cost << ',' << t.ci95 << '\n';
    }
  }
};

/// Seed for tuning runs, independent of the evaluation stream.
inline std::uint64_t tuning_seed(std::uint64_t seed, std::uint64_t family) {
  return derive_seed(seed, 0x74756e65ULL, family);
}

struct TuneCandidate {
  nlohmann::json params;
  std::shared_ptr<AbortRule> rule;
};

/// Grid search under common random numbers; the first minimizer in grid
/// order wins.
inline BenchmarkPolicy tune(const std::string& kind, const std::vector<TuneCandidate>& grid, const TruthSpec& spec,
                            long reps, std::uint64_t seed, unsigned threads = 1) {
  if (grid.empty()) throw ConfigError("tune: empty grid");
  BenchmarkPolicy out;
  out.kind = kind;
  // draw the paths once and reuse them for every grid point
  std::vector<ReplicationStreams> paths(reps);
  parallel_for(reps, threads, [&](std::size_t i) { paths[i] = draw_replication(spec, seed, static_cast<long>(i)); });
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<ReplicationResult> res(reps);
    parallel_for(reps, threads, [&](std::size_t i) {
      res[i] = run_replication(*grid[g].rule, spec, paths[i].tr, paths[i].y);
    });
    auto s = summarize(grid[g].rule->name(), res, false);
    out.tuning.push_back({grid[g].params, s.mean_cost, s.ci95});
    if (s.mean_cost < out.tuning[best].mean_cost) best = g;
  }
  out.params = grid[best].params;
  out.rule = grid[best].rule;
  return out;
}

struct CGrid {
  int m_max = 5;
  int N_max = 10;
};

inline BenchmarkPolicy tune_c_policy(const TruthSpec& spec, long reps, std::uint64_t seed, CGrid g = {},
                                     unsigned threads = 1) {
  std::vector<TuneCandidate> grid;
  for (int m = 1; m <= g.m_max; ++m)
    for (int n = m; n <= g.N_max; ++n)
      grid.push_back({{{"m", m}, {"N", n}}, std::make_shared<CountingPolicy>(m, n, spec.obs.K())});
  return tune("c-policy", grid, spec, reps, seed, threads);
}

/// R-policy tuning: each replication's score sequence kappa(T_n, pi_n) is
/// computed once, then every p on the grid is scanned.
inline BenchmarkPolicy tune_r_policy(std::shared_ptr<const ValueModel> vm, const TruthSpec& spec, long reps,
                                     std::uint64_t seed, std::vector<double> ps = {}, unsigned threads = 1) {
  if (ps.empty())
    for (int p = 1; p <= 99; ++p) ps.push_back(p);
  for (double p : ps)
    if (!(p > 0 && p < 100)) throw ConfigError("r-policy: p must lie in (0, 100)");
  const int N = spec.cost.N;
  const int P = static_cast<int>(ps.size());
  RulPolicy probe(vm, 50);
  std::vector<ReplicationResult> res(static_cast<std::size_t>(reps) * P);
  parallel_for(reps, threads, [&](std::size_t i) {
    auto d = draw_replication(spec, seed, static_cast<long>(i));
    BeliefFilter f(vm->model(), vm->obs(), vm->cost().delta);
    Vec pi = vm->model().pi0();
    std::vector<double> score;
    bool diag = false;
    try {
      for (int n = 1; n < N; ++n) {
        if (d.y[n] == 0) break;
        pi = f.update(pi, d.y[n]);
        renormalize(pi);
        score.push_back(probe.score(n, pi));
      }
    } catch (const ImpossibleObservation&) {
      diag = true;
    }
    for (int j = 0; j < P; ++j) {
      ReplicationResult& r = res[i * P + j];
      if (diag) {
        r.diagnostic = true;
        continue;
      }
      r.stop = N;
      for (std::size_t k = 0; k < score.size(); ++k)
        if (score[k] > ps[j] / 100) {
          r.stop = static_cast<int>(k) + 1;
          r.aborted = true;
          break;
        }
      settle(spec, d.tr, r);
    }
  });
  BenchmarkPolicy out;
  out.kind = "r-policy";
  int best = 0;
  for (int j = 0; j < P; ++j) {
    std::vector<ReplicationResult> col(reps);
    for (long i = 0; i < reps; ++i) col[i] = res[i * P + j];
    auto s = summarize("R-policy", col, false);
    out.tuning.push_back({{{"p", ps[j]}}, s.mean_cost, s.ci95});
    if (s.mean_cost < out.tuning[best].mean_cost) best = j;
  }
  out.params = {{"p", ps[best]}};
  out.rule = std::make_shared<RulPolicy>(vm, ps[best]);
  return out;
}

}  // namespace mabort

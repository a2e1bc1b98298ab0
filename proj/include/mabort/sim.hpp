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
#include "mabort/dist.hpp"
#include "mabort/parallel.hpp"
#include "mabort/rng.hpp"
#include "mabort/rule.hpp"
#include "mabort/value.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace mabort {

/// Ground truth: semi-Markov deterioration, signals, costs and schedule.
struct TruthSpec {
  DistributionSpec G = DistributionSpec::exponential(1);
  DistributionSpec F = DistributionSpec::exponential(1);
  double zeta = 0;
  ObservationModel obs;
  CostModel cost;
};

enum class LatentState { kHealthy = 1, kDefective = 2, kFailed = 3 };

/// One draw of the latent path; X(t) is right-continuous.
struct Trajectory {
  double T12 = 0, T13 = 0, T23 = 0;
  /// Failure time.
  double xi = 0;

  bool visits_defective() const { return T12 < T13; }

  LatentState state(double t) const {
    if (t >= xi) return LatentState::kFailed;
    if (visits_defective() && t >= T12) return LatentState::kDefective;
    return LatentState::kHealthy;
  }
};

inline Trajectory simulate_truth(const TruthSpec& spec, Stream& s) {
  Trajectory tr;
  tr.T12 = spec.G.sample(s);
  tr.T13 = spec.zeta > 0 ? s.exponential(spec.zeta) : std::numeric_limits<double>::infinity();
  tr.T23 = spec.F.sample(s);
  tr.xi = tr.T13 <= tr.T12 ? tr.T13 : tr.T12 + tr.T23;
  return tr;
}

/// Y_1..Y_N (index 0 unused): emissions by cluster, 0 once failed.
inline std::vector<int> gen_signals(const Trajectory& tr, const ObservationModel& obs, double delta, int N,
                                    Stream& s) {
  std::vector<int> y(N + 1, 0);
  for (int n = 1; n <= N; ++n) {
    double u = s.uniform();
    LatentState x = tr.state(n * delta);
    if (x == LatentState::kFailed) continue;
    int cluster = x == LatentState::kHealthy ? 0 : 1;
    int k = 1;
    double acc = obs.emission(cluster, 1);
    while (k < obs.K() && u > acc) acc += obs.emission(cluster, ++k);
    y[n] = k;
  }
  return y;
}

enum class Outcome { kFailedDuringMission, kFailedDuringStop, kAbortedSurvived, kCompletedSurvived };

struct ReplicationResult {
  double cost = 0;
  Outcome outcome = Outcome::kCompletedSurvived;
  bool aborted = false;
  int stop = 0;
  bool diagnostic = false;
};

/// Realized cost of stopping at period `stop` (abort when aborted, else the
/// mission ran to N).
inline double realized_cost(const TruthSpec& spec, const Trajectory& tr, int stop, bool aborted) {
  const auto& c = spec.cost;
  const double T = stop * c.delta;
  const double end = T + c.w[stop];
  const bool failed = tr.xi <= end;
  auto cum = c.cumulative();
  double cost = failed ? c.Cs : 0.0;
  for (int l = 0; l < c.L(); ++l) {
    bool last = l == c.L() - 1;
    bool done = last ? (!aborted && stop == c.N && !failed) : (stop >= cum[l] && tr.xi > cum[l] * c.delta);
    if (!done) cost += c.Cm[l];
  }
  if (c.Cr > 0 && !failed && tr.state(end) == LatentState::kDefective) cost += c.Cr;
  return cost;
}

/// Fills cost and outcome once r.stop and r.aborted are set.
inline void settle(const TruthSpec& spec, const Trajectory& tr, ReplicationResult& r) {
  const double T = r.stop * spec.cost.delta;
  r.cost = realized_cost(spec, tr, r.stop, r.aborted);
  if (tr.xi <= T) r.outcome = Outcome::kFailedDuringMission;
  else if (tr.xi <= T + spec.cost.w[r.stop]) r.outcome = Outcome::kFailedDuringStop;
  else r.outcome = r.aborted ? Outcome::kAbortedSurvived : Outcome::kCompletedSurvived;
}

struct TraceOptions {
  std::ostream* out = nullptr;
  int reps = 0;
};

/// Runs one replication of a rule on a given path and signal sequence.
inline ReplicationResult run_replication(const AbortRule& rule, const TruthSpec& spec, const Trajectory& tr,
                                         const std::vector<int>& y, int rep = -1, const TraceOptions* trace = nullptr) {
  const auto& c = spec.cost;
  ReplicationResult r;
  r.stop = c.N;
  auto ep = rule.start();
  const bool tracing = trace && trace->out && rep >= 0 && rep < trace->reps;
  try {
    for (int n = 1; n < c.N; ++n) {
      if (y[n] == 0) break;
      Action a = ep->step(n, y[n]);
      if (tracing)
        *trace->out << rule.name() << ',' << rep << ',' << n << ',' << y[n] << ',' << ep->summary() << ','
                    << to_string(a) << '\n';
      if (a == Action::kAbort) {
        r.stop = n;
        r.aborted = true;
        break;
      }
    }
  } catch (const ImpossibleObservation&) {
    r.diagnostic = true;
    return r;
  }
  settle(spec, tr, r);
  return r;
}

struct RolloutSummary {
  std::string policy;
  long reps = 0;
  double mean_cost = 0;
  double ci95 = 0;
  double success_prob = 0;
  double failure_prob = 0;
  double abort_rate = 0;
  double abort_survive_prob = 0;
  double mean_abort_period = 0;
  long diagnostics = 0;
  std::vector<double> costs;
};

struct RolloutOptions {
  unsigned threads = 1;
  bool keep_costs = false;
  TraceOptions trace;
};

/// Common random numbers: replication i uses the same latent path and signal
/// draws for every rule evaluated with the same master seed.
struct ReplicationStreams {
  Trajectory tr;
  std::vector<int> y;
};

inline ReplicationStreams draw_replication(const TruthSpec& spec, std::uint64_t seed, long rep) {
  Stream truth(derive_seed(seed, static_cast<std::uint64_t>(rep), 0));
  Stream sig(derive_seed(seed, static_cast<std::uint64_t>(rep), 1));
  ReplicationStreams r;
  r.tr = simulate_truth(spec, truth);
  r.y = gen_signals(r.tr, spec.obs, spec.cost.delta, spec.cost.N, sig);
  return r;
}

inline RolloutSummary summarize(const std::string& name, const std::vector<ReplicationResult>& res,
                                bool keep_costs) {
  RolloutSummary s;
  s.policy = name;
  double sum = 0, sq = 0, abort_periods = 0;
  long n = 0, success = 0, failure = 0, aborts = 0, abort_survive = 0;
  for (const auto& r : res) {
    if (r.diagnostic) {
      ++s.diagnostics;
      continue;
    }
    ++n;
    sum += r.cost;
    sq += r.cost * r.cost;
    if (keep_costs) s.costs.push_back(r.cost);
    switch (r.outcome) {
      case Outcome::kCompletedSurvived: ++success; break;
      case Outcome::kAbortedSurvived: ++abort_survive; break;
      default: ++failure;
    }
    if (r.aborted) {
      ++aborts;
      abort_periods += r.stop;
    }
  }
  s.reps = n;
  if (n > 0) {
    s.mean_cost = sum / n;
    double var = n > 1 ? (sq - sum * sum / n) / (n - 1) : 0.0;
    s.ci95 = 1.96 * std::sqrt(std::max(var, 0.0) / n);
    s.success_prob = static_cast<double>(success) / n;
    s.failure_prob = static_cast<double>(failure) / n;
    s.abort_survive_prob = static_cast<double>(abort_survive) / n;
    s.abort_rate = static_cast<double>(aborts) / n;
    s.mean_abort_period = aborts ? abort_periods / aborts : 0.0;
  }
  const long total = static_cast<long>(res.size());
  if (total > 0 && s.diagnostics * 1000 > total)
    throw ModelError("rollout: impossible observations in more than 0.1% of replications (" +
                     std::to_string(s.diagnostics) + ")");
  return s;
}

inline RolloutSummary rollout(const AbortRule& rule, const TruthSpec& spec, long reps, std::uint64_t seed,
                              const RolloutOptions& opt = {}) {
  std::vector<ReplicationResult> res(reps);
  parallel_for(reps, opt.threads, [&](std::size_t i) {
    auto d = draw_replication(spec, seed, static_cast<long>(i));
    res[i] = run_replication(rule, spec, d.tr, d.y, static_cast<int>(i), &opt.trace);
  });
  return summarize(rule.name(), res, opt.keep_costs);
}

/// Two-sided KS statistic of a sample against a reference CDF.
template <class Cdf>
double ks_distance(std::vector<double> samples, Cdf&& cdf) {
  if (samples.empty()) throw ConfigError("ks_distance: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double f = cdf(samples[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Two-sample KS statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

}  // namespace mabort

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

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace mabort {

/// Costs, period length and rescue schedule. A single mission is the case
/// L = 1 with Cr = 0.
struct CostModel {
  double Cs = 0;
  std::vector<double> Cm;
  double Cr = 0;
  double delta = 1;
  int N = 0;
  /// Rescue time w_0..w_N.
  std::vector<double> w;
  /// N_1..N_L, summing to N.
  std::vector<int> task_lengths;

  static CostModel single(double Cs, double Cm, double delta, int N, std::vector<double> w) {
    CostModel c;
    c.Cs = Cs;
    c.Cm = {Cm};
    c.delta = delta;
    c.N = N;
    c.w = std::move(w);
    c.task_lengths = {N};
    c.validate();
    return c;
  }

  int L() const { return static_cast<int>(Cm.size()); }
  bool multi() const { return L() > 1 || Cr != 0; }
  double H() const { return N * delta; }
  double wN() const { return w.back(); }

  /// Cumulative task boundaries cum_1..cum_L.
  std::vector<int> cumulative() const {
    std::vector<int> c(task_lengths.size());
    std::partial_sum(task_lengths.begin(), task_lengths.end(), c.begin());
    return c;
  }

  /// Mission cost at stake when the system is lost or the mission abandoned
  /// at period n: every mission not yet finished, the last one always.
  double mission_loss(int n) const {
    auto cum = cumulative();
    double s = 0;
    for (int l = 0; l < L(); ++l)
      if (n < cum[l] || l == L() - 1) s += Cm[l];
    return s;
  }

  void validate() const {
    if (N < 1) throw ConfigError("cost: N must be >= 1");
    if (!(delta > 0)) throw ConfigError("cost: delta must be positive");
    if (!(Cs >= 0)) throw ConfigError("cost: Cs must be nonnegative");
    if (Cm.empty()) throw ConfigError("cost: Cm is empty");
    for (double c : Cm)
      if (!(c >= 0)) throw ConfigError("cost: Cm must be nonnegative");
    if (!(Cr >= 0)) throw ConfigError("cost: Cr must be nonnegative");
    if (static_cast<int>(w.size()) != N + 1) throw ConfigError("cost: rescue schedule needs N + 1 entries");
    if (w[0] != 0) throw ConfigError("cost: w_0 must be 0");
    for (double x : w)
      if (!(x >= 0)) throw ConfigError("cost: rescue times must be nonnegative");
    if (task_lengths.size() != Cm.size()) throw ConfigError("cost: task_lengths and Cm differ in length");
    if (std::accumulate(task_lengths.begin(), task_lengths.end(), 0) != N)
      throw ConfigError("cost: task lengths must sum to N");
    if (!multi()) {
      for (int n = 1; n <= N; ++n)
        if (w[n] < w[n - 1]) throw ConfigError("cost: rescue schedule must be nondecreasing");
      for (int n = 0; n <= N; ++n)
        if (w[n] > (N - n) * delta + wN() + 1e-12)
          throw ConfigError("cost: rescue time exceeds the time to finish the mission");
    }
  }

  nlohmann::json to_json() const {
    return {{"Cs", Cs}, {"Cm", Cm}, {"Cr", Cr}, {"delta", delta}, {"N", N}, {"w", w}, {"task_lengths", task_lengths}};
  }
};

/// Rescue schedule w_n = min(n delta, cap).
inline std::vector<double> ramp_schedule(int N, double delta, double cap) {
  std::vector<double> w(N + 1);
  for (int n = 0; n <= N; ++n) w[n] = std::min(n * delta, cap);
  return w;
}

/// Depot-to-site rescue times for three sites visited in sequence.
inline std::vector<double> cosine_schedule(int N) {
  std::vector<double> w(N + 1);
  for (int n = 0; n <= N; ++n) {
    double x = n;
    if (n < 25) w[n] = x;
    else if (n < 60) w[n] = 25;
    else if (n < 85) w[n] = std::sqrt(625 + (x - 60) * (x - 85));
    else if (n < 110) w[n] = 25;
    else if (n < 135) w[n] = std::sqrt(625 + (x - 110) * (x - 135));
    else w[n] = 25;
  }
  return w;
}

/// Linear coefficient vectors of the Bellman building blocks for one model
/// and cost structure. Values at a belief are dot products.
class ValueModel {
 public:
  ValueModel(SurrogateModel model, CostModel cost, ObservationModel obs)
      : model_(std::move(model)), cost_(std::move(cost)), obs_(std::move(obs)) {
    cost_.validate();
    if (obs_.K() < 1) throw ConfigError("observation model is empty");
    const int N = cost_.N;
    step_ = model_.kernel(cost_.delta);
    mask_ = model_.defective_mask();
    abort_.resize(N + 1);
    upper_.resize(N + 1);
    for (int n = 0; n <= N; ++n) {
      abort_[n] = abort_coeff(n);
      upper_[n] = upper_coeff(n);
    }
    terminal_ = (cost_.Cs + cost_.Cm.back()) * fail(cost_.wN()) + repair(cost_.wN());
    for (int k = 1; k <= obs_.K(); ++k) lifted_.push_back(obs_.lifted(k, model_.m1(), model_.m2()));
  }

  const SurrogateModel& model() const { return model_; }
  const CostModel& cost() const { return cost_; }
  const ObservationModel& obs() const { return obs_; }
  int dim() const { return model_.dim(); }
  int N() const { return cost_.N; }
  int K() const { return obs_.K(); }
  const Mat& Ptilde() const { return step_->Ptilde; }
  const Vec& step_fail() const { return step_->fail; }
  const Vec& lifted(int k) const { return lifted_[k - 1]; }

  /// p_{.,fail}(t).
  Vec fail(double t) const { return t == 0 ? Vec::Zero(dim()) : Vec(model_.kernel(t)->fail); }

  /// Coefficients of V_ab(n, .).
  const Vec& abort_alpha(int n) const { return abort_.at(n); }
  /// Coefficients of the continue-to-the-end bound at n.
  const Vec& upper_alpha(int n) const { return upper_.at(n); }
  /// Coefficients of the terminal cost at N.
  const Vec& terminal_alpha() const { return terminal_; }

  double v_ab(int n, const Vec& pi) const {
    check_n(n);
    return abort_[n].dot(pi);
  }

  double v_c_upper(int n, const Vec& pi) const {
    check_n(n);
    return upper_[n].dot(pi);
  }

  double kappa(const Vec& pi, double t) const { return mabort::kappa(model_, pi, t); }

  /// Cost of failing during the next period, as coefficients.
  Vec step_loss_alpha(int n) const { return (cost_.Cs + cost_.mission_loss(n)) * step_->fail; }

 private:
  void check_n(int n) const {
    if (n < 0 || n > cost_.N) throw ConfigError("period index out of range");
  }

  Vec repair(double t) const {
    if (cost_.Cr == 0) return Vec::Zero(dim());
    Mat Pt = t == 0 ? Mat::Identity(dim(), dim()) : Mat(model_.kernel(t)->Ptilde);
    return cost_.Cr * (Pt * mask_);
  }

  Vec abort_coeff(int n) const {
    return Vec::Constant(dim(), cost_.mission_loss(n)) + cost_.Cs * fail(cost_.w[n]) + repair(cost_.w[n]);
  }

  Vec upper_coeff(int n) const {
    const int N = cost_.N;
    Vec v = cost_.Cs * fail((N - n) * cost_.delta + cost_.wN());
    auto cum = cost_.cumulative();
    for (int l = 0; l < cost_.L(); ++l) {
      bool last = l == cost_.L() - 1;
      if (n < cum[l] || last) {
        double t = std::max(0, cum[l] - n) * cost_.delta + (last ? cost_.wN() : 0.0);
        v += cost_.Cm[l] * fail(t);
      }
    }
    return v;
  }

  SurrogateModel model_;
  CostModel cost_;
  ObservationModel obs_;
  std::shared_ptr<const TransitionKernel> step_;
  Vec mask_;
  std::vector<Vec> abort_, upper_, lifted_;
  Vec terminal_;
};

/// Aborting is never optimal when Cm/Cs >= exp(lambda (H + w_N)) - 1.
inline bool never_abort(const CostModel& cost, double lambda) {
  const double Cm = cost.Cm.back();
  if (cost.Cs <= 0) return true;
  return Cm / cost.Cs >= std::expm1(lambda * (cost.H() + cost.wN()));
}

/// Smallest n at which the continue-to-the-end bound is no worse than
/// aborting at every vertex. Binary search over n; N if none earlier.
inline int find_hat_n(const ValueModel& vm) {
  auto gap = [&](int n) { return (vm.upper_alpha(n) - vm.abort_alpha(n)).maxCoeff(); };
  if (gap(0) <= 0) return 0;
  int lo = 0, hi = vm.N();
  if (gap(hi) > 0) return vm.N();
  while (hi > lo + 1) {
    int mid = lo + (hi - lo) / 2;
    if (gap(mid) > 0) lo = mid;
    else hi = mid;
  }
  return hi;
}

struct VertexValues {
  /// V_c(n, e_d) for n = 0..N-1 (index N holds the terminal value).
  std::vector<double> vc;
  std::vector<double> vab;
};

/// Exact values at the last transient vertex. From there the chain either
/// stays put or fails, so the recursion closes on scalars.
inline VertexValues vertex_recursion(const ValueModel& vm) {
  const int d = vm.dim();
  const int N = vm.N();
  VertexValues out;
  out.vc.assign(N + 1, 0.0);
  out.vab.assign(N + 1, 0.0);
  for (int n = 0; n <= N; ++n) out.vab[n] = vm.abort_alpha(n)(d - 1);
  const double stay = vm.Ptilde()(d - 1, d - 1);
  const double fail = vm.step_fail()(d - 1);
  double next = vm.terminal_alpha()(d - 1);
  out.vc[N] = next;
  for (int n = N - 1; n >= 0; --n) {
    double loss = vm.cost().Cs + vm.cost().mission_loss(n);
    out.vc[n] = loss * fail + stay * next;
    next = std::min(out.vab[n], out.vc[n]);
  }
  return out;
}

/// Largest n in [0, N-1] at which aborting beats continuing at e_d.
inline std::optional<int> find_tilde_n(const ValueModel& vm) {
  auto v = vertex_recursion(vm);
  for (int n = vm.N() - 1; n >= 0; --n)
    if (v.vc[n] > v.vab[n]) return n;
  return std::nullopt;
}

struct NoIntermediateReport {
  bool holds = false;
  bool zero_rescue = false;
  int argmax = -1;
};

/// Sufficient condition under which no interval between the two thresholds
/// admits aborting: the last transient state maximizes
/// (1 + Cm/Cs) p_{i,fail}((N - hat_n + 1) delta + w_N) - p_{i,fail}(w_{hat_n - 1}),
/// or the rescue time is identically zero.
inline NoIntermediateReport no_intermediate_check(const ValueModel& vm, int hat_n) {
  const auto& c = vm.cost();
  NoIntermediateReport r;
  r.zero_rescue = std::all_of(c.w.begin(), c.w.end(), [](double x) { return x == 0; });
  int n = std::max(hat_n, 1);
  Vec g = (1 + c.Cm.back() / c.Cs) * vm.fail((c.N - n + 1) * c.delta + c.wN()) - vm.fail(c.w[n - 1]);
  Eigen::Index idx;
  g.maxCoeff(&idx);
  r.argmax = static_cast<int>(idx);
  r.holds = r.zero_rescue || r.argmax == vm.dim() - 1;
  return r;
}

/// Continuing through every mission is optimal when the last mission's
/// reward outweighs the failure exposure.
inline bool multi_no_abort(const CostModel& cost, double lambda) {
  const int L = cost.L();
  auto cum = cost.cumulative();
  const double x = lambda * (cost.H() + cost.wN());
  const double den = -std::expm1(-x);
  double lhs = cost.Cm[L - 1] * std::exp(-x) / den;
  double rhs = cost.Cs;
  for (int l = 0; l + 1 < L; ++l) rhs += cost.Cm[l] * -std::expm1(-lambda * cost.delta * cum[l]) / den;
  return lhs >= rhs;
}

/// Aborting is never optimal once mission l (0 = before the first) is done.
inline bool multi_no_abort_after(int l, const ValueModel& vm, double lambda) {
  const auto& c = vm.cost();
  const int L = c.L();
  if (l < 0 || l >= L) throw ConfigError("multi_no_abort_after: mission index out of range");
  auto cum = c.cumulative();
  const int done = l == 0 ? 0 : cum[l - 1];
  double lhs = 0;
  double span = 0;
  for (int j = l; j < L; ++j) {
    span += c.task_lengths[j] * c.delta;
    bool last = j == L - 1;
    lhs += c.Cm[j] * ((last ? 0.0 : 1.0) - std::exp(-lambda * (span + (last ? c.wN() : 0.0))));
  }
  Vec e1 = Vec::Zero(vm.dim());
  e1(0) = 1;
  double start = vm.kappa(e1, c.w[done]);
  double rhs = c.Cs * (start + std::exp(-lambda * (c.H() - c.delta * done + c.wN())) - 1);
  return lhs <= rhs;
}

}  // namespace mabort

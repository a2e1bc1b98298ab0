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
#include "mabort/solve/policy.hpp"
#include "mabort/value.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mabort {

namespace detail {

// Linear interpolation on the uniform grid {0, h, ..., (n-1) h}.
inline double interp(const std::vector<double>& v, double h, double x) {
  const int n = static_cast<int>(v.size());
  double s = std::clamp(x / h, 0.0, static_cast<double>(n - 1));
  int i = std::min(static_cast<int>(s), n - 2);
  if (n == 1) return v[0];
  double f = s - i;
  return (1 - f) * v[i] + f * v[i + 1];
}

// Abort interval {x : diff(x) <= 0} on the grid, with endpoints moved to
// the linear zero crossing of diff between neighbouring grid points.
inline std::optional<ControlLimit> extract_interval(const std::vector<double>& diff, double h) {
  const int n = static_cast<int>(diff.size());
  int first = -1, last = -1;
  for (int i = 0; i < n; ++i)
    if (diff[i] <= 0) {
      if (first < 0) first = i;
      last = i;
    }
  if (first < 0) return std::nullopt;
  auto cross = [&](int a, int b) {
    double da = diff[a], db = diff[b];
    double t = da / (da - db);
    return (a + t * (b - a)) * h;
  };
  ControlLimit c;
  c.lo = first == 0 ? 0.0 : cross(first - 1, first);
  c.hi = last == n - 1 ? (n - 1) * h : cross(last, last + 1);
  return c;
}

}  // namespace detail

/// Backward induction over the defect probability for a model with one
/// healthy and one defective phase, on the grid {0, delta_x, ..., 1}.
inline std::shared_ptr<ControlLimitPolicy> exact_backward_ctmc(std::shared_ptr<const ValueModel> vm,
                                                               double granularity = 0.01) {
  const auto& m = vm->model();
  if (m.m1() != 1 || m.m2() != 1) throw ConfigError("exact_backward_ctmc: requires m1 = m2 = 1");
  if (!(granularity > 0 && granularity <= 0.1)) throw ConfigError("exact_backward_ctmc: granularity in (0, 0.1]");
  const int G = static_cast<int>(std::lround(1.0 / granularity)) + 1;
  const double h = 1.0 / (G - 1);
  const int N = vm->N();
  const int K = vm->K();
  Thresholds th = compute_thresholds(*vm);
  auto belief = [](double x) {
    Vec p(2);
    p << 1 - x, x;
    return p;
  };
  std::vector<double> next(G), cur(G), diff(G);
  for (int i = 0; i < G; ++i) next[i] = vm->terminal_alpha().dot(belief(i * h));
  std::vector<std::optional<ControlLimit>> limits(N);
  const Mat Pt = vm->Ptilde().transpose();
  for (int n = N - 1; n >= 0; --n) {
    const Vec step = vm->step_loss_alpha(n);
    for (int i = 0; i < G; ++i) {
      Vec pi = belief(i * h);
      Vec pred = Pt * pi;
      double vc = step.dot(pi);
      for (int k = 1; k <= K; ++k) {
        Vec w = pred.cwiseProduct(vm->lifted(k));
        double z = w.sum();
        if (z <= 0) continue;
        vc += z * detail::interp(next, h, w(1) / z);
      }
      double vab = vm->v_ab(n, pi);
      diff[i] = vab - vc;
      cur[i] = std::min(vab, vc);
    }
    if (n < th.hat_n) {
      limits[n] = detail::extract_interval(diff, h);
      if (limits[n] && th.tilde_n && n <= *th.tilde_n) limits[n]->hi = 1.0;
    }
    std::swap(next, cur);
  }
  double v0 = detail::interp(next, h, m.pi0()(1));
  nlohmann::json meta = {{"solver", "exact-ctmc"}, {"granularity", granularity}};
  auto p = std::make_shared<ControlLimitPolicy>(vm, LimitStatistic::kDefectProb, std::move(limits), th, v0, meta);
  return p;
}

/// phi-tilde_j(Phi) for j = 1..m1+1 (returned 0-based) of a model whose
/// second chain has one phase.
inline Vec dimred_phi_tilde(const Mat& Ptilde, const std::vector<double>& phi) {
  const int d = static_cast<int>(Ptilde.rows());
  Vec out = Vec::Zero(d);
  for (int j = 0; j < d; ++j) {
    double s = (Ptilde(1, j) - Ptilde(0, j)) * std::cos(phi[0]);
    double sin_prod = std::sin(phi[0]);
    for (int i = 3; i <= d; ++i) {
      s += (Ptilde(i - 1, j) - Ptilde(0, j)) * std::cos(phi[i - 2]) * sin_prod;
      sin_prod *= std::sin(phi[i - 2]);
    }
    out(j) = s;
  }
  return out;
}

/// Next period's angles; the signal does not enter.
inline std::vector<double> dimred_next_angles(const Mat& Ptilde, const std::vector<double>& phi) {
  const int d = static_cast<int>(Ptilde.rows());
  const int m1 = d - 1;
  Vec f = dimred_phi_tilde(Ptilde, phi);
  const double sum = f.head(m1).sum();
  std::vector<double> out(m1);
  for (int i = 1; i < m1; ++i) {
    double den = f(0) * f(0) + sum * sum;
    for (int j = i; j < m1; ++j) den += f(j) * f(j);
    out[i - 1] = detail::safe_acos(f(i), std::sqrt(den));
  }
  out[m1 - 1] = detail::safe_acos(-sum, std::sqrt(f(0) * f(0) + sum * sum));
  return out;
}

/// Next period's radius after signal k.
inline double dimred_next_radius(const Mat& Ptilde, const ObservationModel& obs, const std::vector<double>& phi,
                                 double r, int k) {
  const int d = static_cast<int>(Ptilde.rows());
  const int m1 = d - 1;
  Vec f = dimred_phi_tilde(Ptilde, phi);
  Vec pre = r * f;
  pre(m1) += Ptilde(m1, m1);
  const double d1 = obs.emission(0, k), d2 = obs.emission(1, k);
  if (d1 == 0) return 0.0;
  double s = pre.head(m1).sum();
  double num = std::sqrt(pre.head(m1).squaredNorm() + s * s);
  return num / (s + pre(m1) * d2 / d1);
}

/// Largest feasible radius along the given angles.
inline double dimred_max_radius(const std::vector<double>& phi) {
  const int m1 = static_cast<int>(phi.size());
  double p = std::cos(phi[m1 - 1]);
  for (int k = 0; k + 1 < m1; ++k) p *= std::sin(phi[k]);
  if (!(p < 0)) throw ModelError("dimension reduction: degenerate angle (sin phi = 0 or cos phi >= 0)");
  return -1.0 / p;
}

/// Angles Phi_0..Phi_N starting from the model's initial belief.
inline std::vector<std::vector<double>> dimred_angle_sequence(const ValueModel& vm) {
  std::vector<std::vector<double>> seq;
  seq.push_back(to_spherical(vm.model().pi0()).phi);
  for (int n = 1; n <= vm.N(); ++n) seq.push_back(dimred_next_angles(vm.Ptilde(), seq.back()));
  return seq;
}

/// Backward induction over the spherical radius for a model whose second
/// chain has one phase; the angles follow a fixed sequence.
inline std::shared_ptr<ControlLimitPolicy> exact_backward_dimred(std::shared_ptr<const ValueModel> vm,
                                                                 double granularity = 0.01) {
  const auto& m = vm->model();
  if (m.m2() != 1) throw ConfigError("exact_backward_dimred: requires m2 = 1");
  if (!(granularity > 0)) throw ConfigError("exact_backward_dimred: granularity must be positive");
  const int N = vm->N();
  const int K = vm->K();
  const int d = m.dim();
  Thresholds th = compute_thresholds(*vm);
  auto phis = dimred_angle_sequence(*vm);
  std::vector<double> rmax(N + 1), h(N + 1);
  std::vector<int> G(N + 1);
  for (int n = 0; n <= N; ++n) {
    for (std::size_t k = 0; k + 1 < phis[n].size(); ++k)
      if (std::sin(phis[n][k]) == 0) throw ModelError("dimension reduction: angle degeneracy at period " +
                                                      std::to_string(n));
    rmax[n] = dimred_max_radius(phis[n]);
    G[n] = static_cast<int>(std::ceil(rmax[n] / granularity)) + 1;
    h[n] = rmax[n] / (G[n] - 1);
  }
  auto belief = [&](int n, double r) {
    if (r <= 0) {
      Vec e = Vec::Zero(d);
      e(d - 1) = 1;
      return e;
    }
    Vec p = from_spherical(SphericalBelief{r, phis[n]});
    return Vec(p.cwiseMax(0.0) / p.cwiseMax(0.0).sum());
  };
  std::vector<double> next(G[N]);
  for (int i = 0; i < G[N]; ++i) next[i] = vm->terminal_alpha().dot(belief(N, i * h[N]));
  std::vector<std::optional<ControlLimit>> limits(N);
  const Mat Pt = vm->Ptilde().transpose();
  for (int n = N - 1; n >= 0; --n) {
    std::vector<double> cur(G[n]), diff(G[n]);
    const Vec step = vm->step_loss_alpha(n);
    for (int i = 0; i < G[n]; ++i) {
      const double r = i * h[n];
      Vec pi = belief(n, r);
      Vec pred = Pt * pi;
      double vc = step.dot(pi);
      for (int k = 1; k <= K; ++k) {
        double z = pred.dot(vm->lifted(k));
        if (z <= 0) continue;
        double r2 = r <= 0 ? 0.0 : dimred_next_radius(vm->Ptilde(), vm->obs(), phis[n], r, k);
        vc += z * detail::interp(next, h[n + 1], std::min(r2, rmax[n + 1]));
      }
      double vab = vm->v_ab(n, pi);
      diff[i] = vab - vc;
      cur[i] = std::min(vab, vc);
    }
    if (n < th.hat_n) {
      limits[n] = detail::extract_interval(diff, h[n]);
      if (limits[n] && th.tilde_n && n <= *th.tilde_n) limits[n]->lo = 0.0;
    }
    next = std::move(cur);
  }
  double v0 = detail::interp(next, h[0], spherical_radius(m.pi0()));
  nlohmann::json meta = {{"solver", "exact-dimred"}, {"granularity", granularity}};
  return std::make_shared<ControlLimitPolicy>(vm, LimitStatistic::kRadius, std::move(limits), th, v0, meta);
}

}  // namespace mabort

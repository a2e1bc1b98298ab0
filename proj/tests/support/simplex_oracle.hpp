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

// Brute-force backward induction on a regular grid of the 2-simplex, for
// single-mission models with three transient states. Uses Eigen's matrix
// exponential and its own cost assembly so that it shares no code with the
// library's value or solver headers.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

struct SimplexProblem {
  Eigen::MatrixXd Q;  // 4 x 4, failure state last
  Eigen::MatrixXd D;  // 2 x K
  int m1 = 1;
  double Cs = 0, Cm = 0, delta = 1;
  int N = 0;
  std::vector<double> w;  // w_0..w_N
};

class SimplexGrid {
 public:
  explicit SimplexGrid(int M) : M_(M) {}
  int M() const { return M_; }
  long size() const { return static_cast<long>(M_ + 1) * (M_ + 2) / 2; }
  long index(int i, int j) const {
    // rows i = 0..M, each holding j = 0..M-i
    return static_cast<long>(i) * (M_ + 1) - static_cast<long>(i) * (i - 1) / 2 + j;
  }

  /// Barycentric interpolation at (a, b, 1 - a - b).
  double interp(const std::vector<double>& v, double a, double b) const {
    a = std::clamp(a, 0.0, 1.0);
    b = std::clamp(b, 0.0, 1.0 - a);
    double u = a * M_, t = b * M_;
    int i = std::min(static_cast<int>(u), M_);
    int j = std::min(static_cast<int>(t), M_ - i);
    double fu = u - i, ft = t - j;
    if (i + j == M_) return v[index(i, j)];
    if (fu + ft <= 1) return (1 - fu - ft) * v[index(i, j)] + fu * v[index(i + 1, j)] + ft * v[index(i, j + 1)];
    return (fu + ft - 1) * v[index(i + 1, j + 1)] + (1 - ft) * v[index(i + 1, j)] + (1 - fu) * v[index(i, j + 1)];
  }

 private:
  int M_;
};

/// Optimal value at period 0, belief (a, b, 1 - a - b).
inline double solve_simplex(const SimplexProblem& p, int M, double a0, double b0) {
  SimplexGrid g(M);
  const int K = static_cast<int>(p.D.cols());
  auto P = [&](double t) -> Eigen::MatrixXd { return (p.Q * t).exp(); };
  auto fail_vec = [&](double t) {
    Eigen::Vector3d f;
    Eigen::MatrixXd E = P(t);
    for (int i = 0; i < 3; ++i) f(i) = E(i, 3);
    return f;
  };
  Eigen::MatrixXd Pd = P(p.delta);
  Eigen::Matrix3d Pt = Pd.topLeftCorner(3, 3);
  Eigen::Vector3d step_fail = fail_vec(p.delta);
  std::vector<Eigen::Vector3d> emit(K);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < 3; ++i) emit[k](i) = p.D(i < p.m1 ? 0 : 1, k);

  std::vector<double> next(g.size()), cur(g.size());
  const Eigen::Vector3d fN = fail_vec(p.w[p.N]);
  for (int i = 0; i <= M; ++i)
    for (int j = 0; j <= M - i; ++j) {
      Eigen::Vector3d pi(double(i) / M, double(j) / M, double(M - i - j) / M);
      next[g.index(i, j)] = (p.Cs + p.Cm) * pi.dot(fN);
    }
  for (int n = p.N - 1; n >= 0; --n) {
    const Eigen::Vector3d fw = fail_vec(p.w[n]);
    for (int i = 0; i <= M; ++i)
      for (int j = 0; j <= M - i; ++j) {
        Eigen::Vector3d pi(double(i) / M, double(j) / M, double(M - i - j) / M);
        double vab = p.Cm + p.Cs * pi.dot(fw);
        Eigen::Vector3d pred = Pt.transpose() * pi;
        double vc = (p.Cs + p.Cm) * pi.dot(step_fail);
        for (int k = 0; k < K; ++k) {
          Eigen::Vector3d q = pred.cwiseProduct(emit[k]);
          double z = q.sum();
          if (z <= 0) continue;
          vc += z * g.interp(next, q(0) / z, q(1) / z);
        }
        cur[g.index(i, j)] = std::min(vab, vc);
      }
    std::swap(next, cur);
  }
  return g.interp(next, a0, b0);
}

}  // namespace oracle

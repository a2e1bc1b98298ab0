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

#include "mabort/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mabort {

namespace detail {

// Dense phase-one simplex (Bland's rule) for
//   min sum(s+ + s-)  s.t.  H lambda + s+ - s- = x,  1'lambda + a = 1,  all >= 0,
// returning the optimal residual mass (an L1 distance to the convex hull).
inline double hull_residual(const Mat& H, const Vec& x) {
  const int d = static_cast<int>(H.rows());
  const int m = static_cast<int>(H.cols());
  const int rows = d + 1;
  const int cols = m + 2 * d + 1;  // lambda, s+, s-, a
  Mat T = Mat::Zero(rows, cols + 1);
  std::vector<int> basis(rows);
  for (int i = 0; i < d; ++i) {
    double sign = x(i) >= 0 ? 1.0 : -1.0;
    for (int j = 0; j < m; ++j) T(i, j) = sign * H(i, j);
    T(i, m + i) = sign;
    T(i, m + d + i) = -sign;
    T(i, cols) = sign * x(i);
    basis[i] = sign > 0 ? m + i : m + d + i;
  }
  for (int j = 0; j < m; ++j) T(d, j) = 1;
  T(d, cols - 1) = 1;
  T(d, cols) = 1;
  basis[d] = cols - 1;
  // reduced costs: objective is every artificial column with cost 1
  std::vector<double> cost(cols, 0.0);
  for (int j = m; j < cols; ++j) cost[j] = 1;
  Vec z = Vec::Zero(cols + 1);
  for (int i = 0; i < rows; ++i) z += cost[basis[i]] * T.row(i).transpose();
  for (int j = 0; j < cols; ++j) z(j) -= cost[j];
  const double eps = 1e-12;
  for (int it = 0; it < 50 * (rows + cols); ++it) {
    int enter = -1;
    for (int j = 0; j < cols; ++j)
      if (z(j) > eps) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < rows; ++i) {
      if (T(i, enter) > eps) {
        double r = T(i, cols) / T(i, enter);
        if (r < best - 1e-15 || (std::abs(r - best) <= 1e-15 && basis[i] < basis[leave])) {
          best = r;
          leave = i;
        }
      }
    }
    if (leave < 0) break;
    T.row(leave) /= T(leave, enter);
    for (int i = 0; i < rows; ++i)
      if (i != leave && T(i, enter) != 0) T.row(i) -= T(i, enter) * T.row(leave);
    if (z(enter) != 0) z -= z(enter) * T.row(leave).transpose();
    basis[leave] = enter;
  }
  return std::max(0.0, z(cols));
}

}  // namespace detail

/// True when x lies within tol of the convex hull of the columns of H. The
/// LP minimizes the L1 residual, which bounds the infinity-norm residual.
inline bool hull_membership(const Vec& x, const Mat& H, double tol = 1e-9) {
  if (H.cols() == 0) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) < H.row(i).minCoeff() - tol || x(i) > H.row(i).maxCoeff() + tol) return false;
  }
  for (Eigen::Index j = 0; j < H.cols(); ++j)
    if ((H.col(j) - x).cwiseAbs().maxCoeff() <= tol) return true;
  return detail::hull_residual(H, x) <= tol;
}

/// Keeps at most cap columns, greedily adding the point farthest from those
/// already kept (starting from the first column).
inline Mat farthest_point_thin(const Mat& H, int cap) {
  const int m = static_cast<int>(H.cols());
  if (m <= cap) return H;
  std::vector<int> keep{0};
  Vec dist = (H.colwise() - H.col(0)).colwise().squaredNorm().transpose();
  while (static_cast<int>(keep.size()) < cap) {
    Eigen::Index j;
    dist.maxCoeff(&j);
    keep.push_back(static_cast<int>(j));
    dist = dist.cwiseMin((H.colwise() - H.col(j)).colwise().squaredNorm().transpose());
  }
  std::sort(keep.begin(), keep.end());
  Mat out(H.rows(), cap);
  for (int i = 0; i < cap; ++i) out.col(i) = H.col(keep[i]);
  return out;
}

}  // namespace mabort

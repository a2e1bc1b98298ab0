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
#include "mabort/ctmc.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mabort {

/// Emission probabilities of the two latent clusters. Signals are 1..K;
/// signal 0 means the failure was observed and never reaches a filter.
class ObservationModel {
 public:
  ObservationModel() = default;

  explicit ObservationModel(Mat D) : D_(std::move(D)) {
    if (D_.rows() != 2 || D_.cols() < 1) throw ConfigError("observation model: D must be 2 x K");
    for (int i = 0; i < 2; ++i) {
      if (D_.row(i).minCoeff() < 0) throw ConfigError("observation model: negative emission probability");
      if (std::abs(D_.row(i).sum() - 1) > 1e-9) throw ConfigError("observation model: rows of D must sum to 1");
    }
  }

  int K() const { return static_cast<int>(D_.cols()); }
  const Mat& D() const { return D_; }

  /// d_{cluster,k}, cluster 0 healthy and 1 defective, k in 1..K.
  double emission(int cluster, int k) const { return D_(cluster, k - 1); }

  /// Per-state emission vector for signal k over m1 + m2 transient states.
  Vec lifted(int k, int m1, int m2) const {
    if (k < 1 || k > K()) throw ConfigError("signal out of range");
    Vec v(m1 + m2);
    v.head(m1).setConstant(D_(0, k - 1));
    v.tail(m2).setConstant(D_(1, k - 1));
    return v;
  }

  bool tp2(double tol = 1e-12) const { return is_tp2(D_, tol); }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (int i = 0; i < 2; ++i) {
      std::vector<double> row;
      for (int k = 0; k < K(); ++k) row.push_back(D_(i, k));
      j.push_back(row);
    }
    return j;
  }

  static ObservationModel from_json(const nlohmann::json& j) {
    auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.size() != 2 || rows[0].size() != rows[1].size() || rows[0].empty())
      throw ConfigError("observation model: D must be 2 x K");
    Mat D(2, rows[0].size());
    for (int i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < rows[0].size(); ++k) D(i, k) = rows[i][k];
    return ObservationModel(D);
  }

 private:
  Mat D_;
};

/// Renormalizes a belief whose mass has drifted slightly; larger drift is an
/// error.
inline void renormalize(Vec& p) {
  double s = p.sum();
  double drift = std::abs(s - 1);
  if (drift > 1e-6) throw ModelError("belief mass drifted by " + std::to_string(drift));
  if (drift > 1e-10) p /= s;
}

inline bool is_belief(const Vec& p, double tol = 1e-10) {
  return p.size() > 0 && p.minCoeff() >= -tol && std::abs(p.sum() - 1) <= tol;
}

/// P(Y_{n+1} = k | belief).
inline double obs_likelihood(const Vec& belief, int k, const Mat& Ptilde, const ObservationModel& obs, int m1) {
  const int d = static_cast<int>(belief.size());
  Vec pred = Ptilde.transpose() * belief;
  return pred.dot(obs.lifted(k, m1, d - m1));
}

/// Posterior after one period and signal k.
inline Vec bayes_update(const Vec& belief, int k, const Mat& Ptilde, const ObservationModel& obs, int m1) {
  const int d = static_cast<int>(belief.size());
  Vec post = (Ptilde.transpose() * belief).cwiseProduct(obs.lifted(k, m1, d - m1));
  double z = post.sum();
  if (!(z >= 1e-300)) throw ImpossibleObservation("impossible observation under belief");
  post /= z;
  return post;
}

/// Bayes filter bound to one model and one period length.
class BeliefFilter {
 public:
  BeliefFilter(const SurrogateModel& model, const ObservationModel& obs, double delta)
      : m1_(model.m1()), Pt_(model.kernel(delta)->Ptilde.transpose()) {
    for (int k = 1; k <= obs.K(); ++k) lifted_.push_back(obs.lifted(k, model.m1(), model.m2()));
  }

  int m1() const { return m1_; }
  int K() const { return static_cast<int>(lifted_.size()); }
  const Vec& lifted(int k) const { return lifted_[k - 1]; }

  /// Unnormalized one-step prediction P~' pi.
  Vec predict(const Vec& pi) const { return Pt_ * pi; }

  Vec update(const Vec& pi, int k) const {
    Vec post = predict(pi).cwiseProduct(lifted_[k - 1]);
    double z = post.sum();
    if (!(z >= 1e-300)) throw ImpossibleObservation("impossible observation under belief");
    post /= z;
    return post;
  }

 private:
  int m1_;
  Mat Pt_;
  std::vector<Vec> lifted_;
};

struct SphericalBelief {
  double r = 0;
  std::vector<double> phi;
};

namespace detail {
inline double safe_acos(double num, double den) {
  if (den <= 0) return std::acos(0.0);
  return std::acos(std::clamp(num / den, -1.0, 1.0));
}
}  // namespace detail

/// Radius/angle coordinates anchored at the last transient vertex.
inline SphericalBelief to_spherical(const Vec& p) {
  const int d = static_cast<int>(p.size());
  if (d < 2) throw ConfigError("to_spherical: dimension must be >= 2");
  // offset vector (p_2, ..., p_{d-1}, p_d - 1, p_1)
  Vec x(d);
  for (int j = 0; j + 2 < d; ++j) x(j) = p(j + 1);
  x(d - 2) = p(d - 1) - 1;
  x(d - 1) = p(0);
  SphericalBelief sb;
  sb.r = x.norm();
  if (sb.r < 1e-15) throw OriginError("to_spherical: belief is the anchor vertex");
  sb.phi.resize(d - 1);
  double tail2 = x.squaredNorm();
  for (int j = 0; j + 1 < d; ++j) {
    sb.phi[j] = detail::safe_acos(x(j), std::sqrt(std::max(tail2, 0.0)));
    tail2 -= x(j) * x(j);
  }
  return sb;
}

/// Radius of a belief in spherical coordinates; zero at the anchor vertex.
inline double spherical_radius(const Vec& p) {
  const int d = static_cast<int>(p.size());
  double s = p.head(d - 1).squaredNorm() + (p(d - 1) - 1) * (p(d - 1) - 1);
  return std::sqrt(s);
}

inline Vec from_spherical(const SphericalBelief& sb) {
  const int d = static_cast<int>(sb.phi.size()) + 1;
  Vec p(d);
  double sin_prod = 1;
  double total = 0;
  for (int j = 0; j + 1 < d; ++j) {
    double xj = sb.r * std::cos(sb.phi[j]) * sin_prod;
    total += xj;
    if (j + 2 < d) p(j + 1) = xj;
    else p(d - 1) = 1 + xj;
    sin_prod *= std::sin(sb.phi[j]);
  }
  p(0) = -total;
  return p;
}

enum class MlrRelation { kLeq, kNotLeq, kIncomparable };

/// Likelihood-ratio comparison: kLeq when a_i b_j <= a_j b_i for all i > j,
/// kNotLeq when only the reverse holds, kIncomparable when neither does.
inline MlrRelation mlr_leq(const Vec& a, const Vec& b, double tol = 1e-12) {
  auto leq = [tol](const Vec& u, const Vec& v) {
    for (Eigen::Index i = 1; i < u.size(); ++i)
      for (Eigen::Index j = 0; j < i; ++j)
        if (u(i) * v(j) > u(j) * v(i) + tol) return false;
    return true;
  };
  if (leq(a, b)) return MlrRelation::kLeq;
  if (leq(b, a)) return MlrRelation::kNotLeq;
  return MlrRelation::kIncomparable;
}

}  // namespace mabort

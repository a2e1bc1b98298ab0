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
#include "mabort/dist.hpp"
#include "mabort/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mabort {

enum class SurrogateVariant { kErlangMixtureStart, kDeterministicStart, kRateMatrix };

inline const char* to_string(SurrogateVariant v) {
  switch (v) {
    case SurrogateVariant::kErlangMixtureStart: return "erlang-mixture-start";
    case SurrogateVariant::kDeterministicStart: return "deterministic-start";
    case SurrogateVariant::kRateMatrix: return "rate-matrix";
  }
  return "";
}

inline SurrogateVariant variant_from_string(const std::string& s) {
  if (s == "erlang-mixture-start") return SurrogateVariant::kErlangMixtureStart;
  if (s == "deterministic-start") return SurrogateVariant::kDeterministicStart;
  if (s == "rate-matrix") return SurrogateVariant::kRateMatrix;
  throw ConfigError("unknown surrogate variant \"" + s + "\"");
}

/// P(t) and its transient block.
struct TransitionKernel {
  double dt = 0;
  Mat P;
  Mat Ptilde;
  /// Column of P restricted to transient rows: failure probability within dt.
  Vec fail;
};

/// Absorbing CTMC over states 0..d-1 (transient, chain one then chain two)
/// and d (failure). Public indices are 0-based.
class SurrogateModel {
 public:
  SurrogateModel() = default;

  SurrogateModel(int m1, int m2, double lambda, double zeta, Mat Q, Vec pi0, SurrogateVariant v)
      : m1_(m1), m2_(m2), lambda_(lambda), zeta_(zeta), Q_(std::move(Q)), pi0_(std::move(pi0)), variant_(v) {
    if (m1_ < 1 || m2_ < 1) throw ModelError("surrogate: m1 and m2 must be >= 1");
    if (Q_.rows() != dim() + 1 || Q_.cols() != dim() + 1) throw ModelError("surrogate: Q has wrong shape");
    if (pi0_.size() != dim()) throw ModelError("surrogate: pi0 has wrong length");
    unif_rate_ = 0;
    for (int i = 0; i <= dim(); ++i) unif_rate_ = std::max(unif_rate_, -Q_(i, i));
  }

  int m1() const { return m1_; }
  int m2() const { return m2_; }
  int dim() const { return m1_ + m2_; }
  double lambda() const { return lambda_; }
  double zeta() const { return zeta_; }
  const Mat& Q() const { return Q_; }
  const Vec& pi0() const { return pi0_; }
  SurrogateVariant variant() const { return variant_; }

  /// Rate from transient state i straight into failure.
  double fail_rate(int i) const { return Q_(i, dim()); }

  /// Indicator of the second chain (defective states).
  Vec defective_mask() const {
    Vec v = Vec::Zero(dim());
    v.tail(m2_).setOnes();
    return v;
  }

  /// Human-readable structural violations; empty when the model is valid.
  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    const int n = dim() + 1;
    for (int i = 0; i < n; ++i) {
      double s = Q_.row(i).sum();
      if (std::abs(s) > 1e-12) out.push_back("row " + std::to_string(i) + " of Q sums to " + std::to_string(s));
      for (int j = 0; j < n; ++j) {
        if (i != j && Q_(i, j) < 0)
          out.push_back("negative off-diagonal Q(" + std::to_string(i) + "," + std::to_string(j) + ")");
        if (j < i && Q_(i, j) != 0) out.push_back("Q is not upper-triangular at (" + std::to_string(i) + "," +
                                                  std::to_string(j) + ")");
      }
    }
    if (Q_.row(n - 1).cwiseAbs().maxCoeff() != 0) out.push_back("absorbing row of Q is not zero");
    if (variant_ == SurrogateVariant::kErlangMixtureStart) {
      for (int i = 0; i < dim(); ++i)
        if (std::abs(Q_(i, i) + lambda_) > 1e-12) out.push_back("diagonal of Q differs from -lambda");
    }
    if (pi0_.minCoeff() < 0) out.push_back("pi0 has negative entries");
    if (std::abs(pi0_.sum() - 1) > 1e-10) out.push_back("pi0 does not sum to 1");
    if (pi0_.tail(m2_).cwiseAbs().maxCoeff() > 0) out.push_back("pi0 puts mass on the second chain");
    return out;
  }

  /// exp(Q t) by uniformization, cached by t.
  std::shared_ptr<const TransitionKernel> kernel(double t) const {
    if (!(t >= 0)) throw ConfigError("transition_matrix: t must be nonnegative");
    {
      std::lock_guard<std::mutex> g(cache_->mu);
      auto it = cache_->map.find(t);
      if (it != cache_->map.end()) return it->second;
    }
    auto k = std::make_shared<TransitionKernel>();
    k->dt = t;
    k->P = expm(t);
    k->Ptilde = k->P.topLeftCorner(dim(), dim());
    k->fail = k->P.col(dim()).head(dim());
    std::lock_guard<std::mutex> g(cache_->mu);
    return cache_->map.emplace(t, std::move(k)).first->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json q = nlohmann::json::array();
    for (int i = 0; i <= dim(); ++i) {
      std::vector<double> row;
      for (int j = 0; j <= dim(); ++j) row.push_back(Q_(i, j));
      q.push_back(row);
    }
    std::vector<double> p(pi0_.data(), pi0_.data() + pi0_.size());
    return {{"m1", m1_}, {"m2", m2_}, {"lambda", lambda_}, {"zeta", zeta_},
            {"variant", to_string(variant_)}, {"Q", q}, {"pi0", p}};
  }

  static SurrogateModel from_json(const nlohmann::json& j) {
    try {
      int m1 = j.at("m1").get<int>(), m2 = j.at("m2").get<int>();
      auto rows = j.at("Q").get<std::vector<std::vector<double>>>();
      const int n = m1 + m2 + 1;
      if (static_cast<int>(rows.size()) != n) throw ModelError("model: Q has wrong shape");
      Mat Q(n, n);
      for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows[i].size()) != n) throw ModelError("model: Q has wrong shape");
        for (int k = 0; k < n; ++k) Q(i, k) = rows[i][k];
      }
      auto p = j.at("pi0").get<std::vector<double>>();
      Vec pi0 = Eigen::Map<Vec>(p.data(), static_cast<Eigen::Index>(p.size()));
      return SurrogateModel(m1, m2, j.at("lambda").get<double>(), j.at("zeta").get<double>(), Q, pi0,
                            variant_from_string(j.at("variant").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }

 private:
  struct Cache {
    std::mutex mu;
    std::map<double, std::shared_ptr<const TransitionKernel>> map;
  };

  // Poisson-weighted powers of U = I + Q/rate; long horizons are split into
  // 2^s equal steps and squared back, keeping e^{-rate t} away from underflow.
  Mat expm(double t) const {
    const int n = dim() + 1;
    if (t == 0 || unif_rate_ == 0) return Mat::Identity(n, n);
    int s = 0;
    double h = t;
    while (unif_rate_ * h > 20) {
      h *= 0.5;
      ++s;
    }
    const double x = unif_rate_ * h;
    Mat U = Mat::Identity(n, n) + Q_ / unif_rate_;
    double w = std::exp(-x);
    double acc = w;
    Mat term = Mat::Identity(n, n);
    Mat P = w * term;
    for (int k = 1; 1.0 - acc > 1e-13 && k < 10000; ++k) {
      w *= x / k;
      acc += w;
      term = term * U;
      P += w * term;
    }
    for (int i = 0; i < s; ++i) P = P * P;
    return P;
  }

  int m1_ = 1, m2_ = 1;
  double lambda_ = 0, zeta_ = 0, unif_rate_ = 0;
  Mat Q_;
  Vec pi0_;
  SurrogateVariant variant_ = SurrogateVariant::kRateMatrix;
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

namespace detail {

// Rates of the second chain: p_i = 1 - S(i/lambda)/S((i-1)/lambda).
inline void fill_second_chain(Mat& Q, int m1, int m2, double lambda, const DistributionSpec& F) {
  const int d = m1 + m2;
  for (int i = 1; i < m2; ++i) {
    double s_prev = F.survival((i - 1) / lambda);
    if (!(s_prev > 0)) throw ModelError("F saturates before phase m2; reduce m2 or increase lambda");
    double p = 1.0 - F.survival(i / lambda) / s_prev;
    int r = m1 + i - 1;
    Q(r, r + 1) = lambda * (1 - p);
    Q(r, d) = lambda * p;
    Q(r, r) = -lambda;
  }
  Q(d - 1, d) = lambda;
  Q(d - 1, d - 1) = -lambda;
}

}  // namespace detail

/// Surrogate whose first chain approximates G by an Erlang mixture at rate
/// lambda - zeta; the starting phase is random.
inline SurrogateModel build_surrogate(const DistributionSpec& G, const DistributionSpec& F, double zeta, int m1,
                                      int m2, double lambda) {
  if (m1 < 1 || m2 < 1) throw ConfigError("build_surrogate: m1 and m2 must be >= 1");
  if (!(zeta >= 0)) throw ConfigError("build_surrogate: zeta must be nonnegative");
  if (!(lambda > zeta)) throw ConfigError("build_surrogate: lambda must exceed zeta");
  const int d = m1 + m2;
  Mat Q = Mat::Zero(d + 1, d + 1);
  const double nu = lambda - zeta;
  for (int i = 0; i < m1; ++i) {
    Q(i, i + 1) = nu;
    Q(i, d) += zeta;
    Q(i, i) = -lambda;
  }
  detail::fill_second_chain(Q, m1, m2, lambda, F);
  Vec pi0 = Vec::Zero(d);
  pi0(0) = G.survival((m1 - 1) / nu);
  for (int i = 2; i <= m1; ++i) pi0(i - 1) = G.cdf((m1 + 1 - i) / nu) - G.cdf((m1 - i) / nu);
  return SurrogateModel(m1, m2, lambda, zeta, Q, pi0, SurrogateVariant::kErlangMixtureStart);
}

/// Surrogate for G exactly Erlang(m1, nu): start in the first phase, advance
/// at rate nu.
inline SurrogateModel build_surrogate_deterministic_start(const DistributionSpec& G, const DistributionSpec& F,
                                                          double zeta, int m2, double lambda) {
  if (G.kind() != DistributionSpec::Kind::kErlang)
    throw ConfigError("deterministic-start surrogate requires an Erlang G");
  if (!(zeta >= 0)) throw ConfigError("build_surrogate: zeta must be nonnegative");
  if (!(lambda > 0)) throw ConfigError("build_surrogate: lambda must be positive");
  if (m2 < 1) throw ConfigError("build_surrogate: m2 must be >= 1");
  const int m1 = static_cast<int>(G.shape());
  const int d = m1 + m2;
  const double nu = G.rate();
  Mat Q = Mat::Zero(d + 1, d + 1);
  for (int i = 0; i < m1; ++i) {
    Q(i, i + 1) = nu;
    Q(i, d) += zeta;
    Q(i, i) = -(nu + zeta);
  }
  detail::fill_second_chain(Q, m1, m2, lambda, F);
  Vec pi0 = Vec::Zero(d);
  pi0(0) = 1;
  return SurrogateModel(m1, m2, lambda, zeta, Q, pi0, SurrogateVariant::kDeterministicStart);
}

/// Surrogate from an explicit upper-triangular rate matrix (transient states
/// first, failure last). Diagonal entries are reset so that rows sum to zero;
/// lambda is the exit rate of the last transient state.
inline SurrogateModel surrogate_from_rates(Mat Q, Vec pi0, int m1, int m2) {
  const int n = static_cast<int>(Q.rows());
  if (Q.cols() != n || n != m1 + m2 + 1) throw ConfigError("rate matrix: shape does not match m1 + m2 + 1");
  for (int i = 0; i < n; ++i) {
    Q(i, i) = 0;
    Q(i, i) = -Q.row(i).sum();
  }
  double zeta = Q(0, n - 1);
  double lambda = -Q(n - 2, n - 2);
  return SurrogateModel(m1, m2, lambda, zeta, std::move(Q), std::move(pi0), SurrogateVariant::kRateMatrix);
}

inline std::shared_ptr<const TransitionKernel> transition_matrix(const SurrogateModel& m, double t) {
  return m.kernel(t);
}

/// Failure probability within t from the given belief.
inline double kappa(const SurrogateModel& m, const Vec& belief, double t) {
  if (t == 0) return 0.0;
  return belief.dot(m.kernel(t)->fail);
}

/// Jump-chain sample of the absorption time.
inline double absorption_sampler(const SurrogateModel& m, Stream& s) {
  const int d = m.dim();
  const Mat& Q = m.Q();
  double u = s.uniform();
  int state = 0;
  for (double acc = m.pi0()(0); state + 1 < d && u > acc; acc += m.pi0()(++state)) {
  }
  double t = 0;
  while (state != d) {
    double out = -Q(state, state);
    t += s.exponential(out);
    double v = s.uniform() * out;
    int next = state + 1;
    double acc = Q(state, next);
    while (next < d && v > acc) acc += Q(state, ++next);
    state = next;
  }
  return t;
}

struct HazardCheck {
  bool ok = true;
  /// First offending transient state (0-based) when not ok.
  int index = -1;
  std::string reason;
};

/// Failure rates nondecreasing across the second chain and the first second-
/// chain failure rate above the first-chain failure rate.
inline HazardCheck check_hazard_monotone(const SurrogateModel& m) {
  const int first = m.m1();
  if (!(m.fail_rate(first) > m.fail_rate(0))) {
    return {false, first, "failure rate entering the second chain does not exceed zeta"};
  }
  for (int i = first + 1; i < m.dim(); ++i) {
    if (m.fail_rate(i) < m.fail_rate(i - 1)) return {false, i, "failure rate decreases along the second chain"};
  }
  return {};
}

/// Every 2x2 minor nonnegative within tol.
inline bool is_tp2(const Mat& a, double tol = 1e-12) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index i2 = i + 1; i2 < a.rows(); ++i2)
      for (Eigen::Index k = 0; k < a.cols(); ++k)
        for (Eigen::Index k2 = k + 1; k2 < a.cols(); ++k2)
          if (a(i, k) * a(i2, k2) - a(i, k2) * a(i2, k) < -tol) return false;
  return true;
}

}  // namespace mabort

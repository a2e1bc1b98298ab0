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
#include "mabort/rng.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace mabort {

/// A positive continuous distribution: exponential, Erlang, Weibull, or a
/// finite mixture of those. Times are in minutes, rates in 1/min.
class DistributionSpec {
 public:
  enum class Kind { kExponential, kErlang, kWeibull, kMixture };

  static DistributionSpec exponential(double rate) {
    if (!(rate > 0) || !std::isfinite(rate)) throw ConfigError("exponential: rate must be positive");
    DistributionSpec d(Kind::kExponential);
    d.rate_ = rate;
    return d;
  }

  static DistributionSpec erlang(int shape, double rate) {
    if (shape < 1) throw ConfigError("erlang: shape must be >= 1");
    if (!(rate > 0) || !std::isfinite(rate)) throw ConfigError("erlang: rate must be positive");
    DistributionSpec d(Kind::kErlang);
    d.shape_ = shape;
    d.rate_ = rate;
    return d;
  }

  static DistributionSpec weibull(double shape, double scale) {
    if (!(shape > 0) || !(scale > 0)) throw ConfigError("weibull: shape and scale must be positive");
    DistributionSpec d(Kind::kWeibull);
    d.shape_ = shape;
    d.scale_ = scale;
    return d;
  }

  static DistributionSpec mixture(std::vector<double> weights, std::vector<DistributionSpec> comps) {
    if (weights.empty() || weights.size() != comps.size())
      throw ConfigError("mixture: weights and components must be non-empty and of equal length");
    double s = 0;
    for (double w : weights) {
      if (!(w >= 0)) throw ConfigError("mixture: negative weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ConfigError("mixture: weights must sum to 1");
    DistributionSpec d(Kind::kMixture);
    d.weights_ = std::move(weights);
    d.comps_ = std::make_shared<std::vector<DistributionSpec>>(std::move(comps));
    return d;
  }

  Kind kind() const { return kind_; }
  double rate() const { return rate_; }
  double shape() const { return shape_; }
  double scale() const { return scale_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<DistributionSpec>& components() const { return *comps_; }

  double cdf(double t) const {
    if (t <= 0) return 0.0;
    switch (kind_) {
      case Kind::kExponential: return -std::expm1(-rate_ * t);
      case Kind::kErlang: return boost::math::gamma_p(shape_, rate_ * t);
      case Kind::kWeibull: return -std::expm1(-std::pow(t / scale_, shape_));
      case Kind::kMixture: {
        double s = 0;
        for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * (*comps_)[i].cdf(t);
        return s;
      }
    }
    return 0.0;
  }

  /// 1 - cdf, evaluated without cancellation in the upper tail.
  double survival(double t) const {
    if (t <= 0) return 1.0;
    switch (kind_) {
      case Kind::kExponential: return std::exp(-rate_ * t);
      case Kind::kErlang: return boost::math::gamma_q(shape_, rate_ * t);
      case Kind::kWeibull: return std::exp(-std::pow(t / scale_, shape_));
      case Kind::kMixture: {
        double s = 0;
        for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * (*comps_)[i].survival(t);
        return s;
      }
    }
    return 1.0;
  }

  double pdf(double t) const {
    if (t < 0) return 0.0;
    switch (kind_) {
      case Kind::kExponential: return rate_ * std::exp(-rate_ * t);
      case Kind::kErlang: return boost::math::gamma_p_derivative(shape_, rate_ * t) * rate_;
      case Kind::kWeibull: {
        if (t == 0) return shape_ < 1 ? std::numeric_limits<double>::infinity() : (shape_ == 1 ? 1 / scale_ : 0.0);
        double z = t / scale_;
        return shape_ / scale_ * std::pow(z, shape_ - 1) * std::exp(-std::pow(z, shape_));
      }
      case Kind::kMixture: {
        double s = 0;
        for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * (*comps_)[i].pdf(t);
        return s;
      }
    }
    return 0.0;
  }

  double hazard(double t) const {
    double s = survival(t);
    return s > 0 ? pdf(t) / s : std::numeric_limits<double>::infinity();
  }

  double mean() const {
    switch (kind_) {
      case Kind::kExponential: return 1.0 / rate_;
      case Kind::kErlang: return shape_ / rate_;
      case Kind::kWeibull: return scale_ * std::tgamma(1.0 + 1.0 / shape_);
      case Kind::kMixture: {
        double s = 0;
        for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * (*comps_)[i].mean();
        return s;
      }
    }
    return 0.0;
  }

  double quantile(double p) const {
    if (!(p > 0 && p < 1)) throw ConfigError("quantile: p must lie in (0,1)");
    switch (kind_) {
      case Kind::kExponential: return -std::log1p(-p) / rate_;
      case Kind::kWeibull: return scale_ * std::pow(-std::log1p(-p), 1.0 / shape_);
      default: break;
    }
    double hi = std::max(1.0, mean());
    while (cdf(hi) <= p) hi *= 2;
    auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-10; };
    auto r = boost::math::tools::bisect([&](double t) { return cdf(t) - p; }, 0.0, hi, tol);
    return 0.5 * (r.first + r.second);
  }

  double sample(Stream& s) const {
    switch (kind_) {
      case Kind::kExponential: return s.exponential(rate_);
      case Kind::kErlang: {
        double t = 0;
        for (int i = 0; i < static_cast<int>(shape_); ++i) t += s.exponential(rate_);
        return t;
      }
      case Kind::kWeibull: return scale_ * std::pow(-std::log(s.uniform()), 1.0 / shape_);
      case Kind::kMixture: {
        double u = s.uniform();
        std::size_t i = 0;
        for (double acc = weights_[0]; i + 1 < weights_.size() && u > acc; acc += weights_[++i]) {
        }
        return (*comps_)[i].sample(s);
      }
    }
    return 0.0;
  }

  nlohmann::json to_json() const {
    switch (kind_) {
      case Kind::kExponential: return {{"kind", "exponential"}, {"rate", rate_}};
      case Kind::kErlang: return {{"kind", "erlang"}, {"shape", static_cast<int>(shape_)}, {"rate", rate_}};
      case Kind::kWeibull: return {{"kind", "weibull"}, {"shape", shape_}, {"scale", scale_}};
      case Kind::kMixture: {
        nlohmann::json c = nlohmann::json::array();
        for (const auto& d : *comps_) c.push_back(d.to_json());
        return {{"kind", "mixture"}, {"weights", weights_}, {"components", c}};
      }
    }
    return {};
  }

  static DistributionSpec from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("distribution: object with \"kind\" expected");
    const std::string k = j.at("kind").get<std::string>();
    auto only = [&](std::initializer_list<const char*> keys) {
      for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = it.key() == "kind";
        for (const char* key : keys) ok = ok || it.key() == key;
        if (!ok) throw ConfigError("distribution: unknown field \"" + it.key() + "\"");
      }
    };
    try {
      if (k == "exponential") {
        only({"rate"});
        return exponential(j.at("rate").get<double>());
      }
      if (k == "erlang") {
        only({"shape", "rate"});
        return erlang(j.at("shape").get<int>(), j.at("rate").get<double>());
      }
      if (k == "weibull") {
        only({"shape", "scale"});
        return weibull(j.at("shape").get<double>(), j.at("scale").get<double>());
      }
      if (k == "mixture") {
        only({"weights", "components"});
        std::vector<DistributionSpec> comps;
        for (const auto& c : j.at("components")) comps.push_back(from_json(c));
        return mixture(j.at("weights").get<std::vector<double>>(), std::move(comps));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("distribution: ") + e.what());
    }
    throw ConfigError("distribution: unknown kind \"" + k + "\"");
  }

 private:
  explicit DistributionSpec(Kind k) : kind_(k) {}

  Kind kind_;
  double rate_ = 0, shape_ = 0, scale_ = 0;
  std::vector<double> weights_;
  std::shared_ptr<std::vector<DistributionSpec>> comps_;
};

/// Convex combination of Erlang(i, rate) for i = 1..m.
class ErlangMixture {
 public:
  ErlangMixture(double rate, std::vector<double> weights) : rate_(rate), w_(std::move(weights)) {
    if (!(rate_ > 0)) throw ConfigError("ErlangMixture: rate must be positive");
    if (w_.empty()) throw ConfigError("ErlangMixture: no weights");
  }

  double rate() const { return rate_; }
  int size() const { return static_cast<int>(w_.size()); }
  const std::vector<double>& weights() const { return w_; }

  double cdf(double t) const { return 1.0 - survival(t); }

  /// P(T > t) = sum_j Poisson(j; rate*t) * P(shape > j).
  double survival(double t) const {
    if (t <= 0) return 1.0;
    const double x = rate_ * t;
    if (x > 600) {
      double s = 0;
      for (int i = 0; i < size(); ++i) s += w_[i] * boost::math::gamma_q(i + 1.0, x);
      return s;
    }
    double pois = std::exp(-x);
    double tail = 1.0;
    double s = 0;
    for (int j = 0; j < size(); ++j) {
      s += pois * tail;
      tail -= w_[j];
      pois *= x / (j + 1);
    }
    return std::max(0.0, s);
  }

  double pdf(double t) const {
    if (t < 0) return 0.0;
    double s = 0;
    for (int i = 0; i < size(); ++i) s += w_[i] * boost::math::gamma_p_derivative(i + 1.0, rate_ * t) * rate_;
    return s;
  }

  double mean() const {
    double s = 0;
    for (int i = 0; i < size(); ++i) s += w_[i] * (i + 1) / rate_;
    return s;
  }

  double sample(Stream& s) const {
    double u = s.uniform();
    int i = 0;
    for (double acc = w_[0]; i + 1 < size() && u > acc; acc += w_[++i]) {
    }
    double t = 0;
    for (int k = 0; k <= i; ++k) t += s.exponential(rate_);
    return t;
  }

 private:
  double rate_;
  std::vector<double> w_;
};

/// Erlang-mixture approximant of F with m phases at the given rate.
inline ErlangMixture erlang_mixture_approx(const DistributionSpec& F, int m, double rate) {
  if (m < 1) throw ConfigError("erlang_mixture_approx: m must be >= 1");
  if (!(rate > 0)) throw ConfigError("erlang_mixture_approx: rate must be positive");
  std::vector<double> w(m);
  double prev = 0.0;
  for (int i = 1; i < m; ++i) {
    double c = F.cdf(i / rate);
    if (!std::isfinite(c)) throw ModelError("erlang_mixture_approx: non-finite CDF");
    w[i - 1] = c - prev;
    prev = c;
  }
  w[m - 1] = F.survival((m - 1) / rate);
  return ErlangMixture(rate, std::move(w));
}

/// Mean of erlang_mixture_approx(F, m, rate) without building it.
inline double approx_mean(const DistributionSpec& F, int m, double rate) {
  double s = 0;
  for (int i = 0; i < m; ++i) s += F.survival(i / rate);
  return s / rate;
}

/// Rate at which the m-phase approximant reproduces the mean of F.
inline double moment_match_rate(const DistributionSpec& F, int m) {
  if (m < 1) throw ConfigError("moment_match_rate: m must be >= 1");
  const double target = F.mean();
  auto f = [&](double lam) { return approx_mean(F, m, lam) - target; };
  double lo = 1e-6, hi = 1e3;
  double flo = f(lo), fhi = f(hi);
  if (flo == 0) return lo;
  if (fhi == 0) return hi;
  if ((flo > 0) == (fhi > 0)) throw BracketError("moment_match_rate: no root in [1e-6, 1e3]");
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-13 * std::abs(a); };
  auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (r.first + r.second);
}

/// Max |F - approx| over a uniform grid on [0, horizon].
inline double sup_norm_error(const DistributionSpec& F, const ErlangMixture& approx, double horizon,
                             double step = 0.0) {
  if (!(horizon > 0)) throw ConfigError("sup_norm_error: horizon must be positive");
  if (!(step > 0) || step > horizon / 1e4) step = horizon / 1e4;
  const long n = static_cast<long>(std::ceil(horizon / step));
  double e = 0;
  for (long i = 0; i <= n; ++i) {
    double t = std::min(horizon, i * step);
    e = std::max(e, std::abs(F.cdf(t) - approx.cdf(t)));
  }
  return e;
}

}  // namespace mabort

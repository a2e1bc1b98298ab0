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
#include "mabort/rule.hpp"
#include "mabort/value.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mabort {

inline constexpr int kPolicySchemaVersion = 1;

/// Structural report attached to every solved policy.
struct Thresholds {
  int hat_n = 0;
  std::optional<int> tilde_n;
  bool never_abort = false;
  bool hazard_ok = true;
  bool no_intermediate = false;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"hat_n", hat_n}, {"never_abort", never_abort}, {"hazard_monotone", hazard_ok},
                        {"no_intermediate", no_intermediate}};
    j["tilde_n"] = tilde_n ? nlohmann::json(*tilde_n) : nlohmann::json(nullptr);
    return j;
  }

  static Thresholds from_json(const nlohmann::json& j) {
    Thresholds t;
    t.hat_n = j.at("hat_n").get<int>();
    if (!j.at("tilde_n").is_null()) t.tilde_n = j.at("tilde_n").get<int>();
    t.never_abort = j.at("never_abort").get<bool>();
    t.hazard_ok = j.at("hazard_monotone").get<bool>();
    t.no_intermediate = j.at("no_intermediate").get<bool>();
    return t;
  }
};

/// Thresholds of a model: n-hat falls back to N when the hazard certificate
/// fails or in multi-mission mode, and to 0 when aborting never pays.
inline Thresholds compute_thresholds(const ValueModel& vm) {
  Thresholds t;
  const auto& c = vm.cost();
  t.hazard_ok = check_hazard_monotone(vm.model()).ok;
  if (c.multi()) {
    t.never_abort = multi_no_abort(c, vm.model().lambda());
    t.hat_n = t.never_abort ? 0 : c.N;
  } else {
    t.never_abort = never_abort(c, vm.model().lambda());
    if (t.never_abort) t.hat_n = 0;
    else if (!t.hazard_ok) t.hat_n = c.N;
    else t.hat_n = find_hat_n(vm);
  }
  t.tilde_n = find_tilde_n(vm);
  if (t.hat_n >= 1 && !c.multi()) t.no_intermediate = no_intermediate_check(vm, t.hat_n).holds;
  return t;
}

/// Alpha vectors of one period; value = min over rows of alpha' pi.
struct AlphaSet {
  Mat alphas;
  std::vector<char> abort;

  int size() const { return static_cast<int>(alphas.rows()); }

  double value(const Vec& pi) const { return (alphas * pi).minCoeff(); }
};

/// Policy backed by per-period alpha sets.
class AlphaPolicy : public AbortRule {
 public:
  AlphaPolicy(std::shared_ptr<const ValueModel> vm, std::vector<AlphaSet> sets, Thresholds th,
              nlohmann::json meta = nlohmann::json::object())
      : vm_(std::move(vm)), sets_(std::move(sets)), th_(th), meta_(std::move(meta)) {
    if (static_cast<int>(sets_.size()) != vm_->N() + 1) throw ConfigError("alpha policy: need N + 1 periods");
  }

  const ValueModel& value_model() const { return *vm_; }
  std::shared_ptr<const ValueModel> value_model_ptr() const { return vm_; }
  const std::vector<AlphaSet>& sets() const { return sets_; }
  const Thresholds& thresholds() const { return th_; }
  const nlohmann::json& metadata() const { return meta_; }

  double value(int n, const Vec& pi) const { return sets_.at(n).value(pi); }

  /// One-step lookahead continuation value at period n < N.
  double continue_value(int n, const Vec& pi) const {
    if (n >= vm_->N()) throw ConfigError("continue_value: no decision at N");
    const AlphaSet& next = sets_[n + 1];
    Vec pred = vm_->Ptilde().transpose() * pi;
    double v = vm_->step_loss_alpha(n).dot(pi);
    for (int k = 1; k <= vm_->K(); ++k) v += (next.alphas * pred.cwiseProduct(vm_->lifted(k))).minCoeff();
    return v;
  }

  Action action(int n, const Vec& pi) const {
    if (n >= th_.hat_n || n >= vm_->N()) return Action::kContinue;
    return vm_->v_ab(n, pi) <= continue_value(n, pi) ? Action::kAbort : Action::kContinue;
  }

  std::unique_ptr<Episode> start() const override { return std::make_unique<Run>(this); }
  std::string name() const override { return name_; }
  void set_name(std::string s) { name_ = std::move(s); }

  nlohmann::json to_json() const {
    nlohmann::json periods = nlohmann::json::array();
    for (std::size_t n = 0; n < sets_.size(); ++n) {
      const auto& s = sets_[n];
      nlohmann::json a = nlohmann::json::array();
      for (int r = 0; r < s.size(); ++r) {
        std::vector<double> row(s.alphas.cols());
        for (Eigen::Index c = 0; c < s.alphas.cols(); ++c) row[c] = s.alphas(r, c);
        a.push_back(row);
      }
      std::vector<bool> ab(s.abort.begin(), s.abort.end());
      periods.push_back({{"n", n}, {"alphas", a}, {"abort", ab}});
    }
    return {{"schema_version", kPolicySchemaVersion},
            {"kind", "alpha-set"},
            {"metadata", meta_},
            {"thresholds", th_.to_json()},
            {"model", vm_->model().to_json()},
            {"cost", vm_->cost().to_json()},
            {"obs", vm_->obs().to_json()},
            {"periods", periods}};
  }

 private:
  class Run : public Episode {
   public:
    explicit Run(const AlphaPolicy* p) : p_(p), filter_(p->vm_->model(), p->vm_->obs(), p->vm_->cost().delta),
                                         pi_(p->vm_->model().pi0()) {}
    Action step(int n, int signal) override {
      pi_ = filter_.update(pi_, signal);
      renormalize(pi_);
      return p_->action(n, pi_);
    }
    std::string summary() const override {
      std::ostringstream os;
      os << "defect=" << pi_.tail(p_->vm_->model().m2()).sum();
      return os.str();
    }

   private:
    const AlphaPolicy* p_;
    BeliefFilter filter_;
    Vec pi_;
  };

  std::shared_ptr<const ValueModel> vm_;
  std::vector<AlphaSet> sets_;
  Thresholds th_;
  nlohmann::json meta_;
  std::string name_ = "proposed";
};

enum class LimitStatistic { kDefectProb, kRadius };

/// Per-period abort interval [lo, hi] on a scalar belief statistic.
struct ControlLimit {
  double lo = 0, hi = 0;
};

/// Policy backed by per-period control limits on a scalar statistic: the
/// defect probability for two transient states, the spherical radius when the
/// second chain has one phase.
class ControlLimitPolicy : public AbortRule {
 public:
  ControlLimitPolicy(std::shared_ptr<const ValueModel> vm, LimitStatistic stat,
                     std::vector<std::optional<ControlLimit>> limits, Thresholds th, double value0,
                     nlohmann::json meta = nlohmann::json::object())
      : vm_(std::move(vm)), stat_(stat), limits_(std::move(limits)), th_(th), value0_(value0),
        meta_(std::move(meta)) {}

  const ValueModel& value_model() const { return *vm_; }
  LimitStatistic statistic() const { return stat_; }
  const std::vector<std::optional<ControlLimit>>& limits() const { return limits_; }
  const Thresholds& thresholds() const { return th_; }
  /// Value of the discretized problem at the initial belief.
  double value0() const { return value0_; }

  double statistic_of(const Vec& pi) const {
    return stat_ == LimitStatistic::kDefectProb ? pi(pi.size() - 1) : spherical_radius(pi);
  }

  Action action(int n, const Vec& pi) const {
    if (n >= th_.hat_n || n >= static_cast<int>(limits_.size())) return Action::kContinue;
    const auto& l = limits_[n];
    if (!l) return Action::kContinue;
    double s = statistic_of(pi);
    return (s >= l->lo && s <= l->hi) ? Action::kAbort : Action::kContinue;
  }

  std::unique_ptr<Episode> start() const override { return std::make_unique<Run>(this); }
  std::string name() const override { return name_; }
  void set_name(std::string s) { name_ = std::move(s); }

  nlohmann::json to_json() const {
    nlohmann::json lim = nlohmann::json::array();
    for (const auto& l : limits_) lim.push_back(l ? nlohmann::json({l->lo, l->hi}) : nlohmann::json(nullptr));
    return {{"schema_version", kPolicySchemaVersion},
            {"kind", "control-limit-table"},
            {"statistic", stat_ == LimitStatistic::kDefectProb ? "defect-prob" : "radius"},
            {"metadata", meta_},
            {"thresholds", th_.to_json()},
            {"value0", value0_},
            {"model", vm_->model().to_json()},
            {"cost", vm_->cost().to_json()},
            {"obs", vm_->obs().to_json()},
            {"limits", lim}};
  }

 private:
  class Run : public Episode {
   public:
    explicit Run(const ControlLimitPolicy* p)
        : p_(p), filter_(p->vm_->model(), p->vm_->obs(), p->vm_->cost().delta), pi_(p->vm_->model().pi0()) {}
    Action step(int n, int signal) override {
      pi_ = filter_.update(pi_, signal);
      renormalize(pi_);
      return p_->action(n, pi_);
    }
    std::string summary() const override {
      std::ostringstream os;
      os << "stat=" << p_->statistic_of(pi_);
      return os.str();
    }

   private:
    const ControlLimitPolicy* p_;
    BeliefFilter filter_;
    Vec pi_;
  };

  std::shared_ptr<const ValueModel> vm_;
  LimitStatistic stat_;
  std::vector<std::optional<ControlLimit>> limits_;
  Thresholds th_;
  double value0_;
  nlohmann::json meta_;
  std::string name_ = "control-limit";
};

namespace detail {
inline CostModel cost_from_json(const nlohmann::json& j) {
  CostModel c;
  c.Cs = j.at("Cs").get<double>();
  c.Cm = j.at("Cm").get<std::vector<double>>();
  c.Cr = j.at("Cr").get<double>();
  c.delta = j.at("delta").get<double>();
  c.N = j.at("N").get<int>();
  c.w = j.at("w").get<std::vector<double>>();
  c.task_lengths = j.at("task_lengths").get<std::vector<int>>();
  c.validate();
  return c;
}
}  // namespace detail

/// Reads a policy artifact written by to_json().
inline std::shared_ptr<AbortRule> policy_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kPolicySchemaVersion) throw ConfigError("policy: unsupported schema");
    auto vm = std::make_shared<const ValueModel>(SurrogateModel::from_json(j.at("model")),
                                                 detail::cost_from_json(j.at("cost")),
                                                 ObservationModel::from_json(j.at("obs")));
    auto th = Thresholds::from_json(j.at("thresholds"));
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "alpha-set") {
      std::vector<AlphaSet> sets;
      for (const auto& p : j.at("periods")) {
        auto rows = p.at("alphas").get<std::vector<std::vector<double>>>();
        AlphaSet s;
        s.alphas.resize(static_cast<Eigen::Index>(rows.size()), vm->dim());
        for (std::size_t r = 0; r < rows.size(); ++r)
          for (int c = 0; c < vm->dim(); ++c) s.alphas(r, c) = rows[r].at(c);
        for (bool b : p.at("abort").get<std::vector<bool>>()) s.abort.push_back(b);
        sets.push_back(std::move(s));
      }
      return std::make_shared<AlphaPolicy>(vm, std::move(sets), th, j.at("metadata"));
    }
    if (kind == "control-limit-table") {
      std::vector<std::optional<ControlLimit>> lim;
      for (const auto& l : j.at("limits")) {
        if (l.is_null()) lim.emplace_back();
        else lim.push_back(ControlLimit{l.at(0).get<double>(), l.at(1).get<double>()});
      }
      auto stat = j.at("statistic").get<std::string>() == "radius" ? LimitStatistic::kRadius
                                                                   : LimitStatistic::kDefectProb;
      return std::make_shared<ControlLimitPolicy>(vm, stat, std::move(lim), th, j.at("value0").get<double>(),
                                                  j.at("metadata"));
    }
    throw ConfigError("policy: unknown kind \"" + kind + "\"");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("policy: ") + e.what());
  }
}

}  // namespace mabort

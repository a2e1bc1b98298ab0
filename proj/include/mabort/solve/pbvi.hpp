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
#include "mabort/parallel.hpp"
#include "mabort/rng.hpp"
#include "mabort/solve/hull.hpp"
#include "mabort/solve/policy.hpp"
#include "mabort/value.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mabort {

enum class PbviVariant { kClassical, kModified };

inline const char* to_string(PbviVariant v) { return v == PbviVariant::kModified ? "modified" : "classical"; }

struct PbviConfig {
  int L1 = 64;
  int Z1 = 30;
  int Z2 = 10;
  int W = 512;
  double eps = 1e-3;
  std::uint64_t seed = 20240607;
  /// Cap on belief points per period; 0 disables the cap.
  int max_points = 1024;
  /// Candidates closer than this to a stored point are dropped.
  double min_distance = 1e-9;
  int hull_cap = 512;
  double hull_tol = 1e-9;
  unsigned threads = 1;

  void validate() const {
    if (L1 < 1 || Z1 < 1 || Z2 < 1 || W < 1) throw ConfigError("pbvi: L1, Z1, Z2, W must be positive");
    if (!(eps > 0)) throw ConfigError("pbvi: eps must be positive");
    if (max_points < 0 || hull_cap < 1) throw ConfigError("pbvi: bad point caps");
  }

  nlohmann::json to_json() const {
    return {{"L1", L1},        {"Z1", Z1},           {"Z2", Z2},       {"W", W},
            {"eps", eps},      {"seed", seed},       {"max_points", max_points},
            {"min_distance", min_distance}, {"hull_cap", hull_cap}, {"hull_tol", hull_tol}};
  }
};

struct PbviIteration {
  int tau = 0;
  /// Solver wall time up to the end of this iteration's backup.
  double seconds = 0;
  double value0 = 0;
  double change = 0;
  long points = 0;
  long alphas = 0;
  long pruned = 0;
};

/// Called after each backup; return false to stop early. Time spent inside
/// the callback is not charged to the solver.
using PbviObserver = std::function<bool(const PbviIteration&, const AlphaPolicy&)>;

struct PbviResult {
  std::shared_ptr<AlphaPolicy> policy;
  std::vector<PbviIteration> iterations;
  std::vector<std::string> log;
};

/// Backs up one period: for each belief point, the better of the abort
/// vector and the continue vector assembled from the next period's set.
/// Returns the deduplicated set and, per point, its row index.
inline AlphaSet backup(const ValueModel& vm, int n, const Mat& points, const AlphaSet& next,
                       std::vector<int>* row_of_point = nullptr, unsigned threads = 1) {
  const int d = vm.dim();
  const int L = static_cast<int>(points.rows());
  const int K = vm.K();
  const Mat& Pt = vm.Ptilde();
  // G_k rows: P~ (d_k .* alpha) for each alpha of the next period
  std::vector<Mat> G(K);
  for (int k = 0; k < K; ++k) G[k] = (next.alphas.array().rowwise() * vm.lifted(k + 1).transpose().array()).matrix() *
                                     Pt.transpose();
  const Vec step = vm.step_loss_alpha(n);
  const Vec& ab = vm.abort_alpha(n);
  std::vector<std::vector<int>> choice(L, std::vector<int>(K));
  std::vector<char> is_abort(L);
  const int block = 256;
  const int nblocks = (L + block - 1) / block;
  parallel_for(nblocks, threads, [&](std::size_t b) {
    const int lo = static_cast<int>(b) * block;
    const int hi = std::min(L, lo + block);
    Mat P = points.middleRows(lo, hi - lo);
    Vec cont = P * step;
    for (int k = 0; k < K; ++k) {
      Mat V = P * G[k].transpose();
      for (int r = 0; r < hi - lo; ++r) {
        Eigen::Index idx;
        cont(r) += V.row(r).minCoeff(&idx);
        choice[lo + r][k] = static_cast<int>(idx);
      }
    }
    Vec vab = P * ab;
    for (int r = 0; r < hi - lo; ++r) is_abort[lo + r] = vab(r) <= cont(r);
  });
  AlphaSet out;
  std::vector<Vec> rows;
  std::map<std::vector<int>, int> seen;
  int abort_row = -1;
  if (row_of_point) row_of_point->assign(L, -1);
  for (int l = 0; l < L; ++l) {
    int row;
    if (is_abort[l]) {
      if (abort_row < 0) {
        abort_row = static_cast<int>(rows.size());
        rows.push_back(ab);
        out.abort.push_back(1);
      }
      row = abort_row;
    } else {
      auto it = seen.find(choice[l]);
      if (it == seen.end()) {
        Vec a = step;
        for (int k = 0; k < K; ++k) a += G[k].row(choice[l][k]).transpose();
        row = static_cast<int>(rows.size());
        rows.push_back(std::move(a));
        out.abort.push_back(0);
        seen.emplace(choice[l], row);
      } else {
        row = it->second;
      }
    }
    if (row_of_point) (*row_of_point)[l] = row;
  }
  out.alphas.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) out.alphas.row(r) = rows[r].transpose();
  return out;
}

namespace detail {

class PbviSolver {
 public:
  PbviSolver(std::shared_ptr<const ValueModel> vm, const PbviConfig& cfg, PbviVariant variant)
      : vm_(std::move(vm)), cfg_(cfg), variant_(variant) {
    cfg_.validate();
    N_ = vm_->N();
    d_ = vm_->dim();
    th_ = compute_thresholds(*vm_);
    hat_ = th_.hat_n;
  }

  PbviResult run(const PbviObserver& observer) {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    double excluded = 0;
    init_sets();
    init_points();
    PbviResult res;
    std::vector<AlphaSet> prev;
    for (int tau = 1; tau <= cfg_.Z1; ++tau) {
      prev = sets_;
      sweep();
      PbviIteration it;
      it.tau = tau;
      it.change = tau == 1 ? std::numeric_limits<double>::infinity() : change(prev);
      for (int n = 0; n < hat_; ++n) it.points += points_[n].rows();
      for (const auto& s : sets_) it.alphas += s.size();
      it.pruned = pruned_;
      auto pol = make_policy();
      it.value0 = std::min(vm_->v_ab(0, vm_->model().pi0()), pol->value(0, vm_->model().pi0()));
      it.seconds = std::chrono::duration<double>(clock::now() - t0).count() - excluded;
      res.iterations.push_back(it);
      res.policy = pol;
      if (observer) {
        auto c0 = clock::now();
        bool go = observer(it, *pol);
        excluded += std::chrono::duration<double>(clock::now() - c0).count();
        if (!go) break;
      }
      if (it.change < cfg_.eps) break;
      if (tau == cfg_.Z1) break;
      expand(tau);
    }
    res.log = std::move(log_);
    return res;
  }

 private:
  void init_sets() {
    sets_.assign(N_ + 1, AlphaSet{});
    for (int n = hat_; n <= N_; ++n) {
      AlphaSet s;
      s.alphas = (n == N_ ? vm_->terminal_alpha() : vm_->upper_alpha(n)).transpose();
      s.abort = {0};
      sets_[n] = std::move(s);
    }
  }

  void init_points() {
    points_.assign(std::max(hat_, 0), Mat(0, d_));
    abort_flags_.assign(std::max(hat_, 0), {});
    if (hat_ <= 0) return;
    points_[0] = vm_->model().pi0().transpose();
    std::vector<std::vector<Vec>> acc(hat_);
    const Mat& P = vm_->model().kernel(vm_->cost().delta)->P;
    BeliefFilter filter(vm_->model(), vm_->obs(), vm_->cost().delta);
    for (int l = 0; l < cfg_.L1; ++l) {
      Stream s(derive_seed(cfg_.seed, 1, l));
      int state = sample_index(vm_->model().pi0(), s);
      Vec pi = vm_->model().pi0();
      for (int n = 1; n < hat_; ++n) {
        state = sample_index(P.row(state).transpose(), s);
        if (state == d_) break;
        int cluster = state < vm_->model().m1() ? 0 : 1;
        int k = sample_index(vm_->obs().D().row(cluster).transpose(), s) + 1;
        pi = filter.update(pi, k);
        acc[n].push_back(pi);
      }
    }
    for (int n = 1; n < hat_; ++n) {
      std::vector<Vec> uniq;
      for (auto& v : acc[n]) {
        bool dup = false;
        for (auto& u : uniq)
          if ((u - v).norm() < cfg_.min_distance) {
            dup = true;
            break;
          }
        if (!dup) uniq.push_back(v);
      }
      points_[n].resize(static_cast<Eigen::Index>(uniq.size()), d_);
      for (std::size_t i = 0; i < uniq.size(); ++i) points_[n].row(i) = uniq[i].transpose();
    }
  }

  static int sample_index(const Vec& p, Stream& s) {
    double u = s.uniform() * p.sum();
    double acc = 0;
    for (int i = 0; i < p.size(); ++i) {
      acc += p(i);
      if (u <= acc && p(i) > 0) return i;
    }
    int last = static_cast<int>(p.size()) - 1;
    while (last > 0 && p(last) <= 0) --last;
    return last;
  }

  void sweep() {
    for (int n = hat_ - 1; n >= 0; --n) {
      if (points_[n].rows() == 0) {
        // no reachable point: keep the bound so later periods stay defined
        AlphaSet s;
        s.alphas = vm_->upper_alpha(n).transpose();
        s.abort = {0};
        sets_[n] = std::move(s);
        abort_flags_[n].clear();
        continue;
      }
      std::vector<int> rows;
      sets_[n] = backup(*vm_, n, points_[n], sets_[n + 1], &rows, cfg_.threads);
      abort_flags_[n].resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) abort_flags_[n][i] = sets_[n].abort[rows[i]];
    }
  }

  double change(const std::vector<AlphaSet>& prev) const {
    double c = 0;
    Mat I = Mat::Identity(d_, d_);
    for (int n = 0; n < hat_; ++n) {
      for (const Mat* P : std::initializer_list<const Mat*>{&points_[n], &I}) {
        if (P->rows() == 0) continue;
        Vec a = (*P * sets_[n].alphas.transpose()).rowwise().minCoeff();
        Vec b = (*P * prev[n].alphas.transpose()).rowwise().minCoeff();
        c = std::max(c, (a - b).cwiseAbs().maxCoeff());
      }
    }
    return c;
  }

  std::shared_ptr<AlphaPolicy> make_policy() const {
    nlohmann::json meta = {{"solver", std::string("pbvi-") + to_string(variant_)}, {"config", cfg_.to_json()}};
    auto p = std::make_shared<AlphaPolicy>(vm_, sets_, th_, meta);
    return p;
  }

  // Hull of abort-classified points per period, with e_d added up to n-tilde
  // when the current sets agree that aborting is optimal there.
  std::vector<Mat> build_hulls() {
    std::vector<Mat> hulls(hat_);
    bool add_vertex = false;
    if (th_.tilde_n && *th_.tilde_n < hat_) {
      Vec e = Vec::Zero(d_);
      e(d_ - 1) = 1;
      int nt = *th_.tilde_n;
      AlphaPolicy p(vm_, sets_, th_);
      add_vertex = vm_->v_ab(nt, e) <= p.continue_value(nt, e);
    }
    for (int n = 0; n < hat_; ++n) {
      std::vector<int> idx;
      for (std::size_t i = 0; i < abort_flags_[n].size(); ++i)
        if (abort_flags_[n][i]) idx.push_back(static_cast<int>(i));
      bool vertex = add_vertex && n <= *th_.tilde_n;
      Mat H(d_, static_cast<Eigen::Index>(idx.size()) + (vertex ? 1 : 0));
      for (std::size_t i = 0; i < idx.size(); ++i) H.col(i) = points_[n].row(idx[i]).transpose();
      if (vertex) {
        H.col(H.cols() - 1).setZero();
        H(d_ - 1, H.cols() - 1) = 1;
      }
      hulls[n] = farthest_point_thin(H, cfg_.hull_cap);
    }
    return hulls;
  }

  void expand(int tau) {
    const bool prune = variant_ == PbviVariant::kModified && tau > cfg_.Z2;
    std::vector<Mat> hulls;
    if (prune) hulls = build_hulls();
    BeliefFilter filter(vm_->model(), vm_->obs(), vm_->cost().delta);
    const int K = vm_->K();
    std::vector<Mat> grown(hat_);
    for (int n = 0; n + 1 < hat_; ++n) {
      const Mat& B = points_[n];
      const Mat& Bn = points_[n + 1];
      const int L = static_cast<int>(B.rows());
      const int cap = cfg_.max_points > 0 ? cfg_.max_points : std::numeric_limits<int>::max();
      if (Bn.rows() >= cap || L == 0) continue;
      struct Cand {
        double dist;
        int src;
        Vec v;
      };
      std::vector<Cand> best(L);
      std::vector<char> has(L, 0);
      std::vector<int> pruned_count(L, 0);
      parallel_for(L, cfg_.threads, [&](std::size_t l) {
        Vec pi = B.row(l).transpose();
        Vec pred = filter.predict(pi);
        std::vector<double> prob(K + 1);
        prob[0] = std::max(0.0, 1.0 - pred.sum());
        for (int k = 1; k <= K; ++k) prob[k] = pred.dot(filter.lifted(k));
        Stream s(derive_seed(cfg_.seed, 2 + tau, n, l));
        std::vector<char> seen(K + 1, 0);
        int distinct = 0;
        for (int w = 0; w < cfg_.W && distinct < K; ++w) {
          double u = s.uniform();
          int k = 0;
          double acc = prob[0];
          while (k < K && u > acc) acc += prob[++k];
          if (k > 0 && !seen[k]) {
            seen[k] = 1;
            ++distinct;
          }
        }
        double top = -1;
        for (int k = 1; k <= K; ++k) {
          if (!seen[k]) continue;
          Vec c = filter.update(pi, k);
          double dist = Bn.rows() ? std::sqrt((Bn.rowwise() - c.transpose()).rowwise().squaredNorm().minCoeff())
                                  : std::numeric_limits<double>::infinity();
          if (dist < cfg_.min_distance) continue;
          if (prune && hull_membership(c, hulls[n + 1], cfg_.hull_tol)) {
            ++pruned_count[l];
            continue;
          }
          if (dist > top) {
            top = dist;
            best[l] = Cand{dist, static_cast<int>(l), c};
            has[l] = 1;
          }
        }
      });
      for (int v : pruned_count) pruned_ += v;
      std::vector<Cand> chosen;
      for (int l = 0; l < L; ++l)
        if (has[l]) chosen.push_back(std::move(best[l]));
      std::stable_sort(chosen.begin(), chosen.end(), [](const Cand& a, const Cand& b) { return a.dist > b.dist; });
      std::vector<Vec> added;
      const int room = cap - static_cast<int>(Bn.rows());
      for (auto& c : chosen) {
        if (static_cast<int>(added.size()) >= room) break;
        bool dup = false;
        for (const auto& a : added)
          if ((a - c.v).norm() < cfg_.min_distance) {
            dup = true;
            break;
          }
        if (!dup) added.push_back(std::move(c.v));
      }
      if (added.empty() && Bn.rows() == 0 && prune) {
        log_.push_back("period " + std::to_string(n + 1) + ": pruning emptied the belief set; expanding unpruned");
        for (int l = 0; l < L && static_cast<int>(added.size()) < room; ++l) {
          Vec pi = B.row(l).transpose();
          for (int k = 1; k <= K; ++k) {
            try {
              added.push_back(filter.update(pi, k));
              break;
            } catch (const ImpossibleObservation&) {
            }
          }
        }
      }
      if (added.empty()) continue;
      Mat G(Bn.rows() + static_cast<Eigen::Index>(added.size()), d_);
      G.topRows(Bn.rows()) = Bn;
      for (std::size_t i = 0; i < added.size(); ++i) G.row(Bn.rows() + i) = added[i].transpose();
      grown[n + 1] = std::move(G);
    }
    for (int n = 1; n < hat_; ++n)
      if (grown[n].rows() > 0) points_[n] = std::move(grown[n]);
  }

  std::shared_ptr<const ValueModel> vm_;
  PbviConfig cfg_;
  PbviVariant variant_;
  int N_ = 0, d_ = 0, hat_ = 0;
  Thresholds th_;
  std::vector<AlphaSet> sets_;
  std::vector<Mat> points_;
  std::vector<std::vector<char>> abort_flags_;
  std::vector<std::string> log_;
  long pruned_ = 0;
};

}  // namespace detail

/// Point-based value iteration; the modified variant stops expanding inside
/// the convex hull of points already classified as abort.
inline PbviResult pbvi(std::shared_ptr<const ValueModel> vm, const PbviConfig& cfg, PbviVariant variant,
                       const PbviObserver& observer = {}) {
  detail::PbviSolver s(std::move(vm), cfg, variant);
  return s.run(observer);
}

}  // namespace mabort

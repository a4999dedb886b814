#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "vrank/core.hpp"

namespace vrank {

/**
 * 1-based rank of `target` under `scores`: one plus the number of items with
 * a strictly greater score, plus the number of tied items with a smaller id.
 * The id tie-break makes evaluation deterministic.
 */
inline int rank_of(const Eigen::VectorXd& scores, ItemId target) {
  if (target < 0 || target >= scores.size()) {
    throw std::out_of_range("rank_of: target outside catalog");
  }
  const double s = scores[target];
  int rank = 1;
  for (int i = 0; i < scores.size(); ++i) {
    if (scores[i] > s || (scores[i] == s && i < target)) ++rank;
  }
  return rank;
}

/// Per-item gain at a given cutoff: 1 for a hit, 1/log2(rank+1) for dcg.
inline double hit_at(int rank, int k) { return rank <= k ? 1.0 : 0.0; }
inline double ndcg_at(int rank, int k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

struct RankingEntry {
  double hr = 0.0;
  double ndcg = 0.0;
  std::size_t count = 0;

  void add(int rank, int k) {
    hr += hit_at(rank, k);
    ndcg += ndcg_at(rank, k);
    ++count;
  }
  void finalize() {
    if (count > 0) {
      hr /= static_cast<double>(count);
      ndcg /= static_cast<double>(count);
    }
  }
};

/// HR@k / NDCG@k means over a test set, optionally split by feedback type.
struct RankingReport {
  std::map<int, RankingEntry> all;
  std::map<int, RankingEntry> click;
  std::map<int, RankingEntry> purchase;
  bool breakdown = false;
};

using StateScorer = std::function<Eigen::VectorXd(const SessionState&)>;

inline RankingReport evaluate_ranking(const StateScorer& scorer, const LoggedDataset& data,
                                      const std::vector<int>& ks, bool breakdown = false) {
  if (data.num_transitions() == 0) {
    throw std::invalid_argument("evaluate_ranking: empty test set");
  }
  for (int k : ks) {
    if (k < 1 || k > data.catalog_size) {
      throw std::invalid_argument("evaluate_ranking: k outside [1, catalog_size]");
    }
  }
  RankingReport report;
  report.breakdown = breakdown;
  for (const auto& traj : data.trajectories) {
    for (const auto& t : traj.transitions) {
      const Eigen::VectorXd scores = scorer(t.state);
      const int rank = rank_of(scores, t.action);
      for (int k : ks) {
        report.all[k].add(rank, k);
        if (breakdown) {
          (t.feedback == Feedback::Click ? report.click[k] : report.purchase[k]).add(rank, k);
        }
      }
    }
  }
  for (auto& [k, e] : report.all) e.finalize();
  for (auto& [k, e] : report.click) e.finalize();
  for (auto& [k, e] : report.purchase) e.finalize();
  return report;
}

using StateActionValue = std::function<double(const SessionState&, ItemId)>;

/**
 * Mean squared positive exceedance of the learned value over the empirical
 * discounted return-to-go along logged trajectories.
 */
inline double overestimation_bias(const StateActionValue& qvalue, const LoggedDataset& data,
                                  double gamma) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& traj : data.trajectories) {
    for (int k = 0; k < traj.horizon(); ++k) {
      const Transition& t = traj.transitions[k];
      const double v = discounted_return(traj, k, gamma);
      const double excess = std::max(qvalue(t.state, t.action) - v, 0.0);
      total += excess * excess;
      ++count;
    }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace vrank

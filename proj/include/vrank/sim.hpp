#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrank/core.hpp"
#include "vrank/rng.hpp"

namespace vrank {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct SimConfig {
  int catalog_size = 100;
  int num_categories = 20;
  double click_base = 0.0;
  double purchase_threshold = 0.5;
  double interest_drift = 0.1;
  std::uint64_t seed = 1;
};

struct StepResult {
  bool clicked = false;
  bool purchased = false;
};

/**
 * Latent-interest user simulator. Each item belongs to one category; a user
 * episode draws a per-category interest vector in [-1, 1]. A recommended
 * item is clicked with probability sigmoid(click_base + interest[category]),
 * purchased when additionally the interest exceeds the purchase threshold,
 * and each click drifts the category interest upward (clamped).
 */
class SimWorld {
 public:
  explicit SimWorld(const SimConfig& cfg)
      : cfg_(cfg), rng_(cfg.seed) {
    if (cfg.catalog_size < 2) throw std::invalid_argument("SimWorld: catalog_size < 2");
    if (cfg.num_categories < 1 || cfg.num_categories > cfg.catalog_size) {
      throw std::invalid_argument("SimWorld: num_categories outside [1, catalog_size]");
    }
    item_category_.resize(cfg.catalog_size);
    for (int i = 0; i < cfg.catalog_size; ++i) item_category_[i] = i % cfg.num_categories;
    interest_ = Eigen::VectorXd::Zero(cfg.num_categories);
    new_user();
  }

  const SimConfig& config() const { return cfg_; }
  int catalog() const { return cfg_.catalog_size; }
  int category(ItemId item) const {
    if (item < 0 || item >= cfg_.catalog_size) throw std::out_of_range("SimWorld: bad item");
    return item_category_[item];
  }
  const Eigen::VectorXd& interest() const { return interest_; }
  void set_interest(const Eigen::VectorXd& v) {
    if (v.size() != cfg_.num_categories) throw std::invalid_argument("SimWorld: bad interest size");
    interest_ = v.cwiseMax(-1.0).cwiseMin(1.0);
  }

  /// Starts a fresh user episode with interests drawn from a per-episode
  /// seeded stream, so episode k is reproducible independent of history.
  void new_user() {
    Rng episode_rng(mix_seed(cfg_.seed, 0x5e5510, episode_counter_++));
    for (int c = 0; c < cfg_.num_categories; ++c) {
      interest_[c] = episode_rng.uniform(-1.0, 1.0);
    }
  }

  double click_prob(ItemId item) const {
    return sigmoid(cfg_.click_base + interest_[category(item)]);
  }

  bool would_purchase(ItemId item) const {
    return interest_[category(item)] > cfg_.purchase_threshold;
  }

  /// Ground-truth expected raw reward of recommending `item` right now.
  double expected_raw_reward(ItemId item, const RewardSpec& spec) const {
    return click_prob(item) * spec.raw(would_purchase(item) ? Feedback::Purchase : Feedback::Click);
  }

  StepResult step(ItemId item) {
    StepResult out;
    out.clicked = rng_.bernoulli(click_prob(item));
    if (out.clicked) {
      out.purchased = would_purchase(item);
      const int c = category(item);
      interest_[c] = std::min(1.0, interest_[c] + cfg_.interest_drift);
    }
    return out;
  }

  Rng& rng() { return rng_; }

 private:
  SimConfig cfg_;
  std::vector<int> item_category_;
  Eigen::VectorXd interest_;
  Rng rng_;
  std::uint64_t episode_counter_ = 0;
};

// ---------------------------------------------------------------------------
// Behavior (logging) policies.
// ---------------------------------------------------------------------------

struct BehaviorPolicy {
  enum class Kind { Random, MaximumReward, Popularity };

  Kind kind = Kind::Random;
  int top_k = 10;                   // pool size for MaximumReward
  std::vector<double> popularity;   // global click counts, Popularity only

  static BehaviorPolicy random() { return BehaviorPolicy{Kind::Random, 0, {}}; }
  static BehaviorPolicy maximum_reward(int top_k) {
    if (top_k < 1) throw std::invalid_argument("BehaviorPolicy: top_k < 1");
    return BehaviorPolicy{Kind::MaximumReward, top_k, {}};
  }
  static BehaviorPolicy popularity_from(const LoggedDataset& data) {
    BehaviorPolicy b{Kind::Popularity, 0, std::vector<double>(data.catalog_size, 0.0)};
    for (const auto& traj : data.trajectories) {
      for (const auto& t : traj.transitions) b.popularity[t.action] += 1.0;
    }
    return b;
  }
};

inline const char* behavior_name(BehaviorPolicy::Kind k) {
  switch (k) {
    case BehaviorPolicy::Kind::Random: return "random";
    case BehaviorPolicy::Kind::MaximumReward: return "maximum";
    case BehaviorPolicy::Kind::Popularity: return "popularity";
  }
  return "random";
}

inline BehaviorPolicy::Kind parse_behavior(const std::string& s) {
  if (s == "random") return BehaviorPolicy::Kind::Random;
  if (s == "maximum") return BehaviorPolicy::Kind::MaximumReward;
  if (s == "popularity") return BehaviorPolicy::Kind::Popularity;
  throw std::invalid_argument("unknown behavior policy: " + s);
}

namespace detail {

/// Item ids sorted by descending score, ties broken by ascending id.
inline std::vector<ItemId> ranked_items(const Eigen::VectorXd& scores) {
  std::vector<ItemId> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&scores](ItemId a, ItemId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

inline Eigen::VectorXd true_reward_scores(const SimWorld& world, const RewardSpec& spec) {
  Eigen::VectorXd scores(world.catalog());
  for (ItemId i = 0; i < world.catalog(); ++i) scores[i] = world.expected_raw_reward(i, spec);
  return scores;
}

}  // namespace detail

/// One recommendation drawn from the behavior policy.
inline ItemId behavior_action(const BehaviorPolicy& b, const SimWorld& world,
                              const RewardSpec& spec, Rng& rng) {
  switch (b.kind) {
    case BehaviorPolicy::Kind::Random:
      return rng.uniform_int(world.catalog());
    case BehaviorPolicy::Kind::MaximumReward: {
      const auto order = detail::ranked_items(detail::true_reward_scores(world, spec));
      const int pool = std::min<int>(b.top_k, world.catalog());
      return order[rng.uniform_int(pool)];
    }
    case BehaviorPolicy::Kind::Popularity: {
      if (static_cast<int>(b.popularity.size()) != world.catalog()) {
        throw std::invalid_argument("BehaviorPolicy: popularity counts missing");
      }
      Eigen::VectorXd scores =
          Eigen::Map<const Eigen::VectorXd>(b.popularity.data(), world.catalog());
      return detail::ranked_items(scores)[0];
    }
  }
  throw std::logic_error("behavior_action: unreachable");
}

/**
 * Generates a logged dataset of implicit feedback. Each session runs
 * `max_len` recommendation steps for a fresh user; only clicked steps become
 * transitions (the history grows on clicks), and sessions with fewer than
 * the minimum number of clicks are discarded.
 */
inline LoggedDataset generate_logged(SimWorld& world, const BehaviorPolicy& behavior,
                                     int num_sessions, int max_len, const RewardSpec& spec) {
  if (max_len < kMinSessionLength) {
    throw std::invalid_argument("generate_logged: max_len below minimum session length");
  }
  spec.validate();
  LoggedDataset data;
  data.catalog_size = world.catalog();
  data.reward_spec = spec;
  for (int s = 0; s < num_sessions; ++s) {
    world.new_user();
    std::vector<ItemId> items;
    std::vector<Feedback> labels;
    for (int step = 0; step < max_len; ++step) {
      const ItemId a = behavior_action(behavior, world, spec, world.rng());
      const StepResult r = world.step(a);
      if (r.clicked) {
        items.push_back(a);
        labels.push_back(r.purchased ? Feedback::Purchase : Feedback::Click);
      }
    }
    if (static_cast<int>(items.size()) >= kMinSessionLength) {
      data.trajectories.push_back(make_trajectory(items, labels, spec, world.catalog()));
    }
  }
  if (data.trajectories.empty()) {
    throw std::runtime_error("generate_logged: no session reached the minimum length");
  }
  return data;
}

// ---------------------------------------------------------------------------
// Online evaluation.
// ---------------------------------------------------------------------------

struct RolloutResult {
  double ctr = 0.0;
  double coverage_at_k = 0.0;  // percent of catalog
  std::size_t steps = 0;
  std::size_t clicks = 0;
};

using RolloutScorer = std::function<Eigen::VectorXd(const SessionState&)>;

/**
 * Greedy online evaluation of a score-based policy: at every step the top-1
 * item is recommended and the per-step top-k list feeds coverage. Sessions
 * restart (fresh user, empty history) every `max_len` steps.
 */
inline RolloutResult online_rollout(SimWorld& world, const RolloutScorer& scorer, int num_steps,
                                    int top_k, int max_len) {
  if (num_steps < 1) throw std::invalid_argument("online_rollout: num_steps < 1");
  if (top_k < 1 || top_k > world.catalog()) {
    throw std::invalid_argument("online_rollout: top_k outside [1, catalog]");
  }
  std::vector<bool> seen(world.catalog(), false);
  RolloutResult res;
  SessionState state;
  int session_step = 0;
  for (int step = 0; step < num_steps; ++step) {
    if (session_step == 0) {
      world.new_user();
      state = SessionState{};
    }
    const auto order = detail::ranked_items(scorer(state));
    for (int j = 0; j < top_k; ++j) seen[order[j]] = true;
    const ItemId rec = order[0];
    const StepResult r = world.step(rec);
    if (r.clicked) {
      ++res.clicks;
      state = extend(state, rec);
    }
    ++res.steps;
    if (++session_step == max_len) session_step = 0;
  }
  res.ctr = static_cast<double>(res.clicks) / static_cast<double>(res.steps);
  res.coverage_at_k = 100.0 *
                      static_cast<double>(std::count(seen.begin(), seen.end(), true)) /
                      static_cast<double>(world.catalog());
  return res;
}

/// Online evaluation of a behavior policy, reported for reference. Sampling
/// policies contribute their sampled recommendation to coverage; ranking
/// policies contribute their top-k list.
inline RolloutResult online_rollout(SimWorld& world, const BehaviorPolicy& behavior,
                                    const RewardSpec& spec, int num_steps, int top_k,
                                    int max_len) {
  if (num_steps < 1) throw std::invalid_argument("online_rollout: num_steps < 1");
  std::vector<bool> seen(world.catalog(), false);
  RolloutResult res;
  int session_step = 0;
  for (int step = 0; step < num_steps; ++step) {
    if (session_step == 0) world.new_user();
    ItemId rec;
    if (behavior.kind == BehaviorPolicy::Kind::Random) {
      rec = behavior_action(behavior, world, spec, world.rng());
      seen[rec] = true;
    } else {
      const Eigen::VectorXd scores =
          behavior.kind == BehaviorPolicy::Kind::MaximumReward
              ? detail::true_reward_scores(world, spec)
              : Eigen::Map<const Eigen::VectorXd>(behavior.popularity.data(), world.catalog());
      const auto order = detail::ranked_items(scores);
      for (int j = 0; j < std::min(top_k, world.catalog()); ++j) seen[order[j]] = true;
      rec = behavior.kind == BehaviorPolicy::Kind::MaximumReward
                ? order[world.rng().uniform_int(std::min<int>(behavior.top_k, world.catalog()))]
                : order[0];
    }
    if (world.step(rec).clicked) ++res.clicks;
    ++res.steps;
    if (++session_step == max_len) session_step = 0;
  }
  res.ctr = static_cast<double>(res.clicks) / static_cast<double>(res.steps);
  res.coverage_at_k = 100.0 *
                      static_cast<double>(std::count(seen.begin(), seen.end(), true)) /
                      static_cast<double>(world.catalog());
  return res;
}

}  // namespace vrank

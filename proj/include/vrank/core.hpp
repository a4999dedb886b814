#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrank/rng.hpp"

namespace vrank {

using ItemId = int;

/// Minimum number of interactions a session must have to be kept.
inline constexpr int kMinSessionLength = 3;

enum class Feedback { Click, Purchase };

inline const char* feedback_name(Feedback f) {
  return f == Feedback::Click ? "click" : "purchase";
}

inline Feedback parse_feedback(const std::string& s) {
  if (s == "click") return Feedback::Click;
  if (s == "purchase") return Feedback::Purchase;
  throw std::invalid_argument("unknown feedback label: " + s);
}

/**
 * Maps feedback labels to numeric rewards. Rewards are stored shifted so that
 * every stored value is nonpositive; the shift is kept so raw values stay
 * recoverable for reporting.
 */
struct RewardSpec {
  double click_reward = 1.0;
  double purchase_reward = 5.0;
  double shift = 5.0;

  double raw(Feedback f) const {
    return f == Feedback::Click ? click_reward : purchase_reward;
  }
  double stored(Feedback f) const { return raw(f) - shift; }

  void validate() const {
    if (shift < std::max(click_reward, purchase_reward)) {
      throw std::invalid_argument("RewardSpec: shift below max raw reward");
    }
  }
};

/// Prefix of a session: the ordered list of items interacted with so far.
struct SessionState {
  std::vector<ItemId> history;
  int step_index = 0;

  bool operator==(const SessionState& o) const {
    return history == o.history && step_index == o.step_index;
  }
};

inline SessionState extend(const SessionState& s, ItemId action) {
  SessionState next = s;
  next.history.push_back(action);
  next.step_index = s.step_index + 1;
  return next;
}

struct Transition {
  SessionState state;
  ItemId action = 0;
  double reward = 0.0;
  SessionState next_state;
  bool terminal = false;
  Feedback feedback = Feedback::Click;
};

struct Trajectory {
  std::vector<Transition> transitions;

  int horizon() const { return static_cast<int>(transitions.size()); }
};

/// Builds a chained trajectory from an ordered session of items and labels.
inline Trajectory make_trajectory(const std::vector<ItemId>& items,
                                  const std::vector<Feedback>& labels,
                                  const RewardSpec& spec, int catalog_size) {
  if (items.size() != labels.size()) {
    throw std::invalid_argument("make_trajectory: items/labels size mismatch");
  }
  if (static_cast<int>(items.size()) < kMinSessionLength) {
    throw std::invalid_argument("make_trajectory: session shorter than minimum length");
  }
  Trajectory traj;
  traj.transitions.reserve(items.size());
  SessionState state;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const ItemId a = items[k];
    if (a < 0 || a >= catalog_size) {
      throw std::out_of_range("make_trajectory: item id outside catalog");
    }
    Transition t;
    t.state = state;
    t.action = a;
    t.feedback = labels[k];
    t.reward = spec.stored(labels[k]);
    t.next_state = extend(state, a);
    t.terminal = (k + 1 == items.size());
    state = t.next_state;
    traj.transitions.push_back(std::move(t));
  }
  return traj;
}

struct LoggedDataset {
  std::vector<Trajectory> trajectories;
  int catalog_size = 0;
  RewardSpec reward_spec;

  std::size_t num_transitions() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.transitions.size();
    return n;
  }

  void validate() const {
    if (trajectories.empty()) throw std::invalid_argument("LoggedDataset: empty");
    if (catalog_size < 2) throw std::invalid_argument("LoggedDataset: catalog_size < 2");
    for (const auto& traj : trajectories) {
      if (traj.horizon() < kMinSessionLength) {
        throw std::invalid_argument("LoggedDataset: session shorter than minimum length");
      }
      for (std::size_t k = 0; k < traj.transitions.size(); ++k) {
        const Transition& t = traj.transitions[k];
        if (t.action < 0 || t.action >= catalog_size) {
          throw std::out_of_range("LoggedDataset: item id outside catalog");
        }
        if (!std::isfinite(t.reward) || t.reward > 0.0) {
          throw std::invalid_argument("LoggedDataset: stored reward must be finite and <= 0");
        }
        if (!(t.next_state == extend(t.state, t.action))) {
          throw std::invalid_argument("LoggedDataset: broken state chaining");
        }
        if (k + 1 < traj.transitions.size() &&
            !(traj.transitions[k + 1].state == t.next_state)) {
          throw std::invalid_argument("LoggedDataset: consecutive transitions do not chain");
        }
      }
    }
  }
};

/**
 * Partitions sessions into train/valid/test. Whole sessions move together so
 * no session straddles splits; the assignment is a seeded shuffle.
 */
inline std::array<LoggedDataset, 3> split_dataset(const LoggedDataset& data,
                                                  double train_frac, double valid_frac,
                                                  double test_frac, std::uint64_t seed) {
  if (train_frac <= 0 || valid_frac <= 0 || test_frac <= 0) {
    throw std::invalid_argument("split_dataset: fractions must be positive");
  }
  if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: fractions must sum to 1");
  }
  const std::size_t n = data.trajectories.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const std::size_t n_valid = static_cast<std::size_t>(std::llround(valid_frac * static_cast<double>(n)));

  std::array<LoggedDataset, 3> out;
  for (auto& d : out) {
    d.catalog_size = data.catalog_size;
    d.reward_spec = data.reward_spec;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& traj = data.trajectories[order[i]];
    if (i < n_train) {
      out[0].trajectories.push_back(traj);
    } else if (i < n_train + n_valid) {
      out[1].trajectories.push_back(traj);
    } else {
      out[2].trajectories.push_back(traj);
    }
  }
  return out;
}

/// Recomputes stored rewards from feedback labels under a new spec.
inline LoggedDataset apply_reward_spec(const LoggedDataset& data, const RewardSpec& spec) {
  spec.validate();
  LoggedDataset out = data;
  out.reward_spec = spec;
  for (auto& traj : out.trajectories) {
    for (auto& t : traj.transitions) {
      t.reward = spec.stored(t.feedback);
    }
  }
  return out;
}

/// Discounted sum of stored rewards from `start` to the end of the trajectory.
inline double discounted_return(const Trajectory& traj, int start, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) {
    throw std::invalid_argument("discounted_return: gamma outside [0, 1]");
  }
  if (start < 0 || start >= traj.horizon()) {
    throw std::out_of_range("discounted_return: start outside trajectory");
  }
  double total = 0.0;
  double weight = 1.0;
  for (int t = start; t < traj.horizon(); ++t) {
    total += weight * traj.transitions[t].reward;
    weight *= gamma;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Session log file format: one line per interaction,
//   session_id,order_index,item_id,feedback
// with feedback in {click, purchase}; lines within a session sorted by
// order_index.
// ---------------------------------------------------------------------------

inline void write_session_log(std::ostream& os, const LoggedDataset& data) {
  for (std::size_t s = 0; s < data.trajectories.size(); ++s) {
    const auto& traj = data.trajectories[s];
    for (std::size_t k = 0; k < traj.transitions.size(); ++k) {
      const Transition& t = traj.transitions[k];
      os << s << ',' << k << ',' << t.action << ',' << feedback_name(t.feedback) << '\n';
    }
  }
}

inline LoggedDataset read_session_log(std::istream& is, int catalog_size,
                                      const RewardSpec& spec) {
  spec.validate();
  struct Row {
    int order;
    ItemId item;
    Feedback fb;
  };
  std::map<long long, std::vector<Row>> sessions;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string sid, order, item, fb;
    if (!std::getline(ls, sid, ',') || !std::getline(ls, order, ',') ||
        !std::getline(ls, item, ',') || !std::getline(ls, fb)) {
      throw std::invalid_argument("session log: malformed line " + std::to_string(lineno));
    }
    Row row{std::stoi(order), std::stoi(item), parse_feedback(fb)};
    sessions[std::stoll(sid)].push_back(row);
  }

  LoggedDataset data;
  data.catalog_size = catalog_size;
  data.reward_spec = spec;
  for (auto& [sid, rows] : sessions) {
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.order < b.order; });
    if (static_cast<int>(rows.size()) < kMinSessionLength) continue;
    std::vector<ItemId> items;
    std::vector<Feedback> labels;
    for (const Row& r : rows) {
      items.push_back(r.item);
      labels.push_back(r.fb);
    }
    data.trajectories.push_back(make_trajectory(items, labels, spec, catalog_size));
  }
  if (data.trajectories.empty()) {
    throw std::runtime_error("session log: no sessions of minimum length");
  }
  return data;
}

}  // namespace vrank

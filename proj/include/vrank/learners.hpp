#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrank/core.hpp"
#include "vrank/features.hpp"
#include "vrank/metrics.hpp"
#include "vrank/models.hpp"
#include "vrank/rng.hpp"

namespace vrank {

enum class Algo { MLE, DQN, DQN_ONE, DQN_NS, PG, VR_BANDIT, VR, VR_NW, VR_V };

inline std::string algo_name(Algo a) {
  switch (a) {
    case Algo::MLE: return "MLE";
    case Algo::DQN: return "DQN";
    case Algo::DQN_ONE: return "DQN-ONE";
    case Algo::DQN_NS: return "DQN-NS";
    case Algo::PG: return "PG";
    case Algo::VR_BANDIT: return "VR-BANDIT";
    case Algo::VR: return "VR";
    case Algo::VR_NW: return "VR-NW";
    case Algo::VR_V: return "VR-V";
  }
  return "?";
}

inline Algo parse_algo(const std::string& s) {
  static const std::map<std::string, Algo> table = {
      {"MLE", Algo::MLE},           {"DQN", Algo::DQN},
      {"DQN-ONE", Algo::DQN_ONE},   {"DQN_ONE", Algo::DQN_ONE},
      {"DQN-NS", Algo::DQN_NS},     {"DQN_NS", Algo::DQN_NS},
      {"PG", Algo::PG},             {"VR-BANDIT", Algo::VR_BANDIT},
      {"VR_BANDIT", Algo::VR_BANDIT}, {"VR", Algo::VR},
      {"VR-NW", Algo::VR_NW},       {"VR_NW", Algo::VR_NW},
      {"VR-V", Algo::VR_V},         {"VR_V", Algo::VR_V},
  };
  auto it = table.find(s);
  if (it == table.end()) throw std::invalid_argument("unknown algorithm: " + s);
  return it->second;
}

inline bool algo_trains_q(Algo a) {
  return a == Algo::DQN || a == Algo::DQN_ONE || a == Algo::DQN_NS || a == Algo::VR_BANDIT ||
         a == Algo::VR || a == Algo::VR_NW || a == Algo::VR_V;
}
inline bool algo_ranks_by_q(Algo a) {
  return a == Algo::DQN || a == Algo::DQN_ONE || a == Algo::DQN_NS;
}
inline bool algo_is_vr(Algo a) {
  return a == Algo::VR_BANDIT || a == Algo::VR || a == Algo::VR_NW || a == Algo::VR_V;
}
inline bool algo_needs_logging_policy(Algo a) { return a == Algo::PG || algo_is_vr(a); }

/// Hyperparameters shared by every learning algorithm.
struct VRConfig {
  double alpha = 1.0;   // posterior temperature
  double beta = 0.4;    // reward vs ranking trade-off in the M-step
  double gamma = 0.5;   // discount factor
  double cap = 10.0;    // importance-weight cap for the policy gradient
  double is_floor = 1e-6;  // denominator floor for importance weights
  int sync_interval = 100;
  double lr_policy = 0.05;
  double lr_q = 0.05;
  double lr_logging = 0.05;
  int exact_expectation_threshold = 512;
  int batch_size = 64;
  int pretrain_epochs = 5;
  int mstep_iterations = 1;  // gradient applications per M-step
  double decay = 0.8;        // featurizer decay
  double q_init_scale = 1e-3;

  void validate() const {
    if (alpha <= 0.0) throw std::invalid_argument("VRConfig: alpha must be positive");
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("VRConfig: beta outside [0, 1]");
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("VRConfig: gamma outside [0, 1]");
    if (cap <= 0.0) throw std::invalid_argument("VRConfig: cap must be positive");
    if (is_floor < 0.0) throw std::invalid_argument("VRConfig: is_floor must be nonnegative");
    if (sync_interval < 1) throw std::invalid_argument("VRConfig: sync_interval < 1");
    if (batch_size < 1) throw std::invalid_argument("VRConfig: batch_size < 1");
    if (mstep_iterations < 1) throw std::invalid_argument("VRConfig: mstep_iterations < 1");
    if (pretrain_epochs < 0) throw std::invalid_argument("VRConfig: pretrain_epochs < 0");
    if (decay < 0.0 || decay >= 1.0) throw std::invalid_argument("VRConfig: decay outside [0, 1)");
    if (exact_expectation_threshold < 0) {
      throw std::invalid_argument("VRConfig: exact_expectation_threshold < 0");
    }
  }
};

// ---------------------------------------------------------------------------
// Flattened view of a dataset with cached features and returns-to-go.
// ---------------------------------------------------------------------------

struct Sample {
  Eigen::VectorXd phi;
  Eigen::VectorXd phi_next;
  ItemId action = 0;
  double reward = 0.0;  // stored (shifted) reward
  bool terminal = false;
  Feedback feedback = Feedback::Click;
  double rtg_stored = 0.0;  // discounted return-to-go of stored rewards
  double rtg_raw = 0.0;     // same on raw (unshifted) rewards
  const Transition* src = nullptr;
  int traj_index = 0;
  int step_index = 0;
};

struct FlatData {
  std::vector<Sample> samples;
  std::vector<std::vector<int>> trajectories;  // sample ids per trajectory
  int catalog = 0;
  int dim = 0;
  double decay = 0.8;
  double gamma = 0.5;
  RewardSpec spec;
};

inline FlatData flatten(const LoggedDataset& data, double decay, double gamma) {
  FlatData flat;
  flat.catalog = data.catalog_size;
  flat.dim = feature_dim(data.catalog_size);
  flat.decay = decay;
  flat.gamma = gamma;
  flat.spec = data.reward_spec;
  flat.samples.reserve(data.num_transitions());
  for (std::size_t ti = 0; ti < data.trajectories.size(); ++ti) {
    const Trajectory& traj = data.trajectories[ti];
    const int horizon = traj.horizon();
    std::vector<double> rtg_stored(horizon), rtg_raw(horizon);
    double acc_stored = 0.0, acc_raw = 0.0;
    for (int t = horizon - 1; t >= 0; --t) {
      acc_stored = traj.transitions[t].reward + gamma * acc_stored;
      acc_raw = (traj.transitions[t].reward + data.reward_spec.shift) + gamma * acc_raw;
      rtg_stored[t] = acc_stored;
      rtg_raw[t] = acc_raw;
    }
    std::vector<int> ids;
    ids.reserve(horizon);
    for (int t = 0; t < horizon; ++t) {
      const Transition& tr = traj.transitions[t];
      Sample s;
      s.phi = featurize(tr.state, data.catalog_size, decay);
      s.phi_next = featurize(tr.next_state, data.catalog_size, decay);
      s.action = tr.action;
      s.reward = tr.reward;
      s.terminal = tr.terminal;
      s.feedback = tr.feedback;
      s.rtg_stored = rtg_stored[t];
      s.rtg_raw = rtg_raw[t];
      s.src = &tr;
      s.traj_index = static_cast<int>(ti);
      s.step_index = t;
      ids.push_back(static_cast<int>(flat.samples.size()));
      flat.samples.push_back(std::move(s));
    }
    flat.trajectories.push_back(std::move(ids));
  }
  return flat;
}

// ---------------------------------------------------------------------------
// Learner state: optimizing policy, logging-policy estimate, value head and
// its frozen target.
// ---------------------------------------------------------------------------

struct LearnerState {
  LinearSoftmaxPolicy policy;   // p_theta
  LinearSoftmaxPolicy logging;  // p_psi
  LinearQFunction q;
  TargetSnapshot target;
  std::int64_t step = 0;   // value-head update counter
  std::int64_t syncs = 0;  // target refreshes performed
};

inline LearnerState make_learner_state(int dim, int catalog, std::uint64_t seed,
                                       const VRConfig& cfg) {
  LearnerState st;
  st.policy = LinearSoftmaxPolicy::zeros(dim, catalog);
  st.logging = LinearSoftmaxPolicy::zeros(dim, catalog);
  st.q = LinearQFunction::init(dim, catalog, mix_seed(seed, 0x71), cfg.q_init_scale);
  st.target = TargetSnapshot{st.q.weights, cfg.sync_interval};
  return st;
}

inline Checkpoint to_checkpoint(const LearnerState& st, Algo algo, int catalog, double decay,
                                int epoch) {
  Checkpoint ck;
  ck.catalog_size = catalog;
  ck.decay = decay;
  ck.algo = algo_name(algo);
  ck.step = st.step;
  ck.epoch = epoch;
  ck.policy = st.policy;
  ck.logging = st.logging;
  ck.q = st.q;
  ck.target = st.target;
  return ck;
}

inline LearnerState from_checkpoint(const Checkpoint& ck) {
  LearnerState st;
  st.policy = ck.policy;
  st.logging = ck.logging;
  st.q = ck.q;
  st.target = ck.target;
  st.step = ck.step;
  return st;
}

// ---------------------------------------------------------------------------
// Shared kernels.
// ---------------------------------------------------------------------------

inline double logsumexp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

/// Log-space posterior: normalized prior * exp(q/alpha).
inline Eigen::VectorXd posterior_from_logs(const Eigen::VectorXd& log_prior,
                                           const Eigen::VectorXd& q_values, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("posterior_from_logs: alpha must be positive");
  return softmax(log_prior + q_values / alpha);
}

/// Posterior policy q(.|s) proportional to p_theta(.|s) * exp(Q(s,.)/alpha).
inline Eigen::VectorXd posterior_q(const LinearSoftmaxPolicy& policy, const LinearQFunction& q,
                                   const Eigen::VectorXd& phi, double alpha) {
  return posterior_from_logs(policy_log_probs(policy, phi), q.values(phi), alpha);
}

namespace detail {

inline Eigen::MatrixXd gather_features(const FlatData& flat, std::span<const int> idxs,
                                       bool next_state) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(idxs.size()), flat.dim);
  for (std::size_t i = 0; i < idxs.size(); ++i) {
    const Sample& s = flat.samples[idxs[i]];
    x.row(static_cast<Eigen::Index>(i)) = (next_state ? s.phi_next : s.phi).transpose();
  }
  return x;
}

inline double row_logsumexp(const Eigen::MatrixXd& m, Eigen::Index r) {
  const double mx = m.row(r).maxCoeff();
  return mx + std::log((m.row(r).array() - mx).exp().sum());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Likelihood updates.
// ---------------------------------------------------------------------------

struct StepInfo {
  double loss = 0.0;
};

/// Mean negative log-likelihood of the logged actions.
inline double mle_loss(const LinearSoftmaxPolicy& policy, const FlatData& flat,
                       std::span<const int> idxs) {
  if (idxs.empty()) throw std::invalid_argument("mle_loss: empty batch");
  const Eigen::MatrixXd x = detail::gather_features(flat, idxs, false);
  const Eigen::MatrixXd lp = log_softmax_rows(x * policy.weights);
  double loss = 0.0;
  for (std::size_t i = 0; i < idxs.size(); ++i) {
    loss -= lp(static_cast<Eigen::Index>(i), flat.samples[idxs[i]].action);
  }
  return loss / static_cast<double>(idxs.size());
}

/// One ascent step on the mean log-likelihood of the logged actions.
inline StepInfo mle_step(LinearSoftmaxPolicy& policy, const FlatData& flat,
                         std::span<const int> idxs, double lr) {
  if (idxs.empty()) throw std::invalid_argument("mle_step: empty batch");
  const Eigen::MatrixXd x = detail::gather_features(flat, idxs, false);
  Eigen::MatrixXd probs = x * policy.weights;
  const Eigen::MatrixXd lp = log_softmax_rows(probs);
  softmax_rows_inplace(probs);
  double loss = 0.0;
  Eigen::MatrixXd residual = -probs;
  for (std::size_t i = 0; i < idxs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const ItemId a = flat.samples[idxs[i]].action;
    residual(r, a) += 1.0;
    loss -= lp(r, a);
  }
  const double inv = 1.0 / static_cast<double>(idxs.size());
  policy.weights.noalias() += (lr * inv) * (x.transpose() * residual);
  return StepInfo{loss * inv};
}

// ---------------------------------------------------------------------------
// Weighted value regression core shared by the TD-style updates. Weights and
// targets are computed up front and treated as constants during the update.
// ---------------------------------------------------------------------------

struct RegressionSample {
  const Eigen::VectorXd* phi = nullptr;
  ItemId action = 0;
  double y = 0.0;
  double w = 1.0;
};

inline double weighted_regression_loss(const LinearQFunction& q,
                                       const std::vector<RegressionSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("weighted_regression_loss: empty batch");
  double loss = 0.0;
  for (const auto& s : samples) {
    const double r = q.value(*s.phi, s.action) - s.y;
    loss += s.w * r * r;
  }
  return loss / static_cast<double>(samples.size());
}

/// One descent step on the mean weighted squared error; residuals are
/// evaluated before any weight changes so the whole batch sees one snapshot.
inline double apply_weighted_regression(LinearQFunction& q,
                                        const std::vector<RegressionSample>& samples,
                                        double lr) {
  if (samples.empty()) throw std::invalid_argument("apply_weighted_regression: empty batch");
  const std::size_t n = samples.size();
  std::vector<double> residual(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    residual[i] = q.value(*samples[i].phi, samples[i].action) - samples[i].y;
    loss += samples[i].w * residual[i] * residual[i];
  }
  const double scale = 2.0 * lr / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    q.weights.col(samples[i].action).noalias() -=
        (scale * samples[i].w * residual[i]) * (*samples[i].phi);
  }
  return loss / static_cast<double>(n);
}

inline void bump_q_step(LearnerState& state, const VRConfig& cfg) {
  ++state.step;
  if (state.step % cfg.sync_interval == 0) {
    sync_target(state.q, state.target);
    ++state.syncs;
  }
}

// ---------------------------------------------------------------------------
// Q-learning family.
// ---------------------------------------------------------------------------

enum class DqnVariant { Standard, OneStep, NegSampled };

/// Builds the regression batch for a value-iteration style update: targets
/// bootstrap from the frozen snapshot with the max operator, dropped at
/// terminals. The NegSampled variant adds, per positive tuple, one unseen
/// item with pre-shift reward -1 and no bootstrap.
inline std::vector<RegressionSample> build_dqn_samples(const LearnerState& state,
                                                       const FlatData& flat,
                                                       std::span<const int> idxs,
                                                       const VRConfig& cfg, DqnVariant variant,
                                                       Rng* neg_rng = nullptr) {
  if (idxs.empty()) throw std::invalid_argument("build_dqn_samples: empty batch");
  const double gamma = variant == DqnVariant::OneStep ? 0.0 : cfg.gamma;
  std::vector<RegressionSample> out;
  out.reserve(idxs.size() * (variant == DqnVariant::NegSampled ? 2 : 1));
  for (int idx : idxs) {
    const Sample& s = flat.samples[idx];
    double y = s.reward;
    if (!s.terminal && gamma > 0.0) {
      y += gamma * state.target.values(s.phi_next).maxCoeff();
    }
    out.push_back(RegressionSample{&s.phi, s.action, y, 1.0});
    if (variant == DqnVariant::NegSampled) {
      if (neg_rng == nullptr) {
        throw std::invalid_argument("build_dqn_samples: NegSampled requires an rng");
      }
      const std::vector<ItemId>* history = s.src != nullptr ? &s.src->state.history : nullptr;
      ItemId neg;
      do {
        neg = neg_rng->uniform_int(flat.catalog);
      } while (neg == s.action ||
               (history != nullptr &&
                std::find(history->begin(), history->end(), neg) != history->end()));
      out.push_back(RegressionSample{&s.phi, neg, -1.0 - flat.spec.shift, 1.0});
    }
  }
  return out;
}

inline StepInfo dqn_step(LearnerState& state, const FlatData& flat, std::span<const int> idxs,
                         const VRConfig& cfg, DqnVariant variant = DqnVariant::Standard,
                         Rng* neg_rng = nullptr) {
  const auto samples = build_dqn_samples(state, flat, idxs, cfg, variant, neg_rng);
  const double loss = apply_weighted_regression(state.q, samples, cfg.lr_q);
  bump_q_step(state, cfg);
  return StepInfo{loss};
}

// ---------------------------------------------------------------------------
// Off-policy policy gradient with weight capping.
// ---------------------------------------------------------------------------

struct PgCoefficients {
  std::vector<int> sample_ids;
  Eigen::VectorXd weight;  // capped importance ratio, treated as constant
  Eigen::VectorXd ret;     // discounted raw return-to-go
};

inline PgCoefficients pg_coefficients(const LearnerState& state, const FlatData& flat,
                                      std::span<const int> traj_ids, const VRConfig& cfg) {
  PgCoefficients out;
  for (int t : traj_ids) {
    for (int id : flat.trajectories[t]) out.sample_ids.push_back(id);
  }
  if (out.sample_ids.empty()) throw std::invalid_argument("pg_coefficients: empty batch");
  const auto n = static_cast<Eigen::Index>(out.sample_ids.size());
  const Eigen::MatrixXd x = detail::gather_features(flat, out.sample_ids, false);
  const Eigen::MatrixXd lp_theta = log_softmax_rows(x * state.policy.weights);
  const Eigen::MatrixXd lp_psi = log_softmax_rows(x * state.logging.weights);
  out.weight.resize(n);
  out.ret.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Sample& s = flat.samples[out.sample_ids[i]];
    const double p_theta = std::exp(lp_theta(i, s.action));
    const double p_psi = std::max(std::exp(lp_psi(i, s.action)), cfg.is_floor);
    out.weight[i] = std::min(p_theta / p_psi, cfg.cap);
    out.ret[i] = s.rtg_raw;
  }
  return out;
}

/// Surrogate objective (negated): -mean_t w_t R_t log p_theta(a_t|s_t).
inline double pg_surrogate_loss(const LinearSoftmaxPolicy& policy, const FlatData& flat,
                                const PgCoefficients& coeffs) {
  const Eigen::MatrixXd x = detail::gather_features(flat, coeffs.sample_ids, false);
  const Eigen::MatrixXd lp = log_softmax_rows(x * policy.weights);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(coeffs.sample_ids.size()); ++i) {
    const Sample& s = flat.samples[coeffs.sample_ids[i]];
    loss -= coeffs.weight[i] * coeffs.ret[i] * lp(i, s.action);
  }
  return loss / static_cast<double>(coeffs.sample_ids.size());
}

inline StepInfo pg_step(LearnerState& state, const FlatData& flat, std::span<const int> traj_ids,
                        const VRConfig& cfg) {
  const PgCoefficients coeffs = pg_coefficients(state, flat, traj_ids, cfg);
  const auto n = static_cast<Eigen::Index>(coeffs.sample_ids.size());
  const Eigen::MatrixXd x = detail::gather_features(flat, coeffs.sample_ids, false);
  Eigen::MatrixXd probs = x * state.policy.weights;
  const Eigen::MatrixXd lp = log_softmax_rows(probs);
  softmax_rows_inplace(probs);
  Eigen::MatrixXd residual(n, flat.catalog);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Sample& s = flat.samples[coeffs.sample_ids[i]];
    const double coef = coeffs.weight[i] * coeffs.ret[i];
    residual.row(i) = -coef * probs.row(i);
    residual(i, s.action) += coef;
    loss -= coef * lp(i, s.action);
  }
  const double inv = 1.0 / static_cast<double>(n);
  state.policy.weights.noalias() += (cfg.lr_policy * inv) * (x.transpose() * residual);
  return StepInfo{loss * inv};
}

// ---------------------------------------------------------------------------
// EM updates.
// ---------------------------------------------------------------------------

/// Importance weight q(a|s) / max(p_psi(a|s), floor) with the posterior built
/// from the live value head.
inline double posterior_weight(const LearnerState& state, const Sample& s, const VRConfig& cfg) {
  const Eigen::VectorXd post =
      posterior_from_logs(policy_log_probs(state.policy, s.phi), state.q.values(s.phi), cfg.alpha);
  const double denom =
      std::max(std::exp(policy_log_probs(state.logging, s.phi)[s.action]), cfg.is_floor);
  return post[s.action] / denom;
}

inline std::vector<RegressionSample> build_vr_bandit_samples(const LearnerState& state,
                                                             const FlatData& flat,
                                                             std::span<const int> idxs,
                                                             const VRConfig& cfg,
                                                             bool weighted = true) {
  if (idxs.empty()) throw std::invalid_argument("build_vr_bandit_samples: empty batch");
  std::vector<RegressionSample> out;
  out.reserve(idxs.size());
  for (int idx : idxs) {
    const Sample& s = flat.samples[idx];
    out.push_back(RegressionSample{&s.phi, s.action, s.reward,
                                   weighted ? posterior_weight(state, s, cfg) : 1.0});
  }
  return out;
}

/// Weighted regression of the value head onto observed rewards.
inline StepInfo vr_bandit_estep(LearnerState& state, const FlatData& flat,
                                std::span<const int> idxs, const VRConfig& cfg,
                                bool weighted = true) {
  const auto samples = build_vr_bandit_samples(state, flat, idxs, cfg, weighted);
  const double loss = apply_weighted_regression(state.q, samples, cfg.lr_q);
  bump_q_step(state, cfg);
  return StepInfo{loss};
}

/// Soft bootstrap at the next state: alpha * logsumexp(log p_theta + Qbar/alpha).
inline double soft_backup(const LearnerState& state, const Eigen::VectorXd& phi_next,
                          double alpha) {
  return alpha * logsumexp(policy_log_probs(state.policy, phi_next) +
                           state.target.values(phi_next) / alpha);
}

/**
 * Builds the sequential E-step regression batch. The bootstrap term uses the
 * posterior built from the frozen target; drawing the next action from that
 * posterior and taking the exact expectation over it coincide, so the exact
 * path is used whenever the catalog is small enough.
 */
inline std::vector<RegressionSample> build_vr_sequential_samples(
    const LearnerState& state, const FlatData& flat, std::span<const int> idxs,
    const VRConfig& cfg, bool weighted = true, Rng* sample_rng = nullptr) {
  if (idxs.empty()) throw std::invalid_argument("build_vr_sequential_samples: empty batch");
  const bool exact = flat.catalog <= cfg.exact_expectation_threshold;
  std::vector<RegressionSample> out;
  out.reserve(idxs.size());
  for (int idx : idxs) {
    const Sample& s = flat.samples[idx];
    double y = s.reward;
    if (!s.terminal && cfg.gamma > 0.0) {
      if (exact) {
        y += cfg.gamma * soft_backup(state, s.phi_next, cfg.alpha);
      } else {
        if (sample_rng == nullptr) {
          throw std::invalid_argument("build_vr_sequential_samples: sampling requires an rng");
        }
        const Eigen::VectorXd lp_next = policy_log_probs(state.policy, s.phi_next);
        const Eigen::VectorXd qbar_next = state.target.values(s.phi_next);
        const Eigen::VectorXd post = posterior_from_logs(lp_next, qbar_next, cfg.alpha);
        const int a_next = sample_rng->sample_discrete(post);
        y += cfg.gamma * (qbar_next[a_next] + cfg.alpha * lp_next[a_next] -
                          cfg.alpha * std::log(post[a_next]));
      }
    }
    out.push_back(RegressionSample{&s.phi, s.action, y,
                                   weighted ? posterior_weight(state, s, cfg) : 1.0});
  }
  return out;
}

inline StepInfo vr_sequential_estep(LearnerState& state, const FlatData& flat,
                                    std::span<const int> idxs, const VRConfig& cfg,
                                    bool weighted = true, Rng* sample_rng = nullptr) {
  const auto samples = build_vr_sequential_samples(state, flat, idxs, cfg, weighted, sample_rng);
  const double loss = apply_weighted_regression(state.q, samples, cfg.lr_q);
  bump_q_step(state, cfg);
  return StepInfo{loss};
}

/// Per-state cross-entropy target of the M-step: beta * q + (1 - beta) * p_psi.
inline Eigen::MatrixXd mstep_mixture(const LearnerState& state, const FlatData& flat,
                                     std::span<const int> idxs, const VRConfig& cfg) {
  const Eigen::MatrixXd x = detail::gather_features(flat, idxs, false);
  const Eigen::MatrixXd lp_theta = log_softmax_rows(x * state.policy.weights);
  Eigen::MatrixXd psi = x * state.logging.weights;
  softmax_rows_inplace(psi);
  const Eigen::MatrixXd qv = x * state.q.weights;
  Eigen::MatrixXd mix(static_cast<Eigen::Index>(idxs.size()), flat.catalog);
  for (Eigen::Index i = 0; i < mix.rows(); ++i) {
    const Eigen::VectorXd post = posterior_from_logs(lp_theta.row(i).transpose(),
                                                     qv.row(i).transpose(), cfg.alpha);
    mix.row(i) = cfg.beta * post.transpose() + (1.0 - cfg.beta) * psi.row(i);
  }
  return mix;
}

/// Cross-entropy of the policy against a fixed per-state mixture (negated
/// objective, for gradient checking).
inline double mstep_loss(const LinearSoftmaxPolicy& policy, const FlatData& flat,
                         std::span<const int> idxs, const Eigen::MatrixXd& mix) {
  const Eigen::MatrixXd x = detail::gather_features(flat, idxs, false);
  const Eigen::MatrixXd lp = log_softmax_rows(x * policy.weights);
  return -(mix.array() * lp.array()).rowwise().sum().mean();
}

/// One ascent step of the policy toward fixed per-state target distributions
/// (cross-entropy); the gradient per state is phi * (target - probs)^T.
inline double cross_entropy_step(LinearSoftmaxPolicy& policy, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& targets, double lr) {
  if (x.rows() != targets.rows() || targets.cols() != policy.weights.cols()) {
    throw std::invalid_argument("cross_entropy_step: shape mismatch");
  }
  Eigen::MatrixXd probs = x * policy.weights;
  const Eigen::MatrixXd lp = log_softmax_rows(probs);
  softmax_rows_inplace(probs);
  const double loss = -(targets.array() * lp.array()).rowwise().sum().mean();
  const double inv = 1.0 / static_cast<double>(x.rows());
  policy.weights.noalias() += (lr * inv) * (x.transpose() * (targets - probs));
  return loss;
}

/**
 * Ranking-regularized policy update: ascent on
 * beta * E_q[log p_theta] + (1 - beta) * E_psi[log p_theta]. Expectations are
 * exact over the catalog when it is small enough, otherwise single-sample.
 * The mixture target is frozen while `mstep_iterations` gradient steps are
 * applied, approximating the full inner maximization.
 */
inline StepInfo vr_mstep(LearnerState& state, const FlatData& flat, std::span<const int> idxs,
                         const VRConfig& cfg, Rng* sample_rng = nullptr) {
  if (idxs.empty()) throw std::invalid_argument("vr_mstep: empty batch");
  const auto n = static_cast<Eigen::Index>(idxs.size());
  const Eigen::MatrixXd x = detail::gather_features(flat, idxs, false);
  Eigen::MatrixXd targets(n, flat.catalog);
  if (flat.catalog <= cfg.exact_expectation_threshold) {
    targets = mstep_mixture(state, flat, idxs, cfg);
  } else {
    if (sample_rng == nullptr) throw std::invalid_argument("vr_mstep: sampling requires an rng");
    const Eigen::MatrixXd lp = log_softmax_rows(x * state.policy.weights);
    Eigen::MatrixXd psi = x * state.logging.weights;
    softmax_rows_inplace(psi);
    const Eigen::MatrixXd qv = x * state.q.weights;
    targets.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd post =
          posterior_from_logs(lp.row(i).transpose(), qv.row(i).transpose(), cfg.alpha);
      targets(i, sample_rng->sample_discrete(post)) += cfg.beta;
      targets(i, sample_rng->sample_discrete(psi.row(i).transpose())) += 1.0 - cfg.beta;
    }
  }
  double loss = 0.0;
  for (int it = 0; it < cfg.mstep_iterations; ++it) {
    loss = cross_entropy_step(state.policy, x, targets, cfg.lr_policy);
  }
  return StepInfo{loss};
}

/// Mean KL(q(.|s) || p_psi(.|s)) over the states of a dataset, a diagnostic
/// of how far the posterior drifts from the estimated logging policy.
inline double mean_posterior_kl(const LearnerState& state, const FlatData& flat, double alpha) {
  double total = 0.0;
  for (const Sample& s : flat.samples) {
    const Eigen::VectorXd post = posterior_from_logs(policy_log_probs(state.policy, s.phi),
                                                     state.q.values(s.phi), alpha);
    const Eigen::VectorXd lp_psi = policy_log_probs(state.logging, s.phi);
    double kl = 0.0;
    for (int a = 0; a < flat.catalog; ++a) {
      if (post[a] > 0.0) kl += post[a] * (std::log(post[a]) - lp_psi[a]);
    }
    total += kl;
  }
  return total / static_cast<double>(flat.samples.size());
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  std::optional<double> loss_policy;
  std::optional<double> loss_q;
  std::optional<double> bias;
  std::map<int, double> hr;
  std::map<int, double> ndcg;
};

struct TrainResult {
  LearnerState state;
  std::vector<EpochRecord> trace;
};

/// Ranking scores on a flattened sample under the algorithm's native head.
inline Eigen::VectorXd native_scores(const LearnerState& state, Algo algo,
                                     const Eigen::VectorXd& phi) {
  return algo_ranks_by_q(algo) ? state.q.values(phi) : state.policy.logits(phi);
}

inline void eval_epoch_metrics(const LearnerState& state, Algo algo, const FlatData& eval_flat,
                               const std::vector<int>& ks, EpochRecord& rec) {
  if (eval_flat.samples.empty()) return;
  for (int k : ks) {
    rec.hr[k] = 0.0;
    rec.ndcg[k] = 0.0;
  }
  double bias = 0.0;
  for (const Sample& s : eval_flat.samples) {
    const int rank = rank_of(native_scores(state, algo, s.phi), s.action);
    for (int k : ks) {
      rec.hr[k] += hit_at(rank, k);
      rec.ndcg[k] += ndcg_at(rank, k);
    }
    if (algo_trains_q(algo)) {
      const double excess = std::max(state.q.value(s.phi, s.action) - s.rtg_stored, 0.0);
      bias += excess * excess;
    }
  }
  const double inv = 1.0 / static_cast<double>(eval_flat.samples.size());
  for (int k : ks) {
    rec.hr[k] *= inv;
    rec.ndcg[k] *= inv;
  }
  if (algo_trains_q(algo)) rec.bias = bias * inv;
}

namespace detail {

inline std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  return ids;
}

}  // namespace detail

/**
 * Deterministic mini-batch training. Every random stream (shuffles, negative
 * sampling, posterior sampling) is derived from (seed, epoch), so restarting
 * from an epoch checkpoint reproduces the uninterrupted run exactly.
 *
 * For VR variants, each batch runs one E-step then one M-step; the logging
 * policy is pretrained by likelihood before the main loop.
 */
inline TrainResult train(Algo algo, const LoggedDataset& train_data,
                         const LoggedDataset& eval_data, const VRConfig& cfg, int epochs,
                         std::uint64_t seed, const Checkpoint* resume = nullptr,
                         const std::vector<int>& ks = {5, 20}) {
  cfg.validate();
  train_data.validate();
  // The uniform-reward variant retrains on click == purchase == 1.
  LoggedDataset uniform_train, uniform_eval;
  const LoggedDataset* train_ptr = &train_data;
  const LoggedDataset* eval_ptr = &eval_data;
  if (algo == Algo::VR_V) {
    const RewardSpec uniform_spec{1.0, 1.0, 1.0};
    uniform_train = apply_reward_spec(train_data, uniform_spec);
    uniform_eval = apply_reward_spec(eval_data, uniform_spec);
    train_ptr = &uniform_train;
    eval_ptr = &uniform_eval;
  }

  const FlatData flat = flatten(*train_ptr, cfg.decay, cfg.gamma);
  const FlatData eval_flat = flatten(*eval_ptr, cfg.decay, cfg.gamma);

  TrainResult result;
  result.state = resume != nullptr
                     ? from_checkpoint(*resume)
                     : make_learner_state(flat.dim, flat.catalog, seed, cfg);
  result.state.target.sync_interval = cfg.sync_interval;
  LearnerState& state = result.state;
  const int start_epoch = resume != nullptr ? resume->epoch : 0;

  if (resume == nullptr && algo_needs_logging_policy(algo)) {
    auto ids = detail::iota_ids(flat.samples.size());
    for (int pe = 0; pe < cfg.pretrain_epochs; ++pe) {
      Rng shuffle_rng(mix_seed(seed, 0xD0, pe));
      shuffle_rng.shuffle(ids);
      for (std::size_t off = 0; off < ids.size(); off += cfg.batch_size) {
        const std::size_t len = std::min<std::size_t>(cfg.batch_size, ids.size() - off);
        mle_step(state.logging, flat, std::span<const int>(ids.data() + off, len),
                 cfg.lr_logging);
      }
    }
    // The policy head starts from the likelihood fit it is regularized
    // toward; distribution-valued targets move softmax weights too slowly
    // to leave a cold start within desk-scale budgets.
    state.policy.weights = state.logging.weights;
  }

  for (int epoch = start_epoch; epoch < epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(seed, 0xA0, epoch));
    Rng aux_rng(mix_seed(seed, 0xB0, epoch));
    double policy_loss = 0.0, q_loss = 0.0;
    std::size_t policy_batches = 0, q_batches = 0;

    if (algo == Algo::PG) {
      auto traj_ids = detail::iota_ids(flat.trajectories.size());
      shuffle_rng.shuffle(traj_ids);
      for (std::size_t off = 0; off < traj_ids.size(); off += cfg.batch_size) {
        const std::size_t len = std::min<std::size_t>(cfg.batch_size, traj_ids.size() - off);
        const std::span<const int> batch(traj_ids.data() + off, len);
        std::vector<int> sample_ids;
        for (int t : batch) {
          sample_ids.insert(sample_ids.end(), flat.trajectories[t].begin(),
                            flat.trajectories[t].end());
        }
        // keep refining the logging estimate the ratios divide by
        mle_step(state.logging, flat, sample_ids, cfg.lr_logging);
        policy_loss += pg_step(state, flat, batch, cfg).loss;
        ++policy_batches;
      }
    } else {
      auto ids = detail::iota_ids(flat.samples.size());
      shuffle_rng.shuffle(ids);
      for (std::size_t off = 0; off < ids.size(); off += cfg.batch_size) {
        const std::size_t len = std::min<std::size_t>(cfg.batch_size, ids.size() - off);
        const std::span<const int> batch(ids.data() + off, len);
        switch (algo) {
          case Algo::MLE:
            policy_loss += mle_step(state.policy, flat, batch, cfg.lr_policy).loss;
            ++policy_batches;
            break;
          case Algo::DQN:
            q_loss += dqn_step(state, flat, batch, cfg, DqnVariant::Standard).loss;
            ++q_batches;
            break;
          case Algo::DQN_ONE:
            q_loss += dqn_step(state, flat, batch, cfg, DqnVariant::OneStep).loss;
            ++q_batches;
            break;
          case Algo::DQN_NS:
            q_loss += dqn_step(state, flat, batch, cfg, DqnVariant::NegSampled, &aux_rng).loss;
            ++q_batches;
            break;
          case Algo::VR_BANDIT:
            mle_step(state.logging, flat, batch, cfg.lr_logging);
            q_loss += vr_bandit_estep(state, flat, batch, cfg, true).loss;
            policy_loss += vr_mstep(state, flat, batch, cfg, &aux_rng).loss;
            ++q_batches;
            ++policy_batches;
            break;
          case Algo::VR:
          case Algo::VR_V:
            mle_step(state.logging, flat, batch, cfg.lr_logging);
            q_loss += vr_sequential_estep(state, flat, batch, cfg, true, &aux_rng).loss;
            policy_loss += vr_mstep(state, flat, batch, cfg, &aux_rng).loss;
            ++q_batches;
            ++policy_batches;
            break;
          case Algo::VR_NW:
            mle_step(state.logging, flat, batch, cfg.lr_logging);
            q_loss += vr_sequential_estep(state, flat, batch, cfg, false, &aux_rng).loss;
            policy_loss += vr_mstep(state, flat, batch, cfg, &aux_rng).loss;
            ++q_batches;
            ++policy_batches;
            break;
          default:
            throw std::invalid_argument("train: unknown algorithm");
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    if (policy_batches > 0) rec.loss_policy = policy_loss / static_cast<double>(policy_batches);
    if (q_batches > 0) rec.loss_q = q_loss / static_cast<double>(q_batches);
    eval_epoch_metrics(state, algo, eval_flat, ks, rec);
    result.trace.push_back(std::move(rec));
  }
  return result;
}

}  // namespace vrank

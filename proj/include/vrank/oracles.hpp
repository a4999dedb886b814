#pragma once

// Brute-force reference implementations used by tests and the `verify`
// command. Everything here is direct summation in double precision, written
// independently of the training code paths it cross-checks.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "vrank/rng.hpp"

namespace vrank::oracles {

/// Small finite MDP with an explicit transition tensor.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> transition;  // [s][a][s'] row-major
  Eigen::MatrixXd reward;          // num_states x num_actions, entries <= 0
  Eigen::VectorXd initial;         // distribution over states
  double gamma = 0.9;

  double p(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }
  double& p(int s, int a, int s2) {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
  }

  void validate() const {
    if (num_states < 1 || num_states > 16) throw std::invalid_argument("TabularMDP: bad num_states");
    if (num_actions < 1 || num_actions > 8) throw std::invalid_argument("TabularMDP: bad num_actions");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("TabularMDP: gamma outside [0, 1)");
    for (int s = 0; s < num_states; ++s) {
      for (int a = 0; a < num_actions; ++a) {
        double row = 0.0;
        for (int s2 = 0; s2 < num_states; ++s2) row += p(s, a, s2);
        if (std::abs(row - 1.0) > 1e-9) throw std::invalid_argument("TabularMDP: row not stochastic");
        if (reward(s, a) > 0.0) throw std::invalid_argument("TabularMDP: positive reward");
      }
    }
    if (std::abs(initial.sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("TabularMDP: initial distribution not normalized");
    }
  }
};

/// Random MDP with rows built from `denom` equal probability masses when
/// denom > 0, otherwise dense normalized rows.
inline TabularMDP make_random_mdp(Rng& rng, int num_states, int num_actions, double gamma,
                                  int denom = 0) {
  TabularMDP mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  mdp.transition.assign(static_cast<std::size_t>(num_states) * num_actions * num_states, 0.0);
  mdp.reward = Eigen::MatrixXd(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      mdp.reward(s, a) = -rng.uniform();
      if (denom > 0) {
        for (int m = 0; m < denom; ++m) {
          mdp.p(s, a, rng.uniform_int(num_states)) += 1.0 / denom;
        }
      } else {
        double total = 0.0;
        for (int s2 = 0; s2 < num_states; ++s2) {
          const double w = rng.uniform() + 1e-3;
          mdp.p(s, a, s2) = w;
          total += w;
        }
        for (int s2 = 0; s2 < num_states; ++s2) mdp.p(s, a, s2) /= total;
      }
    }
  }
  mdp.initial = Eigen::VectorXd::Constant(num_states, 1.0 / num_states);
  mdp.validate();
  return mdp;
}

/// Normalized prior * exp(q/alpha) by direct summation.
inline Eigen::VectorXd exact_posterior(const Eigen::VectorXd& prior,
                                       const Eigen::VectorXd& q_values, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("exact_posterior: alpha must be positive");
  if (prior.size() != q_values.size()) {
    throw std::invalid_argument("exact_posterior: size mismatch");
  }
  double mass = 0.0;
  for (int i = 0; i < prior.size(); ++i) {
    if (prior[i] < 0.0) throw std::invalid_argument("exact_posterior: negative prior entry");
    mass += prior[i];
  }
  if (std::abs(mass - 1.0) > 1e-9) {
    throw std::invalid_argument("exact_posterior: prior not normalized");
  }
  Eigen::VectorXd post(prior.size());
  double z = 0.0;
  for (int i = 0; i < prior.size(); ++i) {
    post[i] = prior[i] * std::exp(q_values[i] / alpha);
    z += post[i];
  }
  return post / z;
}

inline constexpr int kValueIterationCap = 100000;

/// Optimal state-action values under the max-operator backup.
inline Eigen::MatrixXd hard_value_iteration(const TabularMDP& mdp, double tol = 1e-10) {
  mdp.validate();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
  for (int it = 0; it < kValueIterationCap; ++it) {
    Eigen::MatrixXd next(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        double backup = 0.0;
        for (int s2 = 0; s2 < mdp.num_states; ++s2) {
          backup += mdp.p(s, a, s2) * q.row(s2).maxCoeff();
        }
        next(s, a) = mdp.reward(s, a) + mdp.gamma * backup;
      }
    }
    const double delta = (next - q).cwiseAbs().maxCoeff();
    q = next;
    if (delta < tol) return q;
  }
  throw std::runtime_error("hard_value_iteration: did not converge");
}

/// Fixed point of the prior-weighted log-sum-exp backup.
inline Eigen::MatrixXd soft_value_iteration(const TabularMDP& mdp,
                                            const Eigen::MatrixXd& prior_policy, double alpha,
                                            double tol = 1e-10) {
  mdp.validate();
  if (alpha <= 0.0) throw std::invalid_argument("soft_value_iteration: alpha must be positive");
  if (prior_policy.rows() != mdp.num_states || prior_policy.cols() != mdp.num_actions) {
    throw std::invalid_argument("soft_value_iteration: prior policy shape mismatch");
  }
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_actions);
  for (int it = 0; it < kValueIterationCap; ++it) {
    Eigen::VectorXd soft_state(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s) {
      // factor out the max value so small temperatures stay finite
      const double m = q.row(s).maxCoeff();
      double z = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) {
        z += prior_policy(s, a) * std::exp((q(s, a) - m) / alpha);
      }
      soft_state[s] = m + alpha * std::log(z);
    }
    Eigen::MatrixXd next(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        double backup = 0.0;
        for (int s2 = 0; s2 < mdp.num_states; ++s2) {
          backup += mdp.p(s, a, s2) * soft_state[s2];
        }
        next(s, a) = mdp.reward(s, a) + mdp.gamma * backup;
      }
    }
    const double delta = (next - q).cwiseAbs().maxCoeff();
    q = next;
    if (delta < tol) return q;
  }
  throw std::runtime_error("soft_value_iteration: did not converge");
}

/// KL(q || p) by direct summation; 0 log 0 terms contribute nothing.
inline double kl_divergence(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  if (q.size() != p.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    if (q[i] == 0.0) continue;
    if (p[i] <= 0.0) throw std::domain_error("kl_divergence: q outside support of p");
    kl += q[i] * std::log(q[i] / p[i]);
  }
  return kl;
}

/**
 * Variational objective sum_a q(a) (r(a)/alpha + log p(a) - log q(a)),
 * evaluated both directly and as expected-reward-minus-KL; the two forms
 * must agree to 1e-12.
 */
inline double elbo(const Eigen::VectorXd& prior, const Eigen::VectorXd& q,
                   const Eigen::VectorXd& rewards, double alpha) {
  if (prior.size() != q.size() || prior.size() != rewards.size()) {
    throw std::invalid_argument("elbo: size mismatch");
  }
  double direct = 0.0;
  double expected_reward = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    expected_reward += q[i] * rewards[i];
    if (q[i] == 0.0) continue;
    direct += q[i] * (rewards[i] / alpha + std::log(prior[i]) - std::log(q[i]));
  }
  const double decomposed = expected_reward / alpha - kl_divergence(q, prior);
  if (std::abs(direct - decomposed) > 1e-12) {
    throw std::runtime_error("elbo: decomposition mismatch");
  }
  return direct;
}

struct LemmaResult {
  double weighted_bias = 0.0;
  double max_bias = 0.0;
};

/// Both sides of the softmax-reweighting bias inequality: the posterior-
/// weighted error never exceeds the max error.
inline LemmaResult overestimation_lemma_check(const Eigen::VectorXd& prior,
                                              const Eigen::VectorXd& errors, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("overestimation_lemma_check: alpha must be positive");
  const Eigen::VectorXd reweighted = exact_posterior(prior, errors, alpha);
  LemmaResult res;
  for (int i = 0; i < errors.size(); ++i) {
    res.weighted_bias += reweighted[i] * errors[i];
  }
  res.max_bias = errors.maxCoeff();
  return res;
}

/**
 * Renyi divergence of order lambda+1 in bits:
 *   D_{lambda+1}(q||p) = (1/lambda) * log2 sum_a q^{lambda+1} p^{-lambda}.
 */
inline double renyi_divergence(const Eigen::VectorXd& q, const Eigen::VectorXd& p,
                               double order) {
  if (q.size() != p.size()) throw std::invalid_argument("renyi_divergence: size mismatch");
  const double lambda = order - 1.0;
  if (lambda <= 0.0) throw std::invalid_argument("renyi_divergence: order must exceed 1");
  double total = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    if (q[i] == 0.0) continue;
    if (p[i] <= 0.0) throw std::domain_error("renyi_divergence: q outside support of p");
    total += std::pow(q[i], lambda + 1.0) * std::pow(p[i], -lambda);
  }
  return std::log2(total) / lambda;
}

struct VarianceBoundResult {
  double empirical_variance = 0.0;
  double bound = 0.0;
};

/**
 * Exact variance of the importance-weighted loss w(a)L(a), a self-normalized
 * check of the divergence bound
 *   Var_{a~p}[wL] <= d_{lambda+1}(q||p) (E_p[wL])^{1-1/lambda}
 *                    (sum_a L_a)^{1+1/lambda} - (E_p[wL])^2
 * with w = q/p and d = 2^{D}.
 */
inline VarianceBoundResult variance_bound_check(const Eigen::VectorXd& q,
                                                const Eigen::VectorXd& p,
                                                const Eigen::VectorXd& losses, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("variance_bound_check: lambda must be positive");
  if (q.size() != p.size() || q.size() != losses.size()) {
    throw std::invalid_argument("variance_bound_check: size mismatch");
  }
  double mean = 0.0, second = 0.0, loss_sum = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    if (p[i] <= 0.0 && q[i] > 0.0) {
      throw std::domain_error("variance_bound_check: q outside support of p");
    }
    const double wl = p[i] > 0.0 ? (q[i] / p[i]) * losses[i] : 0.0;
    mean += p[i] * wl;
    second += p[i] * wl * wl;
    loss_sum += losses[i];
  }
  VarianceBoundResult res;
  res.empirical_variance = second - mean * mean;
  const double d = std::exp2(renyi_divergence(q, p, lambda + 1.0));
  res.bound = d * std::pow(mean, 1.0 - 1.0 / lambda) * std::pow(loss_sum, 1.0 + 1.0 / lambda) -
              mean * mean;
  return res;
}

}  // namespace vrank::oracles

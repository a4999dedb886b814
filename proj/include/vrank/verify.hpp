#pragma once

// Executable property checks over the brute-force reference implementations,
// shared by the `verify` subcommand and the acceptance suite.

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "vrank/learners.hpp"
#include "vrank/oracles.hpp"
#include "vrank/rng.hpp"

namespace vrank::verify {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline Eigen::VectorXd random_distribution(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform() + 1e-3;
  return v / v.sum();
}

/// Log-space posterior against the direct-summation reference.
inline PropertyResult check_posterior_agreement(std::uint64_t seed, int instances = 1000,
                                                int max_catalog = 50, double tol = 1e-10) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const int n = 2 + rng.uniform_int(max_catalog - 1);
    const Eigen::VectorXd prior = random_distribution(rng, n);
    Eigen::VectorXd qv(n);
    for (int a = 0; a < n; ++a) qv[a] = rng.uniform(-10.0, 0.0);
    const double alpha = std::exp(rng.uniform(std::log(0.1), std::log(5.0)));
    const Eigen::VectorXd got = posterior_from_logs(prior.array().log(), qv, alpha);
    const Eigen::VectorXd want = oracles::exact_posterior(prior, qv, alpha);
    worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
  }
  std::ostringstream d;
  d << "max abs diff " << worst << " over " << instances << " instances";
  return {"posterior-agreement", worst < tol, d.str()};
}

/// Softmax-reweighted bias never exceeds the max per-action error.
inline PropertyResult check_overestimation_lemma(std::uint64_t seed, int draws = 10000,
                                                 double tol = 1e-12) {
  Rng rng(seed);
  double worst_violation = -1e300;
  for (int i = 0; i < draws; ++i) {
    const int n = 2 + rng.uniform_int(19);
    const Eigen::VectorXd prior = random_distribution(rng, n);
    Eigen::VectorXd eps(n);
    for (int a = 0; a < n; ++a) eps[a] = rng.uniform(-2.0, 2.0);
    const double alpha = std::exp(rng.uniform(std::log(0.1), std::log(5.0)));
    const auto res = oracles::overestimation_lemma_check(prior, eps, alpha);
    worst_violation = std::max(worst_violation, res.weighted_bias - res.max_bias);
  }
  std::ostringstream d;
  d << "max (weighted - max) = " << worst_violation << " over " << draws << " draws";
  return {"overestimation-lemma", worst_violation <= tol, d.str()};
}

/// Exact variance of the weighted loss stays below the divergence bound.
inline PropertyResult check_variance_bound(std::uint64_t seed, int instances = 1000,
                                           double lambda = 1.0, double tol = 1e-9) {
  Rng rng(seed);
  double worst_violation = -1e300;
  for (int i = 0; i < instances; ++i) {
    const int n = 2 + rng.uniform_int(19);
    const Eigen::VectorXd q = random_distribution(rng, n);
    const Eigen::VectorXd p = random_distribution(rng, n);
    Eigen::VectorXd losses(n);
    for (int a = 0; a < n; ++a) losses[a] = rng.uniform() * 3.0;
    const auto res = oracles::variance_bound_check(q, p, losses, lambda);
    worst_violation = std::max(worst_violation, res.empirical_variance - res.bound);
  }
  std::ostringstream d;
  d << "max (variance - bound) = " << worst_violation << " over " << instances << " instances";
  return {"variance-bound", worst_violation <= tol, d.str()};
}

/// The gap between the log-marginal and the variational objective equals
/// KL(q || posterior); the posterior itself makes the bound tight.
inline PropertyResult check_elbo_tightness(std::uint64_t seed, int instances = 200,
                                           double tol = 1e-10) {
  Rng rng(seed);
  double worst = 0.0;
  bool never_above = true;
  for (int i = 0; i < instances; ++i) {
    const int n = 2 + rng.uniform_int(9);
    const Eigen::VectorXd prior = random_distribution(rng, n);
    Eigen::VectorXd rewards(n);
    for (int a = 0; a < n; ++a) rewards[a] = rng.uniform(-5.0, 0.0);
    const double alpha = std::exp(rng.uniform(std::log(0.2), std::log(5.0)));

    double marginal = 0.0;
    for (int a = 0; a < n; ++a) marginal += prior[a] * std::exp(rewards[a] / alpha);
    const double log_marginal = std::log(marginal);

    const Eigen::VectorXd post = oracles::exact_posterior(prior, rewards, alpha);
    worst = std::max(worst,
                     std::abs(oracles::elbo(prior, post, rewards, alpha) - log_marginal));

    const Eigen::VectorXd mismatched = random_distribution(rng, n);
    const double lb = oracles::elbo(prior, mismatched, rewards, alpha);
    const double gap = log_marginal - lb;
    never_above = never_above && lb <= log_marginal + tol;
    worst = std::max(worst, std::abs(gap - oracles::kl_divergence(mismatched, post)));
  }
  std::ostringstream d;
  d << "max tightness/gap error " << worst << " over " << instances << " instances";
  return {"elbo-tightness", never_above && worst < tol, d.str()};
}

/// Exact EM on a tabular single-state problem: the variational objective is
/// non-decreasing across iterations.
inline PropertyResult check_elbo_monotone(std::uint64_t seed, int problems = 20,
                                          int iterations = 100, double tol = 1e-9) {
  Rng rng(seed);
  double worst_drop = -1e300;
  for (int pr = 0; pr < problems; ++pr) {
    const int n = 2 + rng.uniform_int(9);
    Eigen::VectorXd prior = random_distribution(rng, n);
    Eigen::VectorXd rewards(n);
    for (int a = 0; a < n; ++a) rewards[a] = rng.uniform(-5.0, 0.0);
    const double alpha = std::exp(rng.uniform(std::log(0.2), std::log(5.0)));

    double last = -1e300;
    for (int it = 0; it < iterations; ++it) {
      const Eigen::VectorXd q = oracles::exact_posterior(prior, rewards, alpha);  // E-step
      const double value = oracles::elbo(prior, q, rewards, alpha);
      if (it > 0) worst_drop = std::max(worst_drop, last - value);
      last = value;
      prior = q;  // exact M-step
    }
  }
  std::ostringstream d;
  d << "max per-step decrease " << worst_drop << " over " << problems << " problems";
  return {"elbo-monotone-em", worst_drop <= tol, d.str()};
}

/// Hard value iteration leaves a Bellman residual below tolerance.
inline PropertyResult check_hard_vi_residual(std::uint64_t seed, int instances = 10,
                                             double tol = 1e-8) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const auto mdp = oracles::make_random_mdp(rng, 5, 3, 0.3 + 0.6 * rng.uniform());
    const Eigen::MatrixXd q = oracles::hard_value_iteration(mdp, 1e-12);
    for (int s = 0; s < mdp.num_states; ++s) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        double backup = 0.0;
        for (int s2 = 0; s2 < mdp.num_states; ++s2) {
          backup += mdp.p(s, a, s2) * q.row(s2).maxCoeff();
        }
        worst = std::max(worst, std::abs(q(s, a) - mdp.reward(s, a) - mdp.gamma * backup));
      }
    }
  }
  std::ostringstream d;
  d << "max Bellman residual " << worst;
  return {"hard-vi-residual", worst < tol, d.str()};
}

/// Soft value iteration: residual below tolerance and the low-temperature
/// limit approaches the hard fixed point.
inline PropertyResult check_soft_vi(std::uint64_t seed, int instances = 10, double tol = 1e-8) {
  Rng rng(seed);
  double worst_residual = 0.0;
  double worst_limit = 0.0;
  for (int i = 0; i < instances; ++i) {
    const auto mdp = oracles::make_random_mdp(rng, 4, 3, 0.3 + 0.5 * rng.uniform());
    Eigen::MatrixXd prior(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s) {
      prior.row(s) = random_distribution(rng, mdp.num_actions).transpose();
    }
    const double alpha = 1.0;
    const Eigen::MatrixXd q = oracles::soft_value_iteration(mdp, prior, alpha, 1e-12);
    for (int s = 0; s < mdp.num_states; ++s) {
      Eigen::VectorXd soft(mdp.num_states);
      for (int s2 = 0; s2 < mdp.num_states; ++s2) {
        double z = 0.0;
        for (int a = 0; a < mdp.num_actions; ++a) {
          z += prior(s2, a) * std::exp(q(s2, a) / alpha);
        }
        soft[s2] = alpha * std::log(z);
      }
      for (int a = 0; a < mdp.num_actions; ++a) {
        double backup = 0.0;
        for (int s2 = 0; s2 < mdp.num_states; ++s2) backup += mdp.p(s, a, s2) * soft[s2];
        worst_residual =
            std::max(worst_residual, std::abs(q(s, a) - mdp.reward(s, a) - mdp.gamma * backup));
      }
    }
    const Eigen::MatrixXd q_cold = oracles::soft_value_iteration(mdp, prior, 1e-6, 1e-12);
    const Eigen::MatrixXd q_hard = oracles::hard_value_iteration(mdp, 1e-12);
    worst_limit = std::max(worst_limit, (q_cold - q_hard).cwiseAbs().maxCoeff());
  }
  std::ostringstream d;
  d << "max residual " << worst_residual << ", max cold-limit gap " << worst_limit;
  return {"soft-vi", worst_residual < tol && worst_limit < 1e-3, d.str()};
}

/// Renyi divergence sanity: zero at q == p and the small-order limit matches
/// the matching-base KL divergence.
inline PropertyResult check_renyi(std::uint64_t seed, int instances = 100) {
  Rng rng(seed);
  double worst_zero = 0.0;
  double worst_limit = 0.0;
  for (int i = 0; i < instances; ++i) {
    const int n = 2 + rng.uniform_int(9);
    const Eigen::VectorXd p = random_distribution(rng, n);
    worst_zero = std::max(worst_zero, std::abs(oracles::renyi_divergence(p, p, 2.0)));
    const Eigen::VectorXd q = random_distribution(rng, n);
    const double d_small = oracles::renyi_divergence(q, p, 1.0 + 1e-4);
    const double kl_bits = oracles::kl_divergence(q, p) / std::log(2.0);
    worst_limit = std::max(worst_limit, std::abs(d_small - kl_bits));
  }
  std::ostringstream d;
  d << "max |D(p||p)| " << worst_zero << ", max KL-limit gap " << worst_limit;
  return {"renyi-divergence", worst_zero < 1e-12 && worst_limit < 1e-3, d.str()};
}

inline std::vector<PropertyResult> run_all(std::uint64_t seed = 20240501ULL) {
  return {
      check_posterior_agreement(mix_seed(seed, 1)),
      check_overestimation_lemma(mix_seed(seed, 2)),
      check_variance_bound(mix_seed(seed, 3)),
      check_elbo_tightness(mix_seed(seed, 4)),
      check_elbo_monotone(mix_seed(seed, 5)),
      check_hard_vi_residual(mix_seed(seed, 6)),
      check_soft_vi(mix_seed(seed, 7)),
      check_renyi(mix_seed(seed, 8)),
  };
}

}  // namespace vrank::verify

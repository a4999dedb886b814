#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "vrank/oracles.hpp"
#include "vrank/verify.hpp"

using namespace vrank;
using namespace vrank::oracles;
using Catch::Matchers::WithinAbs;

TEST_CASE("exact_posterior") {
  SECTION("uniform prior and equal values stay uniform") {
    const Eigen::VectorXd prior = Eigen::VectorXd::Constant(4, 0.25);
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(4, -1.3);
    const auto post = exact_posterior(prior, q, 1.0);
    for (int i = 0; i < 4; ++i) CHECK_THAT(post[i], WithinAbs(0.25, 1e-15));
  }

  SECTION("closed-form two-action case") {
    Eigen::VectorXd prior(2), q(2);
    prior << 0.5, 0.5;
    q << 0.0, std::log(3.0);
    const auto post = exact_posterior(prior, q, 1.0);
    CHECK_THAT(post[0], WithinAbs(0.25, 1e-12));
    CHECK_THAT(post[1], WithinAbs(0.75, 1e-12));
  }

  SECTION("invalid prior throws") {
    Eigen::VectorXd prior(2), q(2);
    prior << 0.7, 0.7;
    q << 0.0, 0.0;
    CHECK_THROWS_AS(exact_posterior(prior, q, 1.0), std::invalid_argument);
  }
}

TEST_CASE("hard value iteration") {
  SECTION("gamma 0 returns the reward table") {
    Rng rng(3);
    auto mdp = make_random_mdp(rng, 4, 3, 0.0);
    const auto q = hard_value_iteration(mdp, 1e-12);
    CHECK((q - mdp.reward).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("single self-loop state sums the geometric series") {
    TabularMDP mdp;
    mdp.num_states = 1;
    mdp.num_actions = 1;
    mdp.transition = {1.0};
    mdp.reward = Eigen::MatrixXd::Constant(1, 1, -1.0);
    mdp.initial = Eigen::VectorXd::Constant(1, 1.0);
    mdp.gamma = 0.5;
    const auto q = hard_value_iteration(mdp, 1e-12);
    CHECK_THAT(q(0, 0), WithinAbs(-2.0, 1e-9));
  }

  SECTION("random MDPs have a small Bellman residual") {
    const auto res = verify::check_hard_vi_residual(99);
    INFO(res.detail);
    CHECK(res.pass);
  }
}

TEST_CASE("soft value iteration") {
  SECTION("gamma 0 returns the reward table") {
    Rng rng(5);
    auto mdp = make_random_mdp(rng, 4, 3, 0.0);
    Eigen::MatrixXd prior = Eigen::MatrixXd::Constant(4, 3, 1.0 / 3.0);
    const auto q = soft_value_iteration(mdp, prior, 1.0, 1e-12);
    CHECK((q - mdp.reward).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("small-temperature limit approaches the hard fixed point") {
    Rng rng(7);
    const auto mdp = make_random_mdp(rng, 5, 3, 0.7);
    Eigen::MatrixXd prior(5, 3);
    for (int s = 0; s < 5; ++s) prior.row(s) = testutil::random_distribution(rng, 3).transpose();
    const auto cold = soft_value_iteration(mdp, prior, 1e-6, 1e-12);
    const auto hard = hard_value_iteration(mdp, 1e-12);
    CHECK((cold - hard).cwiseAbs().maxCoeff() < 1e-3);
  }

  SECTION("residual property suite passes") {
    const auto res = verify::check_soft_vi(101);
    INFO(res.detail);
    CHECK(res.pass);
  }
}

TEST_CASE("elbo") {
  SECTION("matching distributions and zero reward give zero") {
    Rng rng(11);
    const auto p = testutil::random_distribution(rng, 5);
    CHECK_THAT(elbo(p, p, Eigen::VectorXd::Zero(5), 1.0), WithinAbs(0.0, 1e-14));
  }

  SECTION("the posterior makes the bound tight at the log marginal") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + rng.uniform_int(8);
      const auto prior = testutil::random_distribution(rng, n);
      Eigen::VectorXd r(n);
      for (int i = 0; i < n; ++i) r[i] = rng.uniform(-4.0, 0.0);
      const double alpha = rng.uniform(0.3, 3.0);
      double marginal = 0.0;
      for (int i = 0; i < n; ++i) marginal += prior[i] * std::exp(r[i] / alpha);
      const auto post = exact_posterior(prior, r, alpha);
      CHECK_THAT(elbo(prior, post, r, alpha), WithinAbs(std::log(marginal), 1e-12));
    }
  }

  SECTION("any mismatched variational distribution stays below the log marginal") {
    const auto res = verify::check_elbo_tightness(103);
    INFO(res.detail);
    CHECK(res.pass);
  }
}

TEST_CASE("overestimation lemma") {
  SECTION("constant errors give equality") {
    Rng rng(17);
    const auto prior = testutil::random_distribution(rng, 6);
    const Eigen::VectorXd eps = Eigen::VectorXd::Constant(6, 0.37);
    const auto res = overestimation_lemma_check(prior, eps, 1.0);
    CHECK_THAT(res.weighted_bias, WithinAbs(0.37, 1e-12));
    CHECK_THAT(res.max_bias, WithinAbs(0.37, 1e-12));
  }

  SECTION("two-action closed form e/(1+e)") {
    Eigen::VectorXd prior(2), eps(2);
    prior << 0.5, 0.5;
    eps << 0.0, 1.0;
    const auto res = overestimation_lemma_check(prior, eps, 1.0);
    const double e = std::exp(1.0);
    CHECK_THAT(res.weighted_bias, WithinAbs(e / (1.0 + e), 1e-12));
    CHECK(res.weighted_bias < res.max_bias);
  }

  SECTION("holds over random draws") {
    const auto res = verify::check_overestimation_lemma(107, 2000);
    INFO(res.detail);
    CHECK(res.pass);
  }
}

TEST_CASE("renyi divergence and the variance bound") {
  SECTION("identical distributions have zero divergence and unit exponent") {
    Rng rng(19);
    const auto p = testutil::random_distribution(rng, 7);
    const double d = renyi_divergence(p, p, 2.0);
    CHECK_THAT(d, WithinAbs(0.0, 1e-12));
    CHECK_THAT(std::exp2(d), WithinAbs(1.0, 1e-12));
  }

  SECTION("order-one limit matches the matching-base KL divergence") {
    Rng rng(23);
    const auto q = testutil::random_distribution(rng, 6);
    const auto p = testutil::random_distribution(rng, 6);
    const double d = renyi_divergence(q, p, 1.0 + 1e-4);
    CHECK_THAT(d, WithinAbs(kl_divergence(q, p) / std::log(2.0), 1e-3));
  }

  SECTION("support violation throws") {
    Eigen::VectorXd q(2), p(2);
    q << 0.5, 0.5;
    p << 1.0, 0.0;
    CHECK_THROWS_AS(renyi_divergence(q, p, 2.0), std::domain_error);
  }

  SECTION("exact variance never exceeds the bound") {
    const auto res = verify::check_variance_bound(109, 1000);
    INFO(res.detail);
    CHECK(res.pass);
  }
}

TEST_CASE("exact EM keeps the variational objective non-decreasing") {
  const auto res = verify::check_elbo_monotone(113);
  INFO(res.detail);
  CHECK(res.pass);
}

TEST_CASE("tabular mdp validation") {
  Rng rng(29);
  auto mdp = make_random_mdp(rng, 4, 3, 0.8, 4);
  mdp.validate();
  mdp.p(0, 0, 0) += 0.5;
  CHECK_THROWS_AS(mdp.validate(), std::invalid_argument);
}

// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numeric>

#include "dpgm/expfam.hpp"
#include "test_util.hpp"

namespace dpgm {
namespace {

const double kLog2Pi = std::log(2.0 * M_PI);

TEST(ExpFam, NaturalParamExamples) {
  const std::vector<double> p{0.5};
  EXPECT_DOUBLE_EQ(natural_param(ExpFamSpec::bernoulli(), p)[0], 0.0);
  const std::vector<double> lam{1.0};
  EXPECT_DOUBLE_EQ(natural_param(ExpFamSpec::poisson(), lam)[0], 0.0);
  const std::vector<double> g{0.0, 1.0};
  const auto eta = natural_param(ExpFamSpec::gaussian(), g);
  EXPECT_DOUBLE_EQ(eta[0], 0.0);
  EXPECT_DOUBLE_EQ(eta[1], -0.5);
}

TEST(ExpFam, NaturalAndMeanParamsRoundTrip) {
  const std::vector<std::pair<ExpFamSpec, std::vector<double>>> cases{
      {ExpFamSpec::bernoulli(), {0.3}},
      {ExpFamSpec::gaussian(), {-1.2, 0.7}},
      {ExpFamSpec::poisson(), {4.5}},
      {ExpFamSpec::categorical(3), {0.2, 0.5, 0.3}},
      {ExpFamSpec::dirichlet(3), {0.5, 2.0, 3.0}},
      {ExpFamSpec::gamma(), {2.5, 1.5}},
  };
  for (const auto& [spec, theta] : cases) {
    const auto back = mean_param(spec, natural_param(spec, theta));
    ASSERT_EQ(back.size(), theta.size()) << family_name(spec.family);
    for (std::size_t i = 0; i < theta.size(); ++i)
      EXPECT_NEAR(back[i], theta[i], 1e-12) << family_name(spec.family);
  }
}

TEST(ExpFam, DomainViolationsNameTheConstraint) {
  const std::vector<double> bad_p{1.5};
  EXPECT_THROW(natural_param(ExpFamSpec::bernoulli(), bad_p), DomainError);
  const std::vector<double> bad_var{0.0, -1.0};
  EXPECT_THROW(natural_param(ExpFamSpec::gaussian(), bad_var), DomainError);
  const std::vector<double> bad_eta{0.0, 0.5};
  EXPECT_THROW(log_normalizer(ExpFamSpec::gaussian(), bad_eta), DomainError);
  const std::vector<double> bad_alpha{1.0, -2.0};
  EXPECT_THROW(natural_param(ExpFamSpec::dirichlet(2), bad_alpha), DomainError);
  const std::vector<double> bad_gamma{-1.0, 1.0};
  EXPECT_THROW(natural_param(ExpFamSpec::gamma(), bad_gamma), DomainError);
}

TEST(ExpFam, LogNormalizerExamples) {
  const std::vector<double> zero{0.0};
  EXPECT_NEAR(log_normalizer(ExpFamSpec::bernoulli(), zero), std::log(2.0), 1e-15);
  EXPECT_NEAR(log_normalizer(ExpFamSpec::poisson(), zero), 1.0, 1e-15);
  const std::vector<double> probs{0.1, 0.6, 0.3};
  const auto eta = natural_param(ExpFamSpec::categorical(3), probs);
  EXPECT_NEAR(log_normalizer(ExpFamSpec::categorical(3), eta), 0.0, 1e-15);
}

TEST(ExpFam, LogDensityExamples) {
  const std::vector<double> eta0{0.0};
  const std::vector<double> one{1.0};
  EXPECT_NEAR(log_density(ExpFamSpec::bernoulli(), eta0, one), std::log(0.5), 1e-15);
  const std::vector<double> theta{0.0, 1.0};
  const std::vector<double> x0{0.0};
  EXPECT_NEAR(log_density(ExpFamSpec::gaussian(), natural_param(ExpFamSpec::gaussian(), theta),
                          x0),
              -0.5 * kLog2Pi, 1e-12);
}

TEST(ExpFam, GaussianMatchesDirectFormula) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double mu = 3 * rng.normal();
    const double sigma = 0.1 + 2 * rng.uniform();
    const double x = mu + 3 * sigma * rng.normal();
    const std::vector<double> theta{mu, sigma * sigma};
    const std::vector<double> pt{x};
    const double direct = -0.5 * std::pow((x - mu) / sigma, 2) - std::log(sigma) - 0.5 * kLog2Pi;
    EXPECT_NEAR(log_density(ExpFamSpec::gaussian(), natural_param(ExpFamSpec::gaussian(), theta),
                            pt),
                direct, 1e-12);
  }
}

TEST(ExpFam, DiscreteFamiliesNormalize) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> eb{4 * rng.normal()};
    double total = 0.0;
    for (double x : {0.0, 1.0}) {
      const std::vector<double> pt{x};
      total += std::exp(log_density(ExpFamSpec::bernoulli(), eb, pt));
    }
    EXPECT_NEAR(total, 1.0, 1e-12);

    const std::vector<double> ec{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    total = 0.0;
    for (double k = 0; k < 4; ++k) {
      const std::vector<double> pt{k};
      total += std::exp(log_density(ExpFamSpec::categorical(4), ec, pt));
    }
    EXPECT_NEAR(total, 1.0, 1e-12);

    // Poisson truncated far into the tail; the remainder is below 1e-30.
    const std::vector<double> ep{std::log(0.5 + 5 * rng.uniform())};
    std::vector<double> terms;
    for (double k = 0; k < 150; ++k) {
      const std::vector<double> pt{k};
      terms.push_back(std::exp(log_density(ExpFamSpec::poisson(), ep, pt)));
    }
    // Sum smallest first to keep the total exact to rounding.
    std::sort(terms.begin(), terms.end());
    EXPECT_NEAR(std::accumulate(terms.begin(), terms.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(ExpFam, OutOfSupportThrows) {
  const std::vector<double> eta{0.0};
  const std::vector<double> two{2.0};
  EXPECT_THROW(log_density(ExpFamSpec::bernoulli(), eta, two), DomainError);
  const std::vector<double> neg{-1.0};
  EXPECT_THROW(log_density(ExpFamSpec::poisson(), eta, neg), DomainError);
}

TEST(ExpFam, DirichletAndGammaDensitiesMatchClosedForm) {
  const std::vector<double> alpha{2.0, 3.0};
  const std::vector<double> x{0.25, 0.75};
  // Beta(2, 3) density at 0.25 is 12 * 0.25 * 0.75^2.
  EXPECT_NEAR(log_density(ExpFamSpec::dirichlet(2), natural_param(ExpFamSpec::dirichlet(2), alpha),
                          x),
              std::log(12 * 0.25 * 0.5625), 1e-12);
  const std::vector<double> ab{3.0, 2.0};
  const std::vector<double> g{1.5};
  const double direct = 3 * std::log(2.0) + 2 * std::log(1.5) - 2 * 1.5 - std::lgamma(3.0);
  EXPECT_NEAR(log_density(ExpFamSpec::gamma(), natural_param(ExpFamSpec::gamma(), ab), g), direct,
              1e-12);
}

TEST(ExpFam, SamplerExamples) {
  Rng rng(3);
  const std::vector<double> p1{1.0};
  const std::vector<double> onehot{1.0, 0.0, 0.0};
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(sample(ExpFamSpec::bernoulli(), p1, rng)[0], 1.0);
    EXPECT_EQ(sample(ExpFamSpec::categorical(3), onehot, rng)[0], 0.0);
  }
  const std::vector<double> g{2.0, 0.25};
  double mean = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) mean += sample(ExpFamSpec::gaussian(), g, rng)[0] / n;
  EXPECT_NEAR(mean, 2.0, 3 * 0.5 / std::sqrt(n));
}

TEST(ExpFam, GammaAndDirichletSamplerMoments) {
  Rng rng(4);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(sample_gamma(0.7, rng));
  const auto m = test::moments(xs);
  EXPECT_NEAR(m.mean, 0.7, 4 * m.se);
  EXPECT_NEAR(m.var, 0.7, 0.03);
  const std::vector<double> alpha{1.0, 2.0, 3.0};
  std::vector<double> first;
  for (int i = 0; i < 50000; ++i) {
    const auto d = sample_dirichlet(alpha, rng);
    ASSERT_NEAR(d[0] + d[1] + d[2], 1.0, 1e-12);
    first.push_back(d[0]);
  }
  const auto md = test::moments(first);
  EXPECT_NEAR(md.mean, 1.0 / 6.0, 4 * md.se);
}

TEST(ExpFam, PoissonSamplerSmallAndLargeRates) {
  Rng rng(5);
  for (double lambda : {0.8, 40.0}) {
    std::vector<double> xs;
    for (int i = 0; i < 100000; ++i) xs.push_back(static_cast<double>(sample_poisson(lambda, rng)));
    const auto m = test::moments(xs);
    EXPECT_NEAR(m.mean, lambda, 4 * m.se) << lambda;
    EXPECT_NEAR(m.var / lambda, 1.0, 0.03) << lambda;
  }
}

// dA/deta = E[t(x)], autodiff of A against the Monte Carlo mean of t.
void expect_gradient_is_mean_stat(const ExpFamSpec& spec, const std::vector<double>& theta,
                                  std::uint64_t seed) {
  const auto eta = natural_param(spec, theta);
  Tape tape;
  const Var e = tape.leaf(Tensor::vector(eta));
  tape.backward(log_normalizer(spec, e));
  const Tensor grad = tape.grad(e);
  Rng rng(seed);
  std::vector<std::vector<double>> stats(spec.stat_size());
  for (int i = 0; i < 100000; ++i) {
    const auto t = sufficient_stats(spec, sample(spec, theta, rng));
    for (std::size_t j = 0; j < t.size(); ++j) stats[j].push_back(t[j]);
  }
  for (std::size_t j = 0; j < stats.size(); ++j) {
    const auto m = test::moments(stats[j]);
    EXPECT_NEAR(grad[j], m.mean, 4 * m.se) << family_name(spec.family) << " stat " << j;
  }
}

TEST(ExpFam, GradientOfLogNormalizerIsMeanStatistic) {
  expect_gradient_is_mean_stat(ExpFamSpec::bernoulli(), {0.3}, 11);
  expect_gradient_is_mean_stat(ExpFamSpec::poisson(), {3.5}, 12);
  expect_gradient_is_mean_stat(ExpFamSpec::gaussian(), {1.5, 0.49}, 13);
  expect_gradient_is_mean_stat(ExpFamSpec::categorical(3), {0.2, 0.5, 0.3}, 14);
}

TEST(ExpFam, DifferentiableLogNormalizerMatchesScalar) {
  Rng rng(6);
  for (const ExpFamSpec& spec : {ExpFamSpec::bernoulli(), ExpFamSpec::poisson(),
                                 ExpFamSpec::categorical(4)}) {
    std::vector<double> eta;
    for (std::size_t i = 0; i < spec.param_size(); ++i) eta.push_back(rng.normal());
    Tape tape;
    EXPECT_NEAR(log_normalizer(spec, tape.leaf(Tensor::vector(eta))).value().item(),
                log_normalizer(spec, eta), 1e-14);
  }
}

}  // namespace
}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dpgm/autodiff.hpp"
#include "dpgm/rng.hpp"

namespace dpgm {

enum class Family { Bernoulli, Gaussian, Poisson, Categorical, Dirichlet, Gamma };

const char* family_name(Family f);

/// A member of the exponential family, p(x) = nu(x) exp(eta^T t(x) - A(eta)).
///
/// Mean (user-facing) parameters and points x, as flat vectors:
///   Bernoulli    theta = {p}               x = {0 or 1}
///   Gaussian     theta = {mu, sigma^2}     x = {x}
///   Poisson      theta = {lambda}          x = {k}
///   Categorical  theta = {p_0..p_{K-1}}    x = {class index}
///   Dirichlet    theta = {alpha_1..K}      x = point on the simplex
///   Gamma        theta = {shape, rate}     x = {x}
///
/// Dirichlet uses eta = alpha - 1 so that t(x) = log x pairs with a
/// Lebesgue base measure; Gamma uses eta = (shape - 1, -rate).
struct ExpFamSpec {
  Family family = Family::Gaussian;
  std::size_t dim = 1;  // K for Categorical and Dirichlet

  static ExpFamSpec bernoulli() { return {Family::Bernoulli, 1}; }
  static ExpFamSpec gaussian() { return {Family::Gaussian, 1}; }
  static ExpFamSpec poisson() { return {Family::Poisson, 1}; }
  static ExpFamSpec categorical(std::size_t k) { return {Family::Categorical, k}; }
  static ExpFamSpec dirichlet(std::size_t k) { return {Family::Dirichlet, k}; }
  static ExpFamSpec gamma() { return {Family::Gamma, 1}; }

  std::size_t param_size() const;
  std::size_t point_size() const;
  std::size_t stat_size() const;
};

std::vector<double> natural_param(const ExpFamSpec& spec, std::span<const double> theta);
std::vector<double> mean_param(const ExpFamSpec& spec, std::span<const double> eta);
double log_normalizer(const ExpFamSpec& spec, std::span<const double> eta);
std::vector<double> sufficient_stats(const ExpFamSpec& spec, std::span<const double> x);
double log_base_measure(const ExpFamSpec& spec, std::span<const double> x);
double log_density(const ExpFamSpec& spec, std::span<const double> eta,
                   std::span<const double> x);
std::vector<double> sample(const ExpFamSpec& spec, std::span<const double> theta, Rng& rng);

/// Differentiable A(eta) for Bernoulli, Gaussian, Poisson and Categorical;
/// `eta` is a vector of the family's natural-parameter size.
Var log_normalizer(const ExpFamSpec& spec, Var eta);

double sample_gamma(double shape, Rng& rng);
std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng);
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);
std::uint64_t sample_poisson(double lambda, Rng& rng);

}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/expfam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace dpgm {

namespace {

void require(bool ok, const ExpFamSpec& spec, const std::string& what) {
  if (!ok) throw DomainError(std::string(family_name(spec.family)) + ": " + what);
}

void check_size(std::span<const double> v, std::size_t n, const ExpFamSpec& spec,
                const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(family_name(spec.family)) + ": " + what + " needs " +
                     std::to_string(n) + " values, got " + std::to_string(v.size()));
  }
}

std::size_t class_index(const ExpFamSpec& spec, double x) {
  require(x >= 0.0 && x == std::floor(x) && x < static_cast<double>(spec.dim), spec,
          "x must be a class index in [0, " + std::to_string(spec.dim) + ")");
  return static_cast<std::size_t>(x);
}

void check_support(const ExpFamSpec& spec, std::span<const double> x) {
  check_size(x, spec.point_size(), spec, "x");
  switch (spec.family) {
    case Family::Bernoulli:
      require(x[0] == 0.0 || x[0] == 1.0, spec, "x must be 0 or 1");
      break;
    case Family::Gaussian:
      require(std::isfinite(x[0]), spec, "x must be finite");
      break;
    case Family::Poisson:
      require(x[0] >= 0.0 && x[0] == std::floor(x[0]), spec,
              "x must be a non-negative integer");
      break;
    case Family::Categorical:
      class_index(spec, x[0]);
      break;
    case Family::Dirichlet: {
      double s = 0.0;
      for (double v : x) {
        require(v > 0.0, spec, "x must have positive entries");
        s += v;
      }
      require(std::abs(s - 1.0) < 1e-9, spec, "x must sum to 1");
      break;
    }
    case Family::Gamma:
      require(x[0] > 0.0, spec, "x must be positive");
      break;
  }
}

}  // namespace

const char* family_name(Family f) {
  switch (f) {
    case Family::Bernoulli: return "bernoulli";
    case Family::Gaussian: return "gaussian";
    case Family::Poisson: return "poisson";
    case Family::Categorical: return "categorical";
    case Family::Dirichlet: return "dirichlet";
    case Family::Gamma: return "gamma";
  }
  return "unknown";
}

std::size_t ExpFamSpec::param_size() const {
  switch (family) {
    case Family::Gaussian:
    case Family::Gamma: return 2;
    case Family::Categorical:
    case Family::Dirichlet: return dim;
    default: return 1;
  }
}

std::size_t ExpFamSpec::point_size() const { return family == Family::Dirichlet ? dim : 1; }

std::size_t ExpFamSpec::stat_size() const { return param_size(); }

std::vector<double> natural_param(const ExpFamSpec& spec, std::span<const double> theta) {
  check_size(theta, spec.param_size(), spec, "theta");
  switch (spec.family) {
    case Family::Bernoulli: {
      const double p = theta[0];
      require(p > 0.0 && p < 1.0, spec, "p must lie in (0, 1)");
      return {std::log(p / (1.0 - p))};
    }
    case Family::Gaussian: {
      const double var = theta[1];
      require(var > 0.0, spec, "sigma^2 must be positive");
      return {theta[0] / var, -0.5 / var};
    }
    case Family::Poisson:
      require(theta[0] > 0.0, spec, "lambda must be positive");
      return {std::log(theta[0])};
    case Family::Categorical: {
      std::vector<double> eta(theta.size());
      double s = 0.0;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        require(theta[k] >= 0.0, spec, "probabilities must be non-negative");
        s += theta[k];
        eta[k] = std::log(theta[k]);
      }
      require(std::abs(s - 1.0) < 1e-9, spec, "probabilities must sum to 1");
      return eta;
    }
    case Family::Dirichlet: {
      std::vector<double> eta(theta.size());
      for (std::size_t k = 0; k < theta.size(); ++k) {
        require(theta[k] > 0.0, spec, "concentrations must be positive");
        eta[k] = theta[k] - 1.0;
      }
      return eta;
    }
    case Family::Gamma:
      require(theta[0] > 0.0 && theta[1] > 0.0, spec, "shape and rate must be positive");
      return {theta[0] - 1.0, -theta[1]};
  }
  return {};
}

std::vector<double> mean_param(const ExpFamSpec& spec, std::span<const double> eta) {
  check_size(eta, spec.param_size(), spec, "eta");
  switch (spec.family) {
    case Family::Bernoulli: return {sigmoid(eta[0])};
    case Family::Gaussian:
      require(eta[1] < 0.0, spec, "eta_2 must be negative");
      return {-eta[0] / (2.0 * eta[1]), -0.5 / eta[1]};
    case Family::Poisson: return {std::exp(eta[0])};
    case Family::Categorical: {
      const double lse = log_sum_exp(eta);
      std::vector<double> p(eta.size());
      for (std::size_t k = 0; k < eta.size(); ++k) p[k] = std::exp(eta[k] - lse);
      return p;
    }
    case Family::Dirichlet: {
      std::vector<double> alpha(eta.size());
      for (std::size_t k = 0; k < eta.size(); ++k) {
        alpha[k] = eta[k] + 1.0;
        require(alpha[k] > 0.0, spec, "eta_k must exceed -1");
      }
      return alpha;
    }
    case Family::Gamma:
      require(eta[0] > -1.0 && eta[1] < 0.0, spec, "need eta_1 > -1 and eta_2 < 0");
      return {eta[0] + 1.0, -eta[1]};
  }
  return {};
}

double log_normalizer(const ExpFamSpec& spec, std::span<const double> eta) {
  check_size(eta, spec.param_size(), spec, "eta");
  switch (spec.family) {
    case Family::Bernoulli: return softplus(eta[0]);
    case Family::Gaussian:
      require(eta[1] < 0.0, spec, "eta_2 must be negative");
      return -eta[0] * eta[0] / (4.0 * eta[1]) - 0.5 * std::log(-2.0 * eta[1]);
    case Family::Poisson: return std::exp(eta[0]);
    case Family::Categorical:
      // Zero whenever eta = log p for normalised p.
      return log_sum_exp(eta);
    case Family::Dirichlet: {
      double sum_alpha = 0.0;
      double a = 0.0;
      for (double e : eta) {
        const double alpha = e + 1.0;
        require(alpha > 0.0, spec, "eta_k must exceed -1");
        sum_alpha += alpha;
        a += std::lgamma(alpha);
      }
      return a - std::lgamma(sum_alpha);
    }
    case Family::Gamma: {
      require(eta[0] > -1.0 && eta[1] < 0.0, spec, "need eta_1 > -1 and eta_2 < 0");
      const double shape = eta[0] + 1.0;
      return std::lgamma(shape) - shape * std::log(-eta[1]);
    }
  }
  return 0.0;
}

std::vector<double> sufficient_stats(const ExpFamSpec& spec, std::span<const double> x) {
  check_support(spec, x);
  switch (spec.family) {
    case Family::Bernoulli:
    case Family::Poisson: return {x[0]};
    case Family::Gaussian: return {x[0], x[0] * x[0]};
    case Family::Categorical: {
      std::vector<double> t(spec.dim, 0.0);
      t[class_index(spec, x[0])] = 1.0;
      return t;
    }
    case Family::Dirichlet: {
      std::vector<double> t(x.size());
      std::transform(x.begin(), x.end(), t.begin(), [](double v) { return std::log(v); });
      return t;
    }
    case Family::Gamma: return {std::log(x[0]), x[0]};
  }
  return {};
}

double log_base_measure(const ExpFamSpec& spec, std::span<const double> x) {
  check_support(spec, x);
  switch (spec.family) {
    case Family::Gaussian: return -0.5 * std::log(2.0 * std::numbers::pi);
    case Family::Poisson: return -std::lgamma(x[0] + 1.0);
    default: return 0.0;
  }
}

double log_density(const ExpFamSpec& spec, std::span<const double> eta,
                   std::span<const double> x) {
  const auto t = sufficient_stats(spec, x);
  check_size(eta, t.size(), spec, "eta");
  double dot = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    // A zero statistic contributes nothing even when eta_i = -inf (p_k = 0).
    if (t[i] != 0.0) dot += eta[i] * t[i];
  }
  return log_base_measure(spec, x) + dot - log_normalizer(spec, eta);
}

std::vector<double> sample(const ExpFamSpec& spec, std::span<const double> theta, Rng& rng) {
  if (spec.family == Family::Bernoulli) {
    // Sampling is defined at the endpoints even though eta is not.
    check_size(theta, 1, spec, "theta");
    require(theta[0] >= 0.0 && theta[0] <= 1.0, spec, "p must lie in [0, 1]");
  } else {
    natural_param(spec, theta);  // validates the domain
  }
  switch (spec.family) {
    case Family::Bernoulli: return {rng.uniform() < theta[0] ? 1.0 : 0.0};
    case Family::Gaussian: return {theta[0] + std::sqrt(theta[1]) * rng.normal()};
    case Family::Poisson: return {static_cast<double>(sample_poisson(theta[0], rng))};
    case Family::Categorical: return {static_cast<double>(sample_categorical(theta, rng))};
    case Family::Dirichlet: return sample_dirichlet(theta, rng);
    case Family::Gamma: return {sample_gamma(theta[0], rng) / theta[1]};
  }
  return {};
}

Var log_normalizer(const ExpFamSpec& spec, Var eta) {
  const Shape& s = eta.shape();
  if (s.size() != 1 || s[0] != spec.param_size()) {
    throw ShapeError(std::string(family_name(spec.family)) + ": eta shape " +
                     shape_string(s));
  }
  switch (spec.family) {
    case Family::Bernoulli: return sum(softplus(eta));
    case Family::Poisson: return sum(exp(eta));
    case Family::Categorical: return logsumexp(eta);
    case Family::Gaussian: {
      const Var e1 = slice(eta, 0, 1);
      const Var e2 = slice(eta, 1, 2);
      require(e2.value()[0] < 0.0, spec, "eta_2 must be negative");
      const Var quad = square(e1) / (-4.0 * e2);
      return sum(quad - 0.5 * log(-2.0 * e2));
    }
    default:
      throw DomainError(std::string(family_name(spec.family)) +
                        ": no differentiable log normalizer");
  }
}

double sample_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost: Gamma(a) = Gamma(a + 1) * U^(1/a).
    return sample_gamma(shape + 1.0, rng) * std::pow(rng.uniform(), 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng) {
  std::vector<double> g(alpha.size());
  double s = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    g[k] = sample_gamma(alpha[k], rng);
    s += g[k];
  }
  if (!(s > 0.0)) {
    // Every gamma draw underflowed (tiny concentrations); fall back to a vertex.
    std::fill(g.begin(), g.end(), 0.0);
    g[rng.below(g.size())] = 1.0;
    return g;
  }
  for (auto& v : g) v /= s;
  return g;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(total > 0.0)) throw DomainError("categorical: probabilities sum to zero");
  const double u = rng.uniform() * total;
  double c = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    c += probs[k];
    last = k;
    if (u < c) return k;
  }
  return last;
}

std::uint64_t sample_poisson(double lambda, Rng& rng) {
  if (!(lambda > 0.0)) throw DomainError("poisson: lambda must be positive");
  if (lambda < 30.0) {
    // Knuth: multiply uniforms until the product drops below exp(-lambda).
    const double limit = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = rng.uniform();
    while (p > limit) {
      ++k;
      p *= rng.uniform();
    }
    return k;
  }
  // Hormann's transformed rejection with squeeze (PTRS).
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  while (true) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

}  // namespace dpgm

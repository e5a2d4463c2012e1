// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpgm {

namespace {

void axpy(Tensor& y, double a, const Tensor& x) {
  auto ys = y.data();
  auto xs = x.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += a * xs[i];
}

LeapfrogState evaluate(const BatchLogDensity& target, Tensor z, Tensor p) {
  LeapfrogState s{std::move(z), std::move(p), Tensor(), Tensor()};
  s.grad = Tensor::zeros_like(s.z);
  s.logp = target(s.z, s.grad);
  return s;
}

double kinetic(std::span<const double> p) {
  double k = 0.0;
  for (double v : p) k += 0.5 * v * v;
  return k;
}

}  // namespace

void HmcConfig::validate() const {
  if (leapfrog < 1) throw DomainError("hmc: leapfrog steps must be >= 1");
  if (!(step_size > 0.0)) throw DomainError("hmc: step size must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw DomainError("hmc: target acceptance must lie in (0, 1)");
  }
  if (adapt_gain < 0.0) throw DomainError("hmc: adaptation gain must be >= 0");
}

LeapfrogState leapfrog(const LeapfrogState& start, const BatchLogDensity& target, double step,
                       std::size_t steps) {
  LeapfrogState s = start;
  axpy(s.p, 0.5 * step, s.grad);
  for (std::size_t l = 0; l < steps; ++l) {
    axpy(s.z, step, s.p);
    s.logp = target(s.z, s.grad);
    axpy(s.p, l + 1 == steps ? 0.5 * step : step, s.grad);
  }
  return s;
}

std::pair<Tensor, Tensor> leapfrog(const Tensor& z, const Tensor& momentum,
                                   const BatchLogDensity& target, double step,
                                   std::size_t steps) {
  if (z.shape() != momentum.shape()) {
    throw ShapeError("leapfrog: position " + shape_string(z.shape()) + " vs momentum " +
                     shape_string(momentum.shape()));
  }
  auto end = leapfrog(evaluate(target, z, momentum), target, step, steps);
  return {std::move(end.z), std::move(end.p)};
}

HmcResult hmc_sample(const BatchLogDensity& target, const Tensor& init, const HmcConfig& config,
                     Rng& rng) {
  config.validate();
  if (init.rank() != 2) {
    throw ShapeError("hmc_sample: init must be [chains, dim], got " + shape_string(init.shape()));
  }
  const std::size_t chains = init.dim(0);
  const std::size_t dim = init.dim(1);

  LeapfrogState cur = evaluate(target, init, Tensor::zeros_like(init));
  for (std::size_t c = 0; c < chains; ++c) {
    if (!std::isfinite(cur.logp[c])) {
      throw DomainError("hmc_sample: initial position of chain " + std::to_string(c) +
                        " has non-finite log density");
    }
  }

  HmcResult result;
  double log_step = std::log(config.step_size);
  double accept_sum = 0.0;
  double kept_sum = 0.0;
  bool any_accepted = false;
  const std::size_t total = config.burn_in + config.num_samples;
  for (std::size_t t = 0; t < total; ++t) {
    cur.p = rng.normal({chains, dim});
    const LeapfrogState prop = leapfrog(cur, target, std::exp(log_step), config.leapfrog);

    double mean_accept = 0.0;
    for (std::size_t c = 0; c < chains; ++c) {
      const double h0 = -cur.logp[c] + kinetic(cur.p.row(c));
      const double h1 = -prop.logp[c] + kinetic(prop.p.row(c));
      bool finite = std::isfinite(h1);
      for (double g : prop.grad.row(c)) finite = finite && std::isfinite(g);
      const double a = finite ? std::exp(std::min(0.0, h0 - h1)) : 0.0;
      mean_accept += a;
      if (finite && rng.uniform() < a) {
        any_accepted = true;
        auto z_row = cur.z.row(c);
        auto g_row = cur.grad.row(c);
        const auto pz = prop.z.row(c);
        const auto pg = prop.grad.row(c);
        std::copy(pz.begin(), pz.end(), z_row.begin());
        std::copy(pg.begin(), pg.end(), g_row.begin());
        cur.logp[c] = prop.logp[c];
      }
    }
    mean_accept /= static_cast<double>(chains);
    accept_sum += mean_accept;

    if (t < config.burn_in) {
      if (config.adapt_gain > 0.0) {
        const double rate = std::pow(static_cast<double>(t + 1), -config.adapt_decay);
        log_step += config.adapt_gain * rate * (mean_accept - config.target_accept);
      }
    } else {
      kept_sum += mean_accept;
      result.samples.push_back(cur.z);
    }
  }

  result.transitions = total;
  result.acceptance_rate = total ? accept_sum / static_cast<double>(total) : 0.0;
  result.kept_acceptance =
      config.num_samples ? kept_sum / static_cast<double>(config.num_samples) : 0.0;
  result.step_size = std::exp(log_step);
  result.degenerate = total > 0 && !any_accepted;
  result.last = std::move(cur.z);
  return result;
}

}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/experiments.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "dpgm/expfam.hpp"

namespace dpgm {

std::vector<double> RingTarget::mixture_weights() const {
  if (weights.empty()) return std::vector<double>(modes, 1.0 / static_cast<double>(modes));
  return weights;
}

Tensor RingTarget::centers() const {
  Tensor c({modes, 2});
  for (std::size_t k = 0; k < modes; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(modes);
    c.at(k, 0) = radius * std::cos(angle);
    c.at(k, 1) = radius * std::sin(angle);
  }
  return c;
}

void RingTarget::validate() const {
  if (modes == 0) throw DomainError("ring: need at least one mode");
  if (!(radius >= 0.0) || !(stddev > 0.0)) throw DomainError("ring: bad radius or stddev");
  if (!weights.empty()) {
    if (weights.size() != modes) throw ShapeError("ring: one weight per mode required");
    double s = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw DomainError("ring: negative mixture weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DomainError("ring: weights must sum to 1");
  }
}

Tensor ring_sample(const RingTarget& target, std::size_t n, Rng& rng) {
  target.validate();
  if (n == 0) throw DomainError("ring_sample: n must be >= 1");
  const auto w = target.mixture_weights();
  const Tensor c = target.centers();
  Tensor out({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = sample_categorical(w, rng);
    out.at(i, 0) = c.at(k, 0) + target.stddev * rng.normal();
    out.at(i, 1) = c.at(k, 1) + target.stddev * rng.normal();
  }
  return out;
}

std::vector<double> imbalanced_weights(std::size_t k, std::size_t modes) {
  if (k >= modes) {
    throw DomainError("imbalanced_weights: k = " + std::to_string(k) + " must be below K = " +
                      std::to_string(modes));
  }
  std::vector<double> w(modes);
  const double rest = (1.0 - 1e-3 * static_cast<double>(k)) / static_cast<double>(modes - k);
  for (std::size_t i = 0; i < modes; ++i) w[i] = i < k ? 1e-3 : rest;
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= s;
  return w;
}

ModeCoverage mode_coverage(const Tensor& samples, const RingTarget& target,
                           double assign_radius, double min_fraction) {
  target.validate();
  if (samples.rank() != 2 || samples.cols() != 2 || samples.rows() == 0) {
    throw ShapeError("mode_coverage: samples must be [n, 2], got " +
                     shape_string(samples.shape()));
  }
  const Tensor c = target.centers();
  const std::size_t n = samples.rows();
  std::vector<std::size_t> counts(target.modes, 0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < target.modes; ++k) {
      const double dx = samples.at(i, 0) - c.at(k, 0);
      const double dy = samples.at(i, 1) - c.at(k, 1);
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    if (best_d2 <= assign_radius * assign_radius) {
      ++counts[best];
      ++assigned;
    }
  }

  ModeCoverage out;
  out.assign_radius = assign_radius;
  out.min_fraction = min_fraction;
  out.proportions.resize(target.modes);
  for (std::size_t k = 0; k < target.modes; ++k) {
    out.proportions[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
    if (counts[k] > 0 && out.proportions[k] >= min_fraction) ++out.covered;
  }
  out.unassigned_fraction = static_cast<double>(n - assigned) / static_cast<double>(n);
  if (assigned > 0) {
    constexpr double kSmooth = 1e-10;
    const auto w = target.mixture_weights();
    double kl = 0.0;
    for (std::size_t k = 0; k < target.modes; ++k) {
      const double p = static_cast<double>(counts[k]) / static_cast<double>(assigned);
      if (p > 0.0) kl += p * std::log((p + kSmooth) / (w[k] + kSmooth));
    }
    out.kl = std::max(0.0, kl);
  }
  return out;
}

}  // namespace dpgm

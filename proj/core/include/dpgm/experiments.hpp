// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <limits>
#include <vector>

#include "dpgm/rng.hpp"
#include "dpgm/tensor.hpp"

namespace dpgm {

/// Mixture of K isotropic 2-D Gaussians centred at
/// (r cos(2 pi k / K), r sin(2 pi k / K)).
struct RingTarget {
  std::size_t modes = 10;
  double radius = 3.0;
  double stddev = 0.05;
  std::vector<double> weights;  // empty means uniform

  std::vector<double> mixture_weights() const;
  Tensor centers() const;  // [K, 2]
  void validate() const;
};

/// [n, 2] draws from the ring mixture.
Tensor ring_sample(const RingTarget& target, std::size_t n, Rng& rng);

/// First k weights at 1e-3, the remaining K - k equal, renormalised to sum to
/// one. k = 0 gives the uniform mixture.
std::vector<double> imbalanced_weights(std::size_t k, std::size_t modes);

struct ModeCoverage {
  std::size_t covered = 0;
  std::vector<double> proportions;  // assigned fraction per mode, over all samples
  double unassigned_fraction = 0.0;
  /// KL(assigned distribution || target weights); +inf when nothing is assigned.
  double kl = std::numeric_limits<double>::infinity();
  double assign_radius = 0.5;
  double min_fraction = 0.02;
};

/// Nearest-centre assignment within assign_radius; a mode is covered when its
/// fraction of all samples reaches min_fraction. The KL uses the assigned
/// proportions renormalised over assigned samples, smoothed by 1e-10.
ModeCoverage mode_coverage(const Tensor& samples, const RingTarget& target,
                           double assign_radius = 0.5, double min_fraction = 0.02);

}  // namespace dpgm

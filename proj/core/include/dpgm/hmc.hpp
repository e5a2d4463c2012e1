// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <vector>

#include "dpgm/rng.hpp"
#include "dpgm/tensor.hpp"

namespace dpgm {

/// Batched target: positions are [C, d], one independent chain per row.
/// Returns log density per chain [C] and writes d/dz log density into grad.
using BatchLogDensity = std::function<Tensor(const Tensor& z, Tensor& grad)>;

struct HmcConfig {
  std::size_t leapfrog = 5;
  double step_size = 0.02;
  double target_accept = 0.67;
  std::size_t burn_in = 2;
  std::size_t num_samples = 2;
  /// Robbins-Monro gain on log step size during burn-in; the n-th update is
  /// scaled by n^-adapt_decay. Zero disables adaptation.
  double adapt_gain = 0.5;
  double adapt_decay = 0.6;

  void validate() const;
};

struct HmcResult {
  std::vector<Tensor> samples;     // num_samples tensors of shape [C, d]
  Tensor last;                     // final position
  double acceptance_rate = 0.0;    // mean acceptance probability over all transitions
  double kept_acceptance = 0.0;    // same, over retained transitions only
  double step_size = 0.0;          // step size after adaptation
  std::size_t transitions = 0;
  bool degenerate = false;         // no proposal was accepted in any chain
};

struct LeapfrogState {
  Tensor z;
  Tensor p;
  Tensor logp;
  Tensor grad;
};

/// L steps of half-kick / drift / half-kick. `start.logp` and `start.grad`
/// must hold the target at `start.z`; the result carries them at the end point.
LeapfrogState leapfrog(const LeapfrogState& start, const BatchLogDensity& target, double step,
                       std::size_t steps);

/// Convenience form for callers holding only a position and momentum.
std::pair<Tensor, Tensor> leapfrog(const Tensor& z, const Tensor& momentum,
                                   const BatchLogDensity& target, double step,
                                   std::size_t steps);

/// Unit-mass HMC with a Metropolis correction per chain. Burn-in transitions
/// adapt a shared step size toward the target acceptance and are discarded;
/// the next num_samples positions are returned.
HmcResult hmc_sample(const BatchLogDensity& target, const Tensor& init, const HmcConfig& config,
                     Rng& rng);

}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <string>
#include <vector>

#include "dpgm/gradcheck.hpp"
#include "dpgm/rng.hpp"

namespace dpgm {

/// A scalar graph with concrete inputs, checked against finite differences.
/// `linear` graphs are (multi)linear in each input coordinate, so central
/// differences are exact up to rounding.
struct RegisteredGraph {
  std::string name;
  GraphBuilder build;
  std::vector<Tensor> inputs;
  bool linear = false;
};

/// Every primitive op plus the composite objectives the library trains:
/// MLP and skip decoders, encoder, ELBO, IWAE, REM weighted objectives, GAN
/// losses, the PresGAN generator surrogate, ETM ELBO and CBOW loss.
std::vector<RegisteredGraph> registered_graphs(Rng& rng);

struct GraphCheck {
  std::string name;
  bool linear = false;
  GradCheckResult result;
};

std::vector<GraphCheck> check_registered_graphs(Rng& rng, double h = 1e-4);

}  // namespace dpgm

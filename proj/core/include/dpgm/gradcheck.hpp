// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dpgm/autodiff.hpp"

namespace dpgm {

/// Builds a scalar-valued graph from leaf variables on the given tape.
using GraphBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double ad = 0.0;
  double fd = 0.0;
};

/// Compares reverse-mode gradients against five-point central differences
/// with step h. The graph is recorded once and replayed for each
/// perturbation, so any sampling inside the builder is frozen. Error per
/// element is |ad - fd| / max(|ad| + |fd|, 1e-6 max(1, |f|)); the floor keeps
/// rounding noise on near-zero entries from reading as a large relative error.
GradCheckResult check_gradients_detail(const GraphBuilder& build,
                                       const std::vector<Tensor>& inputs, double h = 1e-4);

double check_gradients(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                       double h = 1e-4);

}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dpgm {

GradCheckResult check_gradients_detail(const GraphBuilder& build,
                                       const std::vector<Tensor>& inputs, double h) {
  Tape tape;
  const auto leaves = tape.leaves(inputs);
  const Var out = build(tape, leaves);
  if (out.value().size() != 1) {
    throw ShapeError("check_gradients: output must be scalar, got " +
                     shape_string(out.value().shape()));
  }
  tape.backward(out);
  const auto ad = tape.grads(leaves);

  const double f0 = out.value().item();
  const double floor = 1e-6 * std::max(1.0, std::abs(f0));
  auto eval_at = [&](Tensor& probe, std::size_t i, std::size_t j, double x) {
    probe[j] = x;
    tape.set_value(leaves[i], probe);
    tape.replay();
    return out.value().item();
  };

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor probe = inputs[i];
    for (std::size_t j = 0; j < probe.size(); ++j) {
      const double orig = probe[j];
      const double up2 = eval_at(probe, i, j, orig + 2.0 * h);
      const double up = eval_at(probe, i, j, orig + h);
      const double down = eval_at(probe, i, j, orig - h);
      const double down2 = eval_at(probe, i, j, orig - 2.0 * h);
      probe[j] = orig;

      const double fd = (8.0 * (up - down) - (up2 - down2)) / (12.0 * h);
      const double a = ad[i][j];
      const double err = std::abs(a - fd) / std::max(floor, std::abs(a) + std::abs(fd));
      if (err > result.max_rel_error) result = {err, i, j, a, fd};
    }
    tape.set_value(leaves[i], inputs[i]);
  }
  tape.replay();
  return result;
}

double check_gradients(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                       double h) {
  return check_gradients_detail(build, inputs, h).max_rel_error;
}

}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "dpgm/autodiff.hpp"
#include "dpgm/gradcheck.hpp"
#include "dpgm/graph_registry.hpp"
#include "dpgm/rng.hpp"

namespace dpgm {
namespace {

TEST(Autodiff, MatmulIdentity) {
  Tape tape;
  const Var a = tape.leaf(Tensor::matrix({{1, 2}, {3, 4}}));
  const Var i = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  EXPECT_EQ(matmul(a, i).value().values(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Autodiff, SoftmaxOfZerosIsUniform) {
  Tape tape;
  const Var s = softmax(tape.leaf(Tensor::vector({0, 0, 0})));
  for (double v : s.value().values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Autodiff, SoftplusOfZeroIsLogTwo) {
  Tape tape;
  EXPECT_NEAR(softplus(tape.leaf(Tensor::scalar(0.0))).value().item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-12);
  EXPECT_NEAR(softplus(-800.0), 0.0, 1e-300);
}

TEST(Autodiff, GradientOfSumOfSquares) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2, 3}));
  tape.backward(sum(square(x)));
  EXPECT_EQ(tape.grad(x).values(), (std::vector<double>{2, 4, 6}));
}

TEST(Autodiff, TanhLayerGradientAtZeroWeights) {
  // d/dW sum(tanh(W x)) at W = 0 has every row equal to x^T.
  Tape tape;
  const Var w = tape.leaf(Tensor::zeros({3, 2}));
  const Var x = tape.constant(Tensor::matrix({{0.5}, {-1.5}}));
  tape.backward(sum(tanh(matmul(w, x))));
  const Tensor g = tape.grad(w);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_DOUBLE_EQ(g.at(r, 0), 0.5);
    EXPECT_DOUBLE_EQ(g.at(r, 1), -1.5);
  }
}

TEST(Autodiff, ConstantSubgraphGetsZeroGradient) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2}));
  const Var unused = tape.leaf(Tensor::vector({5, 6}));
  const Var c = tape.constant(Tensor::vector({3, 4}));
  tape.backward(sum(x * exp(c)));
  EXPECT_EQ(tape.grad(unused).values(), (std::vector<double>{0, 0}));
  EXPECT_EQ(tape.grad(c).values(), (std::vector<double>{0, 0}));
}

TEST(Autodiff, ShapeErrorNamesTheOp) {
  Tape tape;
  const Var a = tape.leaf(Tensor::zeros({2, 3}));
  const Var b = tape.leaf(Tensor::zeros({2, 2}));
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
  }
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Autodiff, SeedShapeMismatchThrows) {
  Tape tape;
  const Var y = square(tape.leaf(Tensor::vector({1, 2})));
  EXPECT_THROW(tape.backward(y, Tensor::vector({1, 2, 3})), ShapeError);
  EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Autodiff, NonFiniteCheckReportsNode) {
  Tape tape(true);
  const Var x = tape.leaf(Tensor::vector({-1.0}));
  try {
    log(x);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("node"), std::string::npos);
  }
}

TEST(Autodiff, BackwardIsLinearInTheOutput) {
  Rng rng(3);
  Tape tape;
  const Var x = tape.leaf(rng.normal({3, 4}));
  const Var w = tape.leaf(rng.normal({4, 2}));
  const Var f = sum(tanh(matmul(x, w)));
  const Var g = sum(square(sigmoid(x)));
  tape.backward(f);
  const auto gf = tape.grads(std::vector<Var>{x, w});
  tape.backward(g);
  const auto gg = tape.grads(std::vector<Var>{x, w});
  tape.backward(f + g);
  const auto gs = tape.grads(std::vector<Var>{x, w});
  for (std::size_t i = 0; i < 2; ++i) EXPECT_LT(max_abs_diff(gs[i], gf[i] + gg[i]), 1e-12);
}

TEST(Autodiff, ReplayIsBitIdentical) {
  Rng rng(4);
  Tape tape;
  const Var x = tape.leaf(rng.normal({5, 3}));
  const Var y = logsumexp(softplus(x) * x);
  const Tensor first = y.value();
  tape.set_value(x, rng.normal({5, 3}));
  tape.replay();
  EXPECT_NE(y.value().values(), first.values());
  Tape other;
  const Var x2 = other.leaf(tape.value(x));
  const Var y2 = logsumexp(softplus(x2) * x2);
  tape.replay();
  EXPECT_EQ(y.value().values(), y2.value().values());
}

TEST(GradCheck, RejectsNonScalarOutput) {
  const GraphBuilder build = [](Tape&, std::span<const Var> v) { return square(v[0]); };
  EXPECT_THROW(check_gradients(build, {Tensor::vector({1, 2})}), ShapeError);
}

TEST(GradCheck, LinearMapIsExact) {
  Rng rng(8);
  const GraphBuilder build = [](Tape&, std::span<const Var> v) {
    return sum(matmul(v[0], v[1]));
  };
  // The stencil is exact on polynomials, so a wide step only cuts rounding.
  EXPECT_LT(check_gradients(build, {rng.normal({3, 4}), rng.normal({4, 2})}, 0.1), 1e-9);
}

TEST(GradCheck, ThreeLayerTanhMlp) {
  Rng rng(9);
  const GraphBuilder build = [](Tape&, std::span<const Var> v) {
    Var h = tanh(add_bias(matmul(v[0], v[1]), v[2]));
    h = tanh(add_bias(matmul(h, v[3]), v[4]));
    return sum(add_bias(matmul(h, v[5]), v[6]));
  };
  const std::vector<Tensor> inputs{rng.normal({4, 3}), rng.normal({3, 5}), rng.normal({5}),
                                   rng.normal({5, 5}), rng.normal({5}),    rng.normal({5, 2}),
                                   rng.normal({2})};
  EXPECT_LT(check_gradients(build, inputs, 1e-5), 1e-5);
}

TEST(GradCheck, SoftmaxLogLikelihoodHead) {
  Rng rng(10);
  const GraphBuilder build = [](Tape& tape, std::span<const Var> v) {
    const Var onehot = tape.constant(Tensor::matrix({{0, 1, 0}, {1, 0, 0}}));
    return neg(sum(onehot * log_softmax(matmul(v[0], v[1]))));
  };
  EXPECT_LT(check_gradients(build, {rng.normal({2, 4}), rng.normal({4, 3})}), 1e-5);
}

// Property test: every primitive op on random shapes and values.
struct Primitive {
  const char* name;
  int arity;
  bool positive;  // inputs must be > 0 (log, sqrt, div denominators)
  std::function<Var(Tape&, std::span<const Var>)> apply;
};

std::vector<Primitive> primitives() {
  using V = std::span<const Var>;
  return {
      {"add", 2, false, [](Tape&, V v) { return add(v[0], v[1]); }},
      {"sub", 2, false, [](Tape&, V v) { return sub(v[0], v[1]); }},
      {"mul", 2, false, [](Tape&, V v) { return mul(v[0], v[1]); }},
      {"div", 2, true, [](Tape&, V v) { return div(v[0], v[1]); }},
      {"neg", 1, false, [](Tape&, V v) { return neg(v[0]); }},
      {"scale", 1, false, [](Tape&, V v) { return scale(v[0], -1.7); }},
      {"add_scalar", 1, false, [](Tape&, V v) { return add_scalar(v[0], 0.3); }},
      {"tanh", 1, false, [](Tape&, V v) { return tanh(v[0]); }},
      {"sigmoid", 1, false, [](Tape&, V v) { return sigmoid(v[0]); }},
      {"softplus", 1, false, [](Tape&, V v) { return softplus(v[0]); }},
      {"relu", 1, false, [](Tape&, V v) { return relu(v[0]); }},
      {"exp", 1, false, [](Tape&, V v) { return exp(v[0]); }},
      {"log", 1, true, [](Tape&, V v) { return log(v[0]); }},
      {"square", 1, false, [](Tape&, V v) { return square(v[0]); }},
      {"sqrt", 1, true, [](Tape&, V v) { return sqrt(v[0]); }},
      {"log_sigmoid", 1, false, [](Tape&, V v) { return log_sigmoid(v[0]); }},
      {"softmax", 1, false, [](Tape&, V v) { return softmax(v[0]); }},
      {"log_softmax", 1, false, [](Tape&, V v) { return log_softmax(v[0]); }},
      {"logsumexp", 1, false, [](Tape&, V v) { return logsumexp(v[0]); }},
      {"sum_last", 1, false, [](Tape&, V v) { return sum_last(v[0]); }},
      {"transpose", 1, false, [](Tape&, V v) { return transpose(v[0]); }},
      {"matmul_t", 2, false, [](Tape&, V v) { return matmul(v[0], transpose(v[1])); }},
      {"slice", 1, false, [](Tape&, V v) { return slice(v[0], 0, 1); }},
      {"concat", 2, false, [](Tape&, V v) { return concat(std::vector<Var>{v[0], v[1]}); }},
      {"mean", 1, false, [](Tape&, V v) { return mean(v[0]); }},
  };
}

TEST(GradCheck, EveryPrimitiveOnRandomShapes) {
  Rng rng(2024);
  const auto ops = primitives();
  int trials = 0;
  for (int t = 0; t < 125; ++t) {
    const Primitive& op = ops[static_cast<std::size_t>(t) % ops.size()];
    const Shape shape{1 + rng.below(4), 1 + rng.below(4)};
    std::vector<Tensor> inputs;
    for (int a = 0; a < op.arity; ++a) {
      Tensor x = rng.normal(shape);
      // Keep clear of kinks and domain edges so differences stay smooth.
      for (double& v : x.values()) {
        if (op.positive) v = 0.3 + std::abs(v);
        else if (std::abs(v) < 0.05) v += 0.1;
      }
      inputs.push_back(std::move(x));
    }
    const auto apply = op.apply;
    // sum(W * op(x)) with a fixed random weight exercises arbitrary seeds.
    const std::uint64_t wseed = rng.next_u64();
    const GraphBuilder build = [apply, wseed](Tape& tape, std::span<const Var> v) {
      const Var y = apply(tape, v);
      Rng wr(wseed);
      return sum(y * tape.constant(wr.normal(y.shape())));
    };
    const double err = check_gradients(build, inputs);
    EXPECT_LT(err, 1e-5) << op.name << " shape " << shape_string(shape);
    ++trials;
  }
  EXPECT_GE(trials, 100);
}

TEST(GradCheck, RegisteredGraphsPassTolerances) {
  Rng rng(2019);
  const auto checks = check_registered_graphs(rng);
  EXPECT_GT(checks.size(), 30u);
  for (const auto& c : checks) {
    const double tol = c.linear ? 1e-9 : 1e-5;
    EXPECT_LT(c.result.max_rel_error, tol) << c.name;
  }
}

}  // namespace
}  // namespace dpgm

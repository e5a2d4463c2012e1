// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cmath>

#include "dpgm/gradcheck.hpp"
#include "dpgm/linalg.hpp"
#include "dpgm/models.hpp"

namespace dpgm {
namespace {

TEST(Models, EfpcaIdentityAndZero) {
  const Tensor z = Tensor::matrix({{0.3, -1.2, 2.0}});
  EXPECT_EQ(efpca_decode(identity(3), z).values(), z.values());
  EXPECT_EQ(efpca_decode(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}), Tensor::zeros({1, 3})).values(),
            (std::vector<double>{0, 0}));
}

TEST(Models, EfpcaMatchesHandMatmul) {
  Rng rng(1);
  const Tensor beta = rng.normal({3, 5});
  const Tensor z = rng.normal({4, 3});
  const Tensor eta = efpca_decode(beta, z);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) acc += z.at(b, k) * beta.at(k, j);
      EXPECT_NEAR(eta.at(b, j), acc, 1e-12);
    }
  EXPECT_THROW(efpca_decode(beta, rng.normal({4, 2})), ShapeError);
}

TEST(Models, MlpWithZeroWeightsOutputsFinalBias) {
  const MlpSpec spec{{2, 4, 3}};
  Rng rng(2);
  auto params = init_mlp(spec, rng);
  for (auto& p : params) p = Tensor::zeros_like(p);
  params[3] = Tensor::vector({0.5, -1.0, 2.0});
  Tape tape;
  const auto vars = bind_params(tape, params);
  const Var out = mlp_forward(spec, vars, tape.constant(rng.normal({5, 2})));
  for (std::size_t b = 0; b < 5; ++b) {
    EXPECT_DOUBLE_EQ(out.value().at(b, 0), 0.5);
    EXPECT_DOUBLE_EQ(out.value().at(b, 2), 2.0);
  }
}

TEST(Models, OneLayerMlpIsEfpca) {
  const MlpSpec spec{{3, 4}};
  Rng rng(3);
  auto params = init_mlp(spec, rng);
  params[1] = Tensor::zeros({4});
  const Tensor z = rng.normal({6, 3});
  Tape tape;
  const Var out = mlp_forward(spec, bind_params(tape, params), tape.constant(z));
  EXPECT_LT(max_abs_diff(out.value(), efpca_decode(params[0], z)), 1e-14);
}

TEST(Models, InitIsUniformInFanInBound) {
  const MlpSpec spec{{16, 8}};
  Rng rng(4);
  const auto params = init_mlp(spec, rng);
  for (double w : params[0].values()) EXPECT_LE(std::abs(w), 0.25);
  for (double b : params[1].values()) EXPECT_EQ(b, 0.0);
}

TEST(Models, SkipWithZeroSkipWeightsEqualsMlp) {
  const MlpSpec spec{{2, 6, 6, 4}};
  Rng rng(5);
  const auto mlp = init_mlp(spec, rng);
  // Skip layout: W_0, b_0, then (W_h, W_z, b) per later layer.
  std::vector<Tensor> skip{mlp[0], mlp[1]};
  for (std::size_t l = 1; l < spec.layers(); ++l) {
    skip.push_back(mlp[2 * l]);
    skip.push_back(Tensor::zeros({2, spec.widths[l + 1]}));
    skip.push_back(mlp[2 * l + 1]);
  }
  const Tensor z = rng.normal({7, 2});
  Tape tape;
  const Var a = mlp_forward(spec, bind_params(tape, mlp), tape.constant(z));
  const Var b = skip_forward(spec, bind_params(tape, skip), tape.constant(z));
  EXPECT_LT(max_abs_diff(a.value(), b.value()), 1e-12);
}

TEST(Models, SkipWithZeroHiddenWeightsIsPureSkipPath) {
  MlpSpec spec{{2, 3, 4}};
  spec.hidden = Activation::Identity;
  Rng rng(6);
  auto params = init_skip(spec, rng);
  params[2] = Tensor::zeros_like(params[2]);  // W_1^(h)
  params[4] = Tensor::zeros_like(params[4]);  // b_1
  const Tensor z = rng.normal({5, 2});
  Tape tape;
  const Var out = skip_forward(spec, bind_params(tape, params), tape.constant(z));
  EXPECT_LT(max_abs_diff(out.value(), matmul(z, params[3])), 1e-14);
}

TEST(Models, DecodersPassGradientChecks) {
  Rng rng(7);
  const MlpSpec spec{{2, 5, 3}};
  for (DecoderKind kind : {DecoderKind::Mlp, DecoderKind::Skip}) {
    const Decoder dec{kind, spec};
    std::vector<Tensor> inputs = dec.init(rng);
    for (auto& p : inputs) p = rng.normal(p.shape());
    inputs.push_back(rng.normal({4, 2}));
    const GraphBuilder build = [dec](Tape&, std::span<const Var> v) {
      return sum(tanh(dec.forward(v.first(v.size() - 1), v.back())));
    };
    EXPECT_LT(check_gradients(build, inputs), 1e-5);
  }
}

TEST(Models, ZeroWeightEncoderOutputsHeadBiases) {
  const Encoder enc{{4, 8}, 2};
  Rng rng(8);
  auto params = enc.init(rng);
  for (auto& p : params) p = Tensor::zeros_like(p);
  params[params.size() - 3] = Tensor::vector({0.4, -0.2});  // mean bias
  params[params.size() - 1] = Tensor::vector({-3.0, 1.0});  // variance bias
  const GaussianDiag q = enc.encode(params, rng.normal({3, 4}));
  for (std::size_t b = 0; b < 3; ++b) {
    EXPECT_DOUBLE_EQ(q.mean.at(b, 0), 0.4);
    EXPECT_NEAR(std::exp(q.log_var.at(b, 0)), softplus(-3.0), 1e-15);
    EXPECT_NEAR(std::exp(q.log_var.at(b, 1)), softplus(1.0), 1e-15);
  }
}

TEST(Models, EncoderVarianceIsPositiveAndGradientsCheck) {
  const Encoder enc{{3, 6}, 2};
  Rng rng(9);
  auto params = enc.init(rng);
  for (auto& p : params) p = 5.0 * rng.normal(p.shape());
  const GaussianDiag q = enc.encode(params, 10.0 * rng.normal({50, 3}));
  for (double lv : q.log_var.values()) EXPECT_GT(std::exp(lv), 0.0);

  for (auto& p : params) p = rng.normal(p.shape());
  std::vector<Tensor> inputs = params;
  inputs.push_back(rng.normal({4, 3}));
  const GraphBuilder build = [enc](Tape&, std::span<const Var> v) {
    const auto [mu, lv] = enc.forward(v.first(v.size() - 1), v.back());
    return sum(mu * lv);
  };
  EXPECT_LT(check_gradients(build, inputs), 1e-5);
  EXPECT_THROW(enc.encode(params, rng.normal({2, 5})), ShapeError);
}

TEST(Models, GaussianDiagDensityMatchesClosedForm) {
  const GaussianDiag q{Tensor::matrix({{1.0, -1.0}}), Tensor::matrix({{0.0, std::log(4.0)}})};
  const Tensor z = Tensor::matrix({{2.0, 1.0}});
  const double expected = -std::log(2 * M_PI) - 0.5 * std::log(4.0) - 0.5 * (1.0 + 1.0);
  EXPECT_NEAR(q.log_density(z)[0], expected, 1e-12);
}

class LinearGaussianOracle : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(10);
    const std::vector<double> norms{2.0, 1.0};
    lg = LinearGaussian::orthogonal(2, 5, norms, 0.5, rng);
    lg.bias = rng.normal({5});
  }
  LinearGaussian lg;
};

TEST_F(LinearGaussianOracle, LogJointMatchesQuadraticForm) {
  Rng rng(11);
  const Tensor x = lg.sample_x(1, rng);
  const std::vector<double> z{0.3, -0.8};
  double expected = -std::log(2 * M_PI) - 0.5 * (z[0] * z[0] + z[1] * z[1]);
  for (std::size_t j = 0; j < 5; ++j) {
    const double m = z[0] * lg.beta.at(0, j) + z[1] * lg.beta.at(1, j) + lg.bias[j];
    const double r = x[j] - m;
    expected += -0.5 * std::log(2 * M_PI * lg.noise_var[j]) - 0.5 * r * r / lg.noise_var[j];
  }
  EXPECT_NEAR(lg.log_joint(x.values(), z), expected, 1e-12);

  const LatentModel model = lg.as_latent_model();
  const auto params = lg.latent_model_params();
  EXPECT_NEAR(model.log_joint(params, Tensor::matrix({{z[0], z[1]}}), x.reshaped({1, 5}))[0],
              expected, 1e-12);
}

TEST_F(LinearGaussianOracle, BayesRuleHoldsExactly) {
  Rng rng(12);
  const Tensor xs = lg.sample_x(5, rng);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto x = xs.row(i);
    const std::vector<double> z{rng.normal(), rng.normal()};
    EXPECT_NEAR(lg.log_joint(x, z), lg.log_posterior(x, z) + lg.log_marginal(x), 1e-10);
  }
}

TEST_F(LinearGaussianOracle, PosteriorMeanMaximisesLogJointAlongLines) {
  Rng rng(13);
  const Tensor x = lg.sample_x(1, rng);
  const Tensor mode = lg.posterior_mean(x.values());
  const double best = lg.log_joint(x.values(), mode.values());
  for (int line = 0; line < 5; ++line) {
    const double dx = rng.normal(), dy = rng.normal();
    for (double t = -1.0; t <= 1.0; t += 0.05) {
      if (std::abs(t) < 1e-9) continue;
      const std::vector<double> z{mode[0] + t * dx, mode[1] + t * dy};
      EXPECT_LT(lg.log_joint(x.values(), z), best);
    }
  }
}

TEST_F(LinearGaussianOracle, GradZLogJointMatchesFiniteDifferences) {
  Rng rng(14);
  const LatentModel model = lg.as_latent_model();
  const auto params = lg.latent_model_params();
  const Tensor x = lg.sample_x(3, rng);
  const Tensor z = rng.normal({3, 2});
  const Tensor g = model.grad_z_log_joint(params, z, x);
  const GraphBuilder build = [&](Tape& tape, std::span<const Var> v) {
    return sum(model.log_joint(bind_params(tape, params, false), v[0], tape.constant(x)));
  };
  EXPECT_LT(check_gradients(build, {z}), 1e-5);
  // Closed form: -z + (x - z beta - b) diag(1/s2) beta^T.
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t k = 0; k < 2; ++k) {
      double acc = -z.at(b, k);
      for (std::size_t j = 0; j < 5; ++j) {
        const double m = z.at(b, 0) * lg.beta.at(0, j) + z.at(b, 1) * lg.beta.at(1, j) + lg.bias[j];
        acc += (x.at(b, j) - m) / lg.noise_var[j] * lg.beta.at(k, j);
      }
      EXPECT_NEAR(g.at(b, k), acc, 1e-10);
    }
}

TEST_F(LinearGaussianOracle, ExactEncoderReproducesPosterior) {
  Rng rng(15);
  const Tensor x = lg.sample_x(4, rng);
  const GaussianDiag q = lg.exact_encoder().encode(lg.exact_encoder_params(), x);
  const Tensor cov = lg.posterior_cov();
  for (std::size_t b = 0; b < 4; ++b) {
    const Tensor mean = lg.posterior_mean(x.row(b));
    EXPECT_NEAR(q.mean.at(b, 0), mean[0], 1e-10);
    EXPECT_NEAR(q.mean.at(b, 1), mean[1], 1e-10);
    EXPECT_NEAR(std::exp(q.log_var.at(b, 0)), cov.at(0, 0), 1e-10);
    EXPECT_NEAR(std::exp(q.log_var.at(b, 1)), cov.at(1, 1), 1e-10);
  }
  EXPECT_NEAR(cov.at(0, 1), 0.0, 1e-12);
}

TEST_F(LinearGaussianOracle, LatentParamsRoundTrip) {
  const LinearGaussian back = LinearGaussian::from_latent_params(lg.latent_model_params());
  EXPECT_LT(max_abs_diff(back.beta, lg.beta), 1e-15);
  EXPECT_LT(max_abs_diff(back.noise_var, lg.noise_var), 1e-14);
}

TEST(Models, BernoulliAndPoissonLikelihoodsUseLogits) {
  Rng rng(16);
  for (Likelihood lik : {Likelihood::Bernoulli, Likelihood::Poisson}) {
    const LatentModel model = LatentModel::make(DecoderKind::Mlp, {2, 3}, lik);
    auto params = model.init(rng);
    const Tensor z = rng.normal({2, 2});
    const Tensor x = Tensor::matrix({{0, 1, 1}, {1, 0, 1}});
    const Tensor lj = model.log_joint(params, z, x);
    const Tensor eta = efpca_decode(params[0], z) + stack_rows({params[1].values(), params[1].values()});
    const ExpFamSpec spec = lik == Likelihood::Bernoulli ? ExpFamSpec::bernoulli() : ExpFamSpec::poisson();
    for (std::size_t b = 0; b < 2; ++b) {
      double expected = -std::log(2 * M_PI) - 0.5 * (z.at(b, 0) * z.at(b, 0) + z.at(b, 1) * z.at(b, 1));
      for (std::size_t j = 0; j < 3; ++j) {
        const std::vector<double> e{eta.at(b, j)};
        const std::vector<double> xv{x.at(b, j)};
        expected += log_density(spec, e, xv);
      }
      EXPECT_NEAR(lj[b], expected, 1e-12);
    }
  }
}

}  // namespace
}  // namespace dpgm

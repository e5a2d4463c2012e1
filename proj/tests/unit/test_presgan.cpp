// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dpgm/experiments.hpp"
#include "dpgm/gradcheck.hpp"
#include "dpgm/linalg.hpp"
#include "dpgm/presgan.hpp"
#include "dpgm/vi.hpp"
#include "test_util.hpp"

namespace dpgm {
namespace {

Generator linear_generator(std::size_t d_z, std::size_t d_x, double sigma, Rng& rng,
                           double sigma_high = 0.3) {
  Generator g = Generator::make(MlpSpec{{d_z, d_x}}, std::log(sigma), 1e-2,
                                std::max(sigma, sigma_high), rng);
  g.params[0] = rng.normal({d_z, d_x});
  g.params[1] = rng.normal({d_x});
  return g;
}

// Analytic grad_x log p(x) for a linear generator: -(W^T W + S)^-1 (x - b).
Tensor analytic_score(const Generator& g, const Tensor& x) {
  Tensor cov = matmul(transpose(g.params[0]), g.params[0]);
  const Tensor s = g.sigma();
  for (std::size_t j = 0; j < s.size(); ++j) cov.at(j, j) += s[j] * s[j];
  Tensor centered = x;
  for (std::size_t j = 0; j < s.size(); ++j) centered[j] -= g.params[1][j];
  return -1.0 * solve_spd(cov, centered.reshaped({s.size()}));
}

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double norm(const Tensor& a) {
  double s = 0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

TEST(Generate, ZeroNoiseGivesMean) {
  Rng rng(71);
  const Generator g = linear_generator(3, 2, 0.2, rng);
  const Tensor z = rng.normal({5, 3});
  EXPECT_EQ(generate(g, z, Tensor::zeros({5, 2})).values(), g.mean(z).values());
}

TEST(Generate, LowerBoundNoiseStaysNearMean) {
  Rng rng(72);
  Generator g = linear_generator(3, 2, 1e-3, rng);
  EXPECT_NEAR(g.sigma()[0], 1e-2, 1e-15);  // clamped up to sigma_low
  const Tensor z = rng.normal({2000, 3});
  const Tensor diff = generate(g, z, rng.normal({2000, 2})) - g.mean(z);
  for (double d : diff.values()) EXPECT_LT(std::abs(d), 6 * 1e-2);
}

TEST(Generate, DerivativeInSigmaIsEpsilon) {
  Rng rng(73);
  const Generator g = linear_generator(2, 3, 0.2, rng);
  const Tensor z = rng.normal({4, 2});
  const Tensor eps = rng.normal({4, 3});
  Tape tape;
  const Var ls = tape.leaf(g.log_sigma);
  tape.backward(sum(generate(g.spec, bind_params(tape, g.params, false), ls, tape.constant(z), eps)));
  // d/d log sigma = sigma * d/d sigma, and d x / d sigma = eps.
  for (std::size_t j = 0; j < 3; ++j) {
    double col = 0.0;
    for (std::size_t b = 0; b < 4; ++b) col += eps.at(b, j);
    EXPECT_NEAR(tape.grad(ls)[j] / g.sigma()[j], col, 1e-12);
  }
}

TEST(NoiseReal, ZeroNoiseAndPerDimensionSigma) {
  const Tensor x = Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}});
  const Tensor s = Tensor::vector({0.1, 0.2});
  EXPECT_EQ(noise_real(x, s, Tensor::zeros({2, 2})).values(), x.values());
  const Tensor y = noise_real(x, s, Tensor(Shape{2, 2}, 1.0));
  EXPECT_NEAR(y.at(1, 0), 3.1, 1e-15);
  EXPECT_NEAR(y.at(1, 1), 4.2, 1e-15);
}

TEST(NoiseReal, NoisedRealMatchesFakeWhenDistributionsAgree) {
  Rng rng(74);
  Generator g = Generator::make(MlpSpec{{2, 8, 2}}, std::log(0.2), 1e-2, 0.3, rng);
  const std::size_t n = 50000;
  const Tensor real = g.mean(rng.normal({n, 2}));
  const Tensor noised = noise_real(real, g.sigma(), rng.normal({n, 2}));
  const Tensor fake = generate(g, rng.normal({n, 2}), rng.normal({n, 2}));
  for (std::size_t d = 0; d < 2; ++d) {
    std::vector<double> a, b, a2, b2;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(noised.at(i, d));
      b.push_back(fake.at(i, d));
    }
    const auto ma = test::moments(a), mb = test::moments(b);
    EXPECT_NEAR(ma.mean, mb.mean, 4 * std::hypot(ma.se, mb.se));
    for (std::size_t i = 0; i < n; ++i) {
      a2.push_back(std::pow(a[i] - ma.mean, 2));
      b2.push_back(std::pow(b[i] - mb.mean, 2));
    }
    const auto va = test::moments(a2), vb = test::moments(b2);
    EXPECT_NEAR(va.mean, vb.mean, 4 * std::hypot(va.se, vb.se));
  }
}

Discriminator one_d_discriminator(double weight, double bias) {
  Discriminator d;
  d.spec = MlpSpec{{1, 1}};
  d.params = {Tensor::matrix({{weight}}), Tensor::vector({bias})};
  return d;
}

TEST(GanLoss, HalfDiscriminatorAndPerfectDiscriminator) {
  const Tensor real = Tensor::matrix({{1.0}, {2.0}});
  const Tensor fake = Tensor::matrix({{-1.0}, {-3.0}});
  EXPECT_NEAR(gan_loss(one_d_discriminator(0.0, 0.0), real, fake).value, 2 * std::log(0.5), 1e-15);
  const double perfect = gan_loss(one_d_discriminator(100.0, 0.0), real, fake).value;
  EXPECT_LE(perfect, 0.0);
  EXPECT_GT(perfect, -1e-30);
}

TEST(GanLoss, GradientMatchesFiniteDifferences) {
  Rng rng(75);
  const MlpSpec spec{{2, 6, 1}};
  const Discriminator d = Discriminator::make(spec, rng);
  const Tensor real = rng.normal({5, 2});
  const Tensor fake = rng.normal({5, 2});
  const GanLoss l = gan_loss(d, real, fake);
  const GraphBuilder build = [spec, real, fake](Tape& tape, std::span<const Var> v) {
    return gan_loss(spec, v, tape.constant(real), tape.constant(fake));
  };
  EXPECT_LT(check_gradients(build, d.params), 1e-5);
  Tape tape;
  const auto vars = bind_params(tape, d.params);
  tape.backward(gan_loss(spec, vars, tape.constant(real), tape.constant(fake)));
  for (std::size_t i = 0; i < vars.size(); ++i) EXPECT_LT(max_abs_diff(l.grad[i], tape.grad(vars[i])), 1e-14);
  const Tensor probs = d.prob(real);
  for (double p : probs.values()) EXPECT_TRUE(p > 0.0 && p < 1.0);
}

TEST(OptimalDiscriminator, PointwiseRatio) {
  EXPECT_DOUBLE_EQ(optimal_discriminator(0.3, 0.3), 0.5);
  EXPECT_NEAR(optimal_discriminator(0.4, 0.2), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(optimal_discriminator(0.0, 0.0), DomainError);
}

TEST(OptimalDiscriminator, PlugInLossIsShiftedJensenShannon) {
  const auto t = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI); };
  const auto f = [](double x) {
    return std::exp(-0.5 * std::pow((x - 1.0) / 1.5, 2)) / (1.5 * std::sqrt(2 * M_PI));
  };
  const double h = 1e-3;
  double loss = 0.0, js = 0.0;
  for (double x = -15.0; x <= 15.0; x += h) {
    const double tx = t(x), fx = f(x), m = 0.5 * (tx + fx);
    const double d = optimal_discriminator(tx, fx);
    loss += h * (tx * std::log(d) + fx * std::log(1.0 - d));
    js += h * 0.5 * (tx * std::log(tx / m) + fx * std::log(fx / m));
  }
  EXPECT_NEAR(loss, 2 * js - std::log(4.0), 1e-6);
  EXPECT_GT(js, 0.0);
}

TEST(EntropyScore, LinearGeneratorMatchesAnalyticScore) {
  Rng rng(76);
  const Generator g = linear_generator(2, 3, 0.5, rng, 1.0);
  const Tensor z = rng.normal({1, 2});
  const Tensor x = generate(g, z, rng.normal({1, 3}));
  HmcConfig cfg;
  cfg.burn_in = 50;
  cfg.num_samples = 4000;
  cfg.step_size = 0.1;
  cfg.leapfrog = 5;
  const EntropyScore es = entropy_score(g, x, z, cfg, rng);
  const Tensor truth = analytic_score(g, x);
  const Tensor est = es.score.reshaped({3});
  EXPECT_GT(cosine(est, truth), 0.99);
  EXPECT_NEAR(norm(est) / norm(truth), 1.0, 0.1);
  EXPECT_FALSE(es.hmc.degenerate);
}

TEST(EntropyScore, WideNoiseScorePointsBackToBias) {
  Rng rng(77);
  const Generator g = linear_generator(2, 3, 10.0, rng, 10.0);
  const Tensor z = rng.normal({1, 2});
  const Tensor x = generate(g, z, rng.normal({1, 3}));
  HmcConfig cfg;
  cfg.burn_in = 50;
  cfg.num_samples = 2000;
  cfg.step_size = 0.5;
  const Tensor est = entropy_score(g, x, z, cfg, rng).score.reshaped({3});
  Tensor dir(Shape{3});
  for (std::size_t j = 0; j < 3; ++j) dir[j] = -(x[j] - g.params[1][j]);
  EXPECT_GT(cosine(est, dir), 0.99);
}

TEST(EntropyScore, FrozenChainAtGeneratingLatentGivesZeroScore) {
  Rng rng(78);
  const Generator g = linear_generator(2, 3, 0.1, rng);
  const Tensor z = rng.normal({1, 2});
  HmcConfig cfg;
  cfg.burn_in = 0;
  cfg.num_samples = 5;
  cfg.step_size = 1e-12;
  cfg.adapt_gain = 0.0;
  const Tensor est = entropy_score(g, g.mean(z), z, cfg, rng).score;
  for (double v : est.values()) EXPECT_NEAR(v, 0.0, 1e-8);
}

class GeneratorGradientFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(79);
    gen = Generator::make(MlpSpec{{2, 5, 1}}, std::log(0.2), 1e-2, 0.3, rng);
    disc = Discriminator::make(MlpSpec{{1, 5, 1}}, rng);
    z = rng.normal({6, 2});
    eps = rng.normal({6, 1});
  }
  Generator gen;
  Discriminator disc;
  Tensor z, eps;
};

TEST_F(GeneratorGradientFixture, NoEntropyTermIsPlainGanGradient) {
  HmcConfig hmc;
  Rng rng(1);
  const GeneratorGradients g = generator_gradients(gen, disc, z, eps, hmc, 0.0, 0.0, rng);
  Tape tape;
  const auto gv = bind_params(tape, gen.params);
  const Var ls = tape.leaf(gen.log_sigma);
  const Var x = generate(gen.spec, gv, ls, tape.constant(z), eps);
  const Var logits = mlp_forward(disc.spec, bind_params(tape, disc.params, false), x);
  tape.backward(-mean(log_sigmoid(logits)));
  for (std::size_t i = 0; i < gv.size(); ++i) EXPECT_LT(max_abs_diff(g.eta[i], tape.grad(gv[i])), 1e-12);
  EXPECT_LT(max_abs_diff(g.log_sigma, tape.grad(ls)), 1e-12);
  EXPECT_EQ(g.hmc.transitions, 0u);
}

TEST_F(GeneratorGradientFixture, EntropyPartOfSigmaGradientMatchesHandAlgebra) {
  // With the HMC chain frozen at z, the entropy term of d loss / d sigma is
  // -(lambda / B) sum_b eps_b^2 / sigma.
  HmcConfig frozen;
  frozen.burn_in = 0;
  frozen.num_samples = 2;
  frozen.step_size = 1e-14;
  frozen.adapt_gain = 0.0;
  const double lambda = 0.7;
  Rng r1(2), r2(2);
  HmcConfig h0 = frozen;
  const GeneratorGradients with = generator_gradients(gen, disc, z, eps, frozen, lambda, 0.0, r1);
  const GeneratorGradients without = generator_gradients(gen, disc, z, eps, h0, 0.0, 0.0, r2);
  const double sigma = gen.sigma()[0];
  double expected = 0.0;
  for (std::size_t b = 0; b < 6; ++b) expected -= lambda / 6.0 * eps[b] * eps[b] / sigma;
  EXPECT_NEAR(with.sigma[0] - without.sigma[0], expected, 1e-6 * std::abs(expected));
}

TEST_F(GeneratorGradientFixture, NoiseEntropyWeightAddsTwoOverSigma) {
  HmcConfig hmc;
  Rng r1(3), r2(3);
  const auto a = generator_gradients(gen, disc, z, eps, hmc, 0.0, 0.5, r1);
  const auto b = generator_gradients(gen, disc, z, eps, hmc, 0.0, 0.0, r2);
  // d/dsigma of lambda_tilde * log sigma^2 = 2 lambda_tilde / sigma.
  EXPECT_NEAR(a.sigma[0] - b.sigma[0], 2 * 0.5 / gen.sigma()[0], 1e-12);
}

TEST_F(GeneratorGradientFixture, AdversarialPartPassesFiniteDifferences) {
  const MlpSpec gs = gen.spec, ds = disc.spec;
  const auto dparams = disc.params;
  const Tensor zz = z, ee = eps;
  std::vector<Tensor> inputs = gen.params;
  inputs.push_back(gen.log_sigma);
  const GraphBuilder build = [=](Tape& tape, std::span<const Var> v) {
    const Var x = generate(gs, v.first(v.size() - 1), v.back(), tape.constant(zz), ee);
    return -mean(log_sigmoid(mlp_forward(ds, bind_params(tape, dparams, false), x)));
  };
  EXPECT_LT(check_gradients(build, inputs), 1e-4);
}

TEST(MutualInformation, IdentityHoldsOnRandomLinearGenerators) {
  Rng rng(80);
  for (int i = 0; i < 20; ++i) {
    const std::size_t d_z = 1 + rng.below(4), d_x = 1 + rng.below(5);
    Generator g = linear_generator(d_z, d_x, 1.0, rng, 10.0);
    for (double& ls : g.log_sigma.values()) ls = std::log(0.05 + 2 * rng.uniform());
    g.clamp_sigma();
    const MutualInformationCheck c = mutual_information_identity_check(g, 0, rng);
    EXPECT_NEAR(c.lhs, c.rhs, 1e-6);
    EXPECT_GE(c.lhs, 0.0);
  }
}

TEST(MutualInformation, VanishesWithoutCouplingAndWithWideNoise) {
  Rng rng(81);
  Generator g = linear_generator(2, 3, 1.0, rng, 1e6);
  g.params[0] = Tensor::zeros({2, 3});
  const auto zero = mutual_information_identity_check(g, 0, rng);
  EXPECT_EQ(zero.lhs, 0.0);
  EXPECT_NEAR(zero.rhs, 0.0, 1e-12);
  g.params[0] = rng.normal({2, 3});
  g.log_sigma = Tensor(Shape{3}, std::log(1e4));
  const auto wide = mutual_information_identity_check(g, 0, rng);
  EXPECT_LT(wide.lhs, 1e-6);
  EXPECT_NEAR(wide.lhs, wide.rhs, 1e-6);
}

TEST(MutualInformation, MonteCarloEntropyMatchesClosedForm) {
  Rng rng(82);
  const Generator g = linear_generator(2, 3, 0.3, rng);
  const auto c = mutual_information_identity_check(g, 50000, rng);
  EXPECT_NEAR(c.mc_entropy, c.entropy, 0.03);
  Generator deep = Generator::make(MlpSpec{{2, 4, 3}}, 0.0, 1e-2, 0.3, rng);
  EXPECT_THROW(mutual_information_identity_check(deep, 0, rng), DomainError);
}

TEST(Loglik, TruncatedLikelihoodDividesByBoxProbability) {
  Rng rng(83);
  const Generator g = linear_generator(1, 1, 0.3, rng);
  const Tensor z = Tensor::matrix({{0.2}});
  const Tensor x = Tensor::matrix({{0.1}});
  const double mu = g.mean(z)[0], s = g.sigma()[0];
  const double plain = -0.5 * std::log(2 * M_PI * s * s) - 0.5 * std::pow((0.1 - mu) / s, 2);
  const double box = 0.5 * (std::erf((1 - mu) / (s * std::sqrt(2.0))) -
                            std::erf((-1 - mu) / (s * std::sqrt(2.0))));
  EXPECT_NEAR(generator_log_likelihood(g, z, x, false)[0], plain, 1e-12);
  EXPECT_NEAR(generator_log_likelihood(g, z, x, true)[0], plain - std::log(box), 1e-12);
}

class LoglikOracle : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(84);
    // Orthogonal rows keep the exact posterior diagonal.
    const std::vector<double> norms{1.5, 0.8};
    LinearGaussian lg = LinearGaussian::orthogonal(2, 4, norms, 0.09, rng);
    lg.bias = rng.normal({4});
    gen = linear_generator(2, 4, 0.3, rng);
    gen.params = {lg.beta, lg.bias};
    x = lg.sample_x(5, rng);
    for (std::size_t b = 0; b < 5; ++b) truth.push_back(lg.log_marginal(x.row(b)));
    encoder = lg.exact_encoder();
    enc_params = lg.exact_encoder_params();
    // Perturb the encoder so the proposal is not already exact.
    enc_params[0] = 0.9 * enc_params[0];
    for (double& v : enc_params.back().values()) v -= 0.5;
  }
  Generator gen;
  Tensor x;
  std::vector<double> truth;
  Encoder encoder;
  std::vector<Tensor> enc_params;
};

TEST_F(LoglikOracle, EstimateWithinHalfPercent) {
  Rng rng(85);
  const Tensor est = is_loglik(gen, x, encoder, enc_params, LoglikOptions{}, rng);
  for (std::size_t b = 0; b < 5; ++b)
    EXPECT_LT(std::abs(est[b] - truth[b]), 0.005 * std::abs(truth[b])) << b;
}

TEST_F(LoglikOracle, VarianceShrinksWithSamplesAndGammaIsSane) {
  const Tensor x0 = x.reshaped({5, 4});
  const auto spread = [&](std::size_t s, double gamma) {
    LoglikOptions o;
    o.samples = s;
    o.gamma = gamma;
    std::vector<double> v;
    Rng rng(86);
    for (int r = 0; r < 30; ++r) v.push_back(is_loglik(gen, x0, encoder, enc_params, o, rng)[0]);
    return test::moments(v);
  };
  const auto s10 = spread(10, 1.2), s100 = spread(100, 1.2), s2000 = spread(2000, 1.2);
  EXPECT_GT(s10.var, s100.var);
  EXPECT_GT(s100.var, s2000.var);
  const auto g1 = spread(2000, 1.0);
  EXPECT_NEAR(g1.mean, truth[0], 0.005 * std::abs(truth[0]));
  EXPECT_NEAR(s2000.mean, truth[0], 0.005 * std::abs(truth[0]));
  EXPECT_LE(s2000.var, 2.0 * g1.var + 1e-12);
}

TEST_F(LoglikOracle, MapStepFindsPosteriorMode) {
  const LinearGaussian lg = LinearGaussian::from_latent_params(gen.latent_params());
  LoglikOptions o;
  o.map_steps = 2000;
  o.map_lr = 1e-2;
  o.map_tol = 1e-8;
  const Tensor zmap = map_latent(gen, x, Tensor::zeros({5, 2}), o);
  for (std::size_t b = 0; b < 5; ++b) {
    const Tensor m = lg.posterior_mean(x.row(b));
    EXPECT_NEAR(zmap.at(b, 0), m[0], 1e-3);
    EXPECT_NEAR(zmap.at(b, 1), m[1], 1e-3);
  }
}

TEST(Presgan, ShortRunKeepsSigmaInBoundsAndLogsEpochs) {
  Rng rng(87);
  const Tensor data = ring_sample(RingTarget{}, 300, rng);
  PresganConfig cfg;
  cfg.epochs = 3;
  cfg.hidden = 16;
  cfg.latent = 3;
  cfg.lr_sigma = 0.5;  // large enough that the bounds are exercised
  std::size_t calls = 0;
  const PresganResult res =
      train_presgan(data, cfg, rng, [&](const PresganEpoch& e, const Generator& g) {
        ++calls;
        EXPECT_EQ(e.epoch, calls);
        const Tensor sigma = g.sigma();
        for (double s : sigma.values()) {
          EXPECT_GE(s, cfg.sigma_low - 1e-15);
          EXPECT_LE(s, cfg.sigma_high + 1e-15);
        }
      });
  EXPECT_EQ(calls, 3u);
  ASSERT_EQ(res.log.size(), 3u);
  for (const auto& row : res.log) {
    EXPECT_TRUE(std::isfinite(row.disc_loss));
    EXPECT_GT(row.hmc_accept, 0.0);
  }
  const std::string csv = presgan_log_csv(res.log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,disc_loss,gen_loss,sigma_mean,hmc_accept,hmc_step");
}

TEST(Presgan, SameSeedSameTrajectory) {
  Rng r0(88);
  const Tensor data = ring_sample(RingTarget{}, 200, r0);
  PresganConfig cfg;
  cfg.epochs = 2;
  cfg.hidden = 8;
  cfg.latent = 2;
  Rng a(5), b(5);
  const auto ra = train_presgan(data, cfg, a);
  const auto rb = train_presgan(data, cfg, b);
  EXPECT_EQ(presgan_log_csv(ra.log), presgan_log_csv(rb.log));
  EXPECT_EQ(ra.gen.params[0].values(), rb.gen.params[0].values());
}

TEST(Presgan, ConfigValidation) {
  PresganConfig cfg;
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = PresganConfig{};
  cfg.sigma_low = 0.5;
  EXPECT_THROW(cfg.validate(), DomainError);
  EXPECT_EQ(PresganConfig{}.generator_spec(2).widths, (std::vector<std::size_t>{10, 128, 128, 2}));
  EXPECT_EQ(PresganConfig{}.discriminator_spec(2).widths, (std::vector<std::size_t>{2, 128, 128, 1}));
}

}  // namespace
}  // namespace dpgm

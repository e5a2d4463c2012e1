// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/presgan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dpgm/linalg.hpp"

namespace dpgm {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Tensor sigma_of(const Tensor& log_sigma) {
  Tensor s = log_sigma;
  for (auto& v : s.values()) v = std::exp(v);
  return s;
}

// log N(x; mu(z), sigma^2) + log N(z; 0, I) per row, on bound parameters.
Var latent_log_joint(const MlpSpec& spec, std::span<const Var> params, Var log_sigma, Var z,
                     Var x) {
  const Var mu = mlp_forward(spec, params, z);
  const Var scaled = mul_row(x - mu, exp(-log_sigma));
  const Var per_dim = add_bias(-0.5 * square(scaled), -log_sigma);
  const double d_x = static_cast<double>(x.shape().back());
  return standard_normal_log_density(z) + add_scalar(sum_last(per_dim), -0.5 * d_x * kLog2Pi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

Generator Generator::make(MlpSpec spec, double sigma_init_log, double sigma_low,
                          double sigma_high, Rng& rng) {
  if (!(sigma_low > 0.0 && sigma_low <= sigma_high)) {
    throw DomainError("generator: need 0 < sigma_low <= sigma_high");
  }
  Generator g;
  g.params = init_mlp(spec, rng);
  g.spec = std::move(spec);
  g.log_sigma = Tensor({g.d_x()}, sigma_init_log);
  g.sigma_low = sigma_low;
  g.sigma_high = sigma_high;
  g.clamp_sigma();
  return g;
}

Tensor Generator::mean(const Tensor& z) const {
  Tape tape;
  const auto vars = bind_params(tape, params, false);
  return mlp_forward(spec, vars, tape.constant(z)).value();
}

Tensor Generator::sigma() const { return sigma_of(log_sigma); }

void Generator::clamp_sigma() {
  const double lo = std::log(sigma_low);
  const double hi = std::log(sigma_high);
  for (auto& v : log_sigma.values()) v = std::clamp(v, lo, hi);
}

LatentModel Generator::as_latent_model() const {
  return LatentModel::make(DecoderKind::Mlp, spec.widths, Likelihood::Gaussian, spec.hidden);
}

std::vector<Tensor> Generator::latent_params() const {
  auto p = params;
  p.push_back(log_sigma);
  return p;
}

Discriminator Discriminator::make(MlpSpec spec, Rng& rng) {
  if (spec.widths.back() != 1 || spec.output != Activation::Identity) {
    throw ShapeError("discriminator: last layer must be a single identity logit");
  }
  Discriminator d;
  d.params = init_mlp(spec, rng);
  d.spec = std::move(spec);
  return d;
}

Tensor Discriminator::logits(const Tensor& x) const {
  Tape tape;
  const auto vars = bind_params(tape, params, false);
  return mlp_forward(spec, vars, tape.constant(x)).value();
}

Tensor Discriminator::prob(const Tensor& x) const {
  Tensor p = logits(x);
  for (auto& v : p.values()) v = sigmoid(v);
  return p;
}

Tensor generate(const Generator& gen, const Tensor& z, const Tensor& eps) {
  Tensor x = gen.mean(z);
  if (eps.shape() != x.shape()) {
    throw ShapeError("generate: eps " + shape_string(eps.shape()) + " vs output " +
                     shape_string(x.shape()));
  }
  const Tensor s = gen.sigma();
  const std::size_t d = gen.d_x();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += s[i % d] * eps[i];
  return x;
}

Var generate(const MlpSpec& spec, std::span<const Var> params, Var log_sigma, Var z,
             const Tensor& eps) {
  const Var mu = mlp_forward(spec, params, z);
  return mu + mul_row(z.tape()->constant(eps), exp(log_sigma));
}

Tensor noise_real(const Tensor& x, const Tensor& sigma, const Tensor& eps) {
  if (eps.shape() != x.shape() || sigma.rank() != 1 || sigma.size() != x.cols()) {
    throw ShapeError("noise_real: x " + shape_string(x.shape()) + ", sigma " +
                     shape_string(sigma.shape()) + ", eps " + shape_string(eps.shape()));
  }
  Tensor out = x;
  const std::size_t d = sigma.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma[i % d] * eps[i];
  return out;
}

Var gan_loss(const MlpSpec& spec, std::span<const Var> params, Var real, Var fake) {
  const Var real_term = mean(log_sigmoid(mlp_forward(spec, params, real)));
  const Var fake_term = mean(log_sigmoid(-mlp_forward(spec, params, fake)));
  return real_term + fake_term;
}

GanLoss gan_loss(const Discriminator& disc, const Tensor& real, const Tensor& fake) {
  Tape tape;
  const auto vars = bind_params(tape, disc.params);
  const Var loss = gan_loss(disc.spec, vars, tape.constant(real), tape.constant(fake));
  tape.backward(loss);
  return GanLoss{loss.value().item(), tape.grads(vars)};
}

double optimal_discriminator(double t_density, double f_density) {
  if (t_density < 0.0 || f_density < 0.0 || !(t_density + f_density > 0.0)) {
    throw DomainError("optimal_discriminator: densities must be >= 0 with a positive sum");
  }
  return t_density / (t_density + f_density);
}

EntropyScore entropy_score(const Generator& gen, const Tensor& x, const Tensor& z_init,
                           const HmcConfig& hmc, Rng& rng) {
  if (x.rank() != 2 || x.cols() != gen.d_x() || z_init.rank() != 2 ||
      z_init.rows() != x.rows() || z_init.cols() != gen.d_z()) {
    throw ShapeError("entropy_score: x " + shape_string(x.shape()) + " with z " +
                     shape_string(z_init.shape()));
  }
  const BatchLogDensity target = [&](const Tensor& z, Tensor& grad) {
    Tape tape;
    const auto vars = bind_params(tape, gen.params, false);
    const Var zv = tape.leaf(z);
    const Var lp = latent_log_joint(gen.spec, vars, tape.constant(gen.log_sigma), zv,
                                    tape.constant(x));
    tape.backward(sum(lp));
    grad = tape.grad(zv);
    return lp.value();
  };

  EntropyScore out;
  out.hmc = hmc_sample(target, z_init, hmc, rng);
  out.mean_fit = Tensor::zeros_like(x);
  if (out.hmc.samples.empty()) {
    // No retained draws: fall back to the stationary initial point.
    out.mean_fit = gen.mean(z_init);
  } else {
    for (const auto& zm : out.hmc.samples) out.mean_fit += gen.mean(zm);
    out.mean_fit *= 1.0 / static_cast<double>(out.hmc.samples.size());
  }
  const Tensor s = gen.sigma();
  const std::size_t d = gen.d_x();
  out.score = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sd = s[i % d];
    out.score[i] = -(x[i] - out.mean_fit[i]) / (sd * sd);
  }
  return out;
}

GeneratorGradients generator_gradients(const Generator& gen, const Discriminator& disc,
                                       const Tensor& z, const Tensor& eps, HmcConfig& hmc,
                                       double lambda, double lambda_tilde, Rng& rng,
                                       AdversarialForm form) {
  GeneratorGradients out;
  const std::size_t batch = z.rows();

  Tensor coeff;  // -score, held fixed: (x - mean_m mu(z^(m))) / sigma^2
  if (lambda != 0.0) {
    const Tensor x = generate(gen, z, eps);
    auto es = entropy_score(gen, x, z, hmc, rng);
    hmc.step_size = es.hmc.step_size;
    coeff = es.score;
    coeff *= -1.0;
    out.hmc = std::move(es.hmc);
  }

  Tape tape;
  const auto gvars = bind_params(tape, gen.params);
  const Var log_sigma = tape.leaf(gen.log_sigma);
  const auto dvars = bind_params(tape, disc.params, false);
  const Var x = generate(gen.spec, gvars, log_sigma, tape.constant(z), eps);
  const Var logits = mlp_forward(disc.spec, dvars, x);
  const Var adv = form == AdversarialForm::NonSaturating ? -mean(log_sigmoid(logits))
                                                         : mean(log_sigmoid(-logits));
  Var loss = adv;
  if (lambda != 0.0) {
    const Var ent = (1.0 / static_cast<double>(batch)) * sum(tape.constant(coeff) * x);
    out.entropy_surrogate = ent.value().item();
    loss = loss - lambda * ent;
  }
  if (lambda_tilde != 0.0) loss = loss + (2.0 * lambda_tilde) * sum(log_sigma);
  tape.backward(loss);

  out.adversarial = adv.value().item();
  out.loss = loss.value().item();
  out.eta = tape.grads(gvars);
  out.log_sigma = tape.grad(log_sigma);
  out.sigma = out.log_sigma;
  const Tensor s = gen.sigma();
  for (std::size_t i = 0; i < s.size(); ++i) out.sigma[i] /= s[i];
  return out;
}

void PresganConfig::validate() const {
  if (lambda < 0.0 || lambda_tilde < 0.0) throw DomainError("presgan: lambda must be >= 0");
  if (!(sigma_low > 0.0 && sigma_low <= sigma_high)) {
    throw DomainError("presgan: need 0 < sigma_low <= sigma_high");
  }
  if (batch == 0 || epochs == 0 || latent == 0 || hidden == 0) {
    throw DomainError("presgan: batch, epochs, latent and hidden must be positive");
  }
  if (!(lr_disc > 0.0 && lr_gen > 0.0 && lr_sigma >= 0.0)) {
    throw DomainError("presgan: learning rates must be positive");
  }
  hmc.validate();
}

MlpSpec PresganConfig::generator_spec(std::size_t d_x) const {
  MlpSpec s;
  s.widths.push_back(latent);
  for (std::size_t i = 0; i < hidden_layers; ++i) s.widths.push_back(hidden);
  s.widths.push_back(d_x);
  return s;
}

MlpSpec PresganConfig::discriminator_spec(std::size_t d_x) const {
  MlpSpec s;
  s.widths.push_back(d_x);
  for (std::size_t i = 0; i < hidden_layers; ++i) s.widths.push_back(hidden);
  s.widths.push_back(1);
  return s;
}

PresganResult train_presgan(const Tensor& data, const PresganConfig& config, Rng& rng,
                            const PresganEpochCallback& on_epoch) {
  config.validate();
  if (data.rank() != 2 || data.rows() == 0) {
    throw ShapeError("train_presgan: data must be [N, D], got " + shape_string(data.shape()));
  }
  const std::size_t n = data.rows();
  const std::size_t d_x = data.cols();
  const std::size_t batch = config.batch;
  const std::size_t iters = std::max<std::size_t>(1, n / batch);

  Rng init_rng = rng.split();
  PresganResult res{
      Generator::make(config.generator_spec(d_x), config.sigma_init_log, config.sigma_low,
                      config.sigma_high, init_rng),
      Discriminator::make(config.discriminator_spec(d_x), init_rng),
      {}};
  Generator& gen = res.gen;
  Discriminator& disc = res.disc;

  AdamState opt_d({config.lr_disc, config.beta1, config.beta2, 1e-8});
  AdamState opt_g({config.lr_gen, config.beta1, config.beta2, 1e-8});
  // The stored parameter is log sigma = (log sigma^2) / 2, and Adam steps are
  // scale free, so half the step size reproduces Adam on log sigma^2.
  AdamState opt_s({0.5 * config.lr_sigma, config.beta1, config.beta2, 1e-8});
  HmcConfig hmc = config.hmc;

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    PresganEpoch row;
    row.epoch = epoch;
    std::size_t hmc_calls = 0;
    for (std::size_t it = 0; it < iters; ++it) {
      Tensor real({batch, d_x});
      for (std::size_t b = 0; b < batch; ++b) {
        const auto src = data.row(rng.below(n));
        std::copy(src.begin(), src.end(), real.row(b).begin());
      }
      const Tensor sigma = gen.sigma();
      const Tensor real_noised = noise_real(real, sigma, rng.normal({batch, d_x}));
      const Tensor z = rng.normal({batch, gen.d_z()});
      const Tensor eps = rng.normal({batch, d_x});
      const Tensor fake = generate(gen, z, eps);

      GanLoss dl = gan_loss(disc, real_noised, fake);
      for (auto& g : dl.grad) g *= -1.0;  // ascent on the GAN objective
      adam_step(disc.params, dl.grad, opt_d);

      auto gg = generator_gradients(gen, disc, z, eps, hmc, config.lambda,
                                    config.lambda_tilde, rng, config.adversarial);
      if (config.check_finite) {
        bool ok = std::isfinite(gg.loss) && gg.log_sigma.all_finite();
        for (const auto& g : gg.eta) ok = ok && g.all_finite();
        if (!ok) {
          throw NumericalError("train_presgan: non-finite generator gradient at epoch " +
                               std::to_string(epoch) + ", iteration " + std::to_string(it) +
                               " (adversarial " + std::to_string(gg.adversarial) + ")");
        }
      }
      adam_step(gen.params, gg.eta, opt_g);
      if (config.lr_sigma > 0.0) {
        std::vector<Tensor> ls{gen.log_sigma};
        adam_step(ls, std::span<const Tensor>(&gg.log_sigma, 1), opt_s);
        gen.log_sigma = std::move(ls[0]);
      }
      gen.clamp_sigma();

      row.disc_loss += -dl.value;
      row.gen_loss += gg.loss;
      if (config.lambda != 0.0) {
        row.hmc_accept += gg.hmc.acceptance_rate;
        ++hmc_calls;
      }
    }
    row.disc_loss /= static_cast<double>(iters);
    row.gen_loss /= static_cast<double>(iters);
    if (hmc_calls) row.hmc_accept /= static_cast<double>(hmc_calls);
    row.hmc_step = hmc.step_size;
    const Tensor s = gen.sigma();
    for (double v : s.data()) row.sigma_mean += v / static_cast<double>(s.size());
    row.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(row.disc_loss) || !std::isfinite(row.gen_loss)) {
      throw NumericalError("train_presgan: non-finite loss at epoch " + std::to_string(epoch));
    }
    res.log.push_back(row);
    if (on_epoch) on_epoch(row, gen);
  }
  return res;
}

std::string presgan_log_csv(const std::vector<PresganEpoch>& log) {
  std::string out = "epoch,disc_loss,gen_loss,sigma_mean,hmc_accept,hmc_step\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.disc_loss,
                  r.gen_loss, r.sigma_mean, r.hmc_accept, r.hmc_step);
    out += buf;
  }
  return out;
}

MutualInformationCheck mutual_information_identity_check(const Generator& gen,
                                                         std::size_t n_samples, Rng& rng) {
  if (gen.spec.layers() != 1 || gen.spec.output != Activation::Identity) {
    throw DomainError("mutual_information_identity_check: generator must be linear");
  }
  const Tensor& w = gen.params[0];  // [d_z, d_x]
  const std::size_t d_z = gen.d_z();
  const std::size_t d_x = gen.d_x();
  const Tensor s = gen.sigma();

  Tensor latent = identity(d_z);
  for (std::size_t i = 0; i < d_z; ++i) {
    for (std::size_t k = 0; k < d_z; ++k) {
      for (std::size_t j = 0; j < d_x; ++j) {
        latent.at(i, k) += w.at(i, j) * w.at(k, j) / (s[j] * s[j]);
      }
    }
  }
  Tensor cov = matmul(transpose(w), w);
  double sum_log_var = 0.0;
  for (std::size_t j = 0; j < d_x; ++j) {
    cov.at(j, j) += s[j] * s[j];
    sum_log_var += std::log(s[j] * s[j]);
  }

  MutualInformationCheck out;
  const double dx = static_cast<double>(d_x);
  out.lhs = 0.5 * log_det_spd(latent);
  out.entropy = 0.5 * log_det_spd(cov) + 0.5 * dx * (1.0 + kLog2Pi);
  out.rhs = out.entropy - 0.5 * sum_log_var - 0.5 * dx * (1.0 + kLog2Pi);
  if (n_samples > 0) {
    const Tensor z = rng.normal({n_samples, d_z});
    const Tensor x = generate(gen, z, rng.normal({n_samples, d_x}));
    const Tensor& bias = gen.params[1];
    double acc = 0.0;
    for (std::size_t r = 0; r < n_samples; ++r) {
      acc -= mvn_log_density(x.row(r), bias.data(), cov);
    }
    out.mc_entropy = acc / static_cast<double>(n_samples);
  }
  return out;
}

Tensor generator_log_likelihood(const Generator& gen, const Tensor& z, const Tensor& x,
                                bool truncate) {
  const Tensor mu = gen.mean(z);
  if (mu.shape() != x.shape()) {
    throw ShapeError("generator_log_likelihood: x " + shape_string(x.shape()) + " vs mean " +
                     shape_string(mu.shape()));
  }
  const Tensor s = gen.sigma();
  const std::size_t d = gen.d_x();
  Tensor out({x.rows()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double lp = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double m = mu.at(r, j);
      const double u = (x.at(r, j) - m) / s[j];
      lp += -0.5 * u * u - std::log(s[j]) - 0.5 * kLog2Pi;
      if (truncate) {
        const double mass = normal_cdf((1.0 - m) / s[j]) - normal_cdf((-1.0 - m) / s[j]);
        lp -= std::log(std::max(mass, 1e-300));
      }
    }
    out[r] = lp;
  }
  return out;
}

Tensor map_latent(const Generator& gen, const Tensor& x, const Tensor& z0,
                  const LoglikOptions& opts) {
  std::vector<Tensor> z{z0};
  AdamState opt({opts.map_lr, 0.9, 0.999, 1e-8});
  for (std::size_t step = 0; step < opts.map_steps; ++step) {
    Tape tape;
    const auto vars = bind_params(tape, gen.params, false);
    const Var zv = tape.leaf(z[0]);
    const Var lp = latent_log_joint(gen.spec, vars, tape.constant(gen.log_sigma), zv,
                                    tape.constant(x));
    tape.backward(sum(lp));
    Tensor g = tape.grad(zv);
    if (!g.all_finite() || !lp.value().all_finite()) {
      throw NumericalError("map_latent: ascent diverged at step " + std::to_string(step));
    }
    double norm = 0.0;
    for (double v : g.data()) norm = std::max(norm, std::abs(v));
    if (norm < opts.map_tol) break;
    g *= -1.0;
    adam_step(z, std::span<const Tensor>(&g, 1), opt);
  }
  return z[0];
}

Tensor is_loglik(const Generator& gen, const Tensor& x, const Encoder& encoder,
                 std::span<const Tensor> encoder_params, const LoglikOptions& opts, Rng& rng) {
  if (opts.samples == 0 || !(opts.gamma > 0.0)) {
    throw DomainError("is_loglik: need samples >= 1 and gamma > 0");
  }
  const GaussianDiag q = encoder.encode(encoder_params, x);
  const Tensor z_map = map_latent(gen, x, q.mean, opts);
  const std::size_t n = x.rows();
  const std::size_t d_z = gen.d_z();
  const std::size_t s_count = opts.samples;

  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    GaussianDiag prop{Tensor({s_count, d_z}), Tensor({s_count, d_z})};
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t k = 0; k < d_z; ++k) {
        prop.mean.at(s, k) = z_map.at(r, k);
        prop.log_var.at(s, k) = q.log_var.at(r, k) + std::log(opts.gamma);
      }
    }
    const Tensor z = prop.sample(rng);
    Tensor xr({s_count, x.cols()});
    for (std::size_t s = 0; s < s_count; ++s) {
      std::copy(x.row(r).begin(), x.row(r).end(), xr.row(s).begin());
    }
    const Tensor log_lik = generator_log_likelihood(gen, z, xr, opts.truncate);
    const Tensor log_q = prop.log_density(z);
    std::vector<double> log_w(s_count);
    for (std::size_t s = 0; s < s_count; ++s) {
      double log_prior = -0.5 * static_cast<double>(d_z) * kLog2Pi;
      for (double v : z.row(s)) log_prior -= 0.5 * v * v;
      log_w[s] = log_lik[s] + log_prior - log_q[s];
    }
    out[r] = log_sum_exp(log_w) - std::log(static_cast<double>(s_count));
  }
  return out;
}

}  // namespace dpgm

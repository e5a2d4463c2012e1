// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dpgm/adam.hpp"
#include "dpgm/hmc.hpp"
#include "dpgm/models.hpp"

namespace dpgm {

/// x = mu_eta(z) + sigma * eps with a per-dimension sigma held in
/// [sigma_low, sigma_high]. sigma is stored as log sigma.
struct Generator {
  MlpSpec spec;               // {d_z, ..., d_x}
  std::vector<Tensor> params;
  Tensor log_sigma;           // [d_x]
  double sigma_low = 1e-2;
  double sigma_high = 0.3;

  static Generator make(MlpSpec spec, double sigma_init_log, double sigma_low,
                        double sigma_high, Rng& rng);

  std::size_t d_z() const { return spec.widths.front(); }
  std::size_t d_x() const { return spec.widths.back(); }
  Tensor mean(const Tensor& z) const;
  Tensor sigma() const;
  /// Clamps sigma elementwise into [sigma_low, sigma_high].
  void clamp_sigma();

  /// The same density as a LatentModel; parameters are params + {log_sigma}.
  LatentModel as_latent_model() const;
  std::vector<Tensor> latent_params() const;
};

/// Sigmoid-headed classifier; spec.output must be identity (logits).
struct Discriminator {
  MlpSpec spec;  // {d_x, ..., 1}
  std::vector<Tensor> params;

  static Discriminator make(MlpSpec spec, Rng& rng);
  Tensor logits(const Tensor& x) const;
  Tensor prob(const Tensor& x) const;
};

Tensor generate(const Generator& gen, const Tensor& z, const Tensor& eps);
/// Differentiable form on bound parameters.
Var generate(const MlpSpec& spec, std::span<const Var> params, Var log_sigma, Var z,
             const Tensor& eps);
Tensor noise_real(const Tensor& x, const Tensor& sigma, const Tensor& eps);

struct GanLoss {
  double value = 0.0;           // mean log D(real) + mean log(1 - D(fake))
  std::vector<Tensor> grad;     // d value / d phi
};

GanLoss gan_loss(const Discriminator& disc, const Tensor& real, const Tensor& fake);
Var gan_loss(const MlpSpec& spec, std::span<const Var> params, Var real, Var fake);

/// t / (t + f); throws DomainError when both densities vanish.
double optimal_discriminator(double t_density, double f_density);

struct EntropyScore {
  Tensor score;      // [B, d_x] estimate of grad_x log p(x)
  Tensor mean_fit;   // [B, d_x] average of mu(z^(m)) over the HMC draws
  HmcResult hmc;
};

/// (1/M) sum_m -(x - mu(z^(m))) / sigma^2 with z^(m) drawn by HMC from
/// p(z | x) started at z_init.
EntropyScore entropy_score(const Generator& gen, const Tensor& x, const Tensor& z_init,
                           const HmcConfig& hmc, Rng& rng);

enum class AdversarialForm { NonSaturating, Literal };

struct GeneratorGradients {
  std::vector<Tensor> eta;  // per generator weight tensor
  Tensor log_sigma;         // d loss / d log sigma
  Tensor sigma;             // d loss / d sigma
  double adversarial = 0.0;
  double entropy_surrogate = 0.0;
  double loss = 0.0;
  HmcResult hmc;
};

/// Gradients of adv(x) - lambda * H + lambda_tilde * sum log sigma^2 for
/// x = mu(z) + sigma * eps. The entropy part is the pathwise term
/// -score(x) * dx/dtheta with the HMC score estimate held fixed. HMC is
/// skipped when lambda is zero. `hmc` carries the step size in and out.
GeneratorGradients generator_gradients(const Generator& gen, const Discriminator& disc,
                                       const Tensor& z, const Tensor& eps, HmcConfig& hmc,
                                       double lambda, double lambda_tilde, Rng& rng,
                                       AdversarialForm form = AdversarialForm::NonSaturating);

struct PresganConfig {
  double lambda = 0.1;
  double lambda_tilde = 0.0;
  double sigma_low = 1e-2;
  double sigma_high = 0.3;
  double sigma_init_log = 0.0;
  HmcConfig hmc;
  double lr_disc = 1e-3;
  double lr_gen = 1e-4;
  double lr_sigma = 1e-4;  // Adam step size on log sigma^2
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::size_t batch = 100;
  std::size_t epochs = 500;
  std::size_t latent = 10;
  std::size_t hidden = 128;
  std::size_t hidden_layers = 2;
  AdversarialForm adversarial = AdversarialForm::NonSaturating;
  bool check_finite = false;

  void validate() const;
  MlpSpec generator_spec(std::size_t d_x) const;
  MlpSpec discriminator_spec(std::size_t d_x) const;
};

struct PresganEpoch {
  std::size_t epoch = 0;
  double disc_loss = 0.0;
  double gen_loss = 0.0;
  double sigma_mean = 0.0;
  double hmc_accept = 0.0;
  double hmc_step = 0.0;
  double wallclock_s = 0.0;
};

struct PresganResult {
  Generator gen;
  Discriminator disc;
  std::vector<PresganEpoch> log;
};

/// Called after every epoch with the current generator.
using PresganEpochCallback = std::function<void(const PresganEpoch&, const Generator&)>;

/// Alternating updates with one discriminator step per generator step on
/// minibatches drawn uniformly with replacement from `data`.
PresganResult train_presgan(const Tensor& data, const PresganConfig& config, Rng& rng,
                            const PresganEpochCallback& on_epoch = {});

/// Epoch log without timings, so files are reproducible for a fixed seed.
std::string presgan_log_csv(const std::vector<PresganEpoch>& log);

struct MutualInformationCheck {
  double lhs = 0.0;         // I(x, z) from the latent side
  double rhs = 0.0;         // H(p(x)) - 1/2 sum log sigma_d^2 - (D/2)(1 + log 2 pi)
  double entropy = 0.0;     // H(p(x)) in closed form
  double mc_entropy = 0.0;  // Monte Carlo estimate of H(p(x)) from n_samples draws
};

/// Linear generators only (a single affine layer).
MutualInformationCheck mutual_information_identity_check(const Generator& gen,
                                                         std::size_t n_samples, Rng& rng);

struct LoglikOptions {
  std::size_t samples = 2000;
  double gamma = 1.2;
  bool truncate = false;  // data lives in [-1, 1]^D
  std::size_t map_steps = 200;
  double map_lr = 1e-2;
  double map_tol = 1e-4;
};

/// log p(x | z) for each row pair, optionally divided by P(x in [-1, 1]^D | z).
Tensor generator_log_likelihood(const Generator& gen, const Tensor& z, const Tensor& x,
                                bool truncate);

/// MAP of log p(x | z) + log p(z) for each row of x by Adam from z0.
Tensor map_latent(const Generator& gen, const Tensor& x, const Tensor& z0,
                  const LoglikOptions& opts);

/// Importance-sampled log p(x*) per row with proposal N(z_MAP, gamma * Sigma_enc(x*)).
Tensor is_loglik(const Generator& gen, const Tensor& x, const Encoder& encoder,
                 std::span<const Tensor> encoder_params, const LoglikOptions& opts, Rng& rng);

}  // namespace dpgm

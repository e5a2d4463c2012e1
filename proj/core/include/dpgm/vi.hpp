// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpgm/adam.hpp"
#include "dpgm/models.hpp"

namespace dpgm {

/// Per-row KL(N(mean, exp(log_var)) || N(0, I)).
Tensor gaussian_kl(const GaussianDiag& q);
Var gaussian_kl(Var mean, Var log_var);

struct ElboEstimate {
  double value = 0.0;           // mean over rows of reconstruction - kl
  std::size_t samples = 0;
  double reconstruction = 0.0;  // mean over rows
  double kl = 0.0;              // mean over rows
  Tensor per_row;
};

/// Scalar graph: mean over rows of (1/S) sum_s log p(x | mu + sigma eps_s) - KL.
/// `eps` holds S noise blocks, each shaped like the encoder mean [B, d_z].
Var elbo_graph(const LatentModel& model, std::span<const Var> model_params,
               const Encoder& encoder, std::span<const Var> encoder_params, Var x,
               std::span<const Tensor> eps);

ElboEstimate elbo_estimate(const LatentModel& model, std::span<const Tensor> model_params,
                           const Encoder& encoder, std::span<const Tensor> encoder_params,
                           const Tensor& x, std::size_t samples, Rng& rng);

/// Gradient with respect to the parameters of a free (non-amortized)
/// diagonal Gaussian q for a single observation x [1, d_x].
struct LocalGradient {
  Tensor d_mean;
  Tensor d_log_var;
};

/// (1/S) sum_s (log p(x, z_s) - log q(z_s)) grad log q(z_s), z_s ~ q.
LocalGradient score_gradient(const LatentModel& model, std::span<const Tensor> model_params,
                             const GaussianDiag& q, const Tensor& x, std::size_t samples,
                             Rng& rng);

/// Tape gradient of (1/S) sum_s log p(x, mu + sigma eps_s) + H(q).
LocalGradient reparam_gradient(const LatentModel& model, std::span<const Tensor> model_params,
                               const GaussianDiag& q, const Tensor& x, std::size_t samples,
                               Rng& rng);

struct ReparamGradient {
  double elbo = 0.0;
  std::vector<Tensor> model;
  std::vector<Tensor> encoder;
};

/// Gradients of the S-sample ELBO (mean over rows of x) for model and encoder.
ReparamGradient reparam_gradient(const LatentModel& model, std::span<const Tensor> model_params,
                                 const Encoder& encoder, std::span<const Tensor> encoder_params,
                                 const Tensor& x, std::size_t samples, Rng& rng);

/// Monte Carlo estimate with its standard error.
struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// KL(q(z) || p(z)) where q(z) is the uniform mixture of the encoder
/// Gaussians over the rows of `data`.
McEstimate kl_q_prior_metric(const Encoder& encoder, std::span<const Tensor> encoder_params,
                             const Tensor& data, std::size_t samples, Rng& rng);
McEstimate kl_q_prior_metric(const GaussianDiag& posteriors, std::size_t samples, Rng& rng);

/// E[log q(z | x)] - E[log q(z)] under the variational joint, same mixture q(z).
McEstimate mutual_information_metric(const Encoder& encoder,
                                     std::span<const Tensor> encoder_params,
                                     const Tensor& data, std::size_t samples, Rng& rng);
McEstimate mutual_information_metric(const GaussianDiag& posteriors, std::size_t samples,
                                     Rng& rng);

/// Number of latent dimensions whose posterior mean varies across data by
/// at least `threshold` (empirical variance).
std::size_t active_units(const Encoder& encoder, std::span<const Tensor> encoder_params,
                         const Tensor& data, double threshold = 0.01);
std::size_t active_units(const Tensor& posterior_means, double threshold = 0.01);

struct CollapseReport {
  double kl_q_prior = 0.0;
  double mutual_information = 0.0;
  std::size_t active_units = 0;
  double threshold = 0.01;
};

CollapseReport collapse_report(const Encoder& encoder, std::span<const Tensor> encoder_params,
                               const Tensor& data, std::size_t samples, double threshold,
                               Rng& rng);

struct VaeConfig {
  std::size_t epochs = 100;
  std::size_t batch = 100;
  std::size_t samples = 1;          // S for the training ELBO
  std::size_t metric_samples = 20;  // S for KL / MI
  std::size_t metric_points = 500;  // rows used for per-epoch metrics, 0 = skip
  double au_threshold = 0.01;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  bool train_model = true;  // false: only the encoder moves
  bool check_finite = false;

  void validate() const;
};

struct VaeEpoch {
  std::size_t epoch = 0;
  double elbo = 0.0;
  double kl = 0.0;
  double mi = 0.0;
  double au = 0.0;
  double wallclock_s = 0.0;
};

struct VaeResult {
  std::vector<VaeEpoch> log;
};

/// Joint Adam ascent on the ELBO over shuffled minibatches. Throws
/// NumericalError if the loss or a gradient turns non-finite.
VaeResult train_vae(const LatentModel& model, std::vector<Tensor>& model_params,
                    const Encoder& encoder, std::vector<Tensor>& encoder_params,
                    const Tensor& data, const VaeConfig& config, Rng& rng,
                    const std::function<void(const VaeEpoch&)>& on_epoch = {});

std::string vae_log_csv(const std::vector<VaeEpoch>& log);

}  // namespace dpgm

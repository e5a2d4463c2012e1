// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <span>
#include <string>
#include <vector>

#include "dpgm/autodiff.hpp"
#include "dpgm/expfam.hpp"
#include "dpgm/rng.hpp"

namespace dpgm {

enum class Activation { Identity, Tanh, Sigmoid, Relu, Softplus };

Var activate(Var x, Activation act);
Activation parse_activation(const std::string& name);
const char* activation_name(Activation act);

/// Binds parameter tensors to a tape: leaves when trainable, constants
/// otherwise (constants are skipped by backward).
std::vector<Var> bind_params(Tape& tape, std::span<const Tensor> params,
                             bool trainable = true);

/// Exponential-family PCA decoder: eta = z beta with z [B, d_z] and
/// beta [d_z, d_x]. The natural parameter is the linear predictor itself
/// (identity mean for Gaussian, logits for Bernoulli, log-rate for Poisson).
Tensor efpca_decode(const Tensor& beta, const Tensor& z);

/// widths = {d_in, h_1, ..., d_out}; one affine layer per consecutive pair.
/// Hidden layers use `hidden`, the last layer `output` (identity by default).
struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation hidden = Activation::Tanh;
  Activation output = Activation::Identity;

  std::size_t layers() const { return widths.size() - 1; }
  void validate() const;
};

/// Weights are [in, out] and stored W_0, b_0, W_1, b_1, ...
std::vector<Tensor> init_mlp(const MlpSpec& spec, Rng& rng);
std::vector<std::string> mlp_param_names(const MlpSpec& spec, const std::string& prefix);
Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, Var x);

/// Skip decoder: the first layer maps z to h_1; every later layer l computes
/// act(h_{l-1} W_l^(h) + z W_l^(z) + b_l), the last with identity.
/// Parameters are stored W_0, b_0, then (W_l^(h), W_l^(z), b_l) per later layer.
std::vector<Tensor> init_skip(const MlpSpec& spec, Rng& rng);
std::vector<std::string> skip_param_names(const MlpSpec& spec, const std::string& prefix);
Var skip_forward(const MlpSpec& spec, std::span<const Var> params, Var z);

enum class DecoderKind { Mlp, Skip };

struct Decoder {
  DecoderKind kind = DecoderKind::Mlp;
  MlpSpec spec;

  std::vector<Tensor> init(Rng& rng) const;
  std::vector<std::string> param_names() const;
  std::size_t param_count() const;
  Var forward(std::span<const Var> params, Var z) const;
};

/// Diagonal Gaussian; rows of mean/log_var are independent distributions.
struct GaussianDiag {
  Tensor mean;
  Tensor log_var;

  Tensor stddev() const;
  /// mean + exp(log_var / 2) * eps for eps of the same shape.
  Tensor reparam(const Tensor& eps) const;
  Tensor sample(Rng& rng) const;
  /// Per-row log density of z (same shape as mean).
  Tensor log_density(const Tensor& z) const;
};

/// Per-row sum over the last axis of log N(z; mean, exp(log_var)).
Var gaussian_diag_log_density(Var z, Var mean, Var log_var);
/// Per-row log N(z; 0, I).
Var standard_normal_log_density(Var z);

/// Amortized encoder: shared trunk (widths {d_x, h_1, ..., h_k}, every layer
/// followed by `hidden`), then linear mean and variance heads; the variance
/// head goes through softplus, so sigma^2 = softplus(a).
struct Encoder {
  std::vector<std::size_t> trunk;
  std::size_t latent = 1;
  Activation hidden = Activation::Tanh;

  std::vector<Tensor> init(Rng& rng) const;
  std::vector<std::string> param_names() const;
  std::size_t param_count() const;
  /// Returns {mean, log_var}, both [B, latent].
  std::pair<Var, Var> forward(std::span<const Var> params, Var x) const;
  GaussianDiag encode(std::span<const Tensor> params, const Tensor& x) const;
};

enum class Likelihood { Gaussian, Bernoulli, Poisson };

/// p(z) p_theta(x | z) with a standard normal prior. For the Gaussian
/// likelihood a learnable per-dimension log sigma is the last parameter.
struct LatentModel {
  std::size_t d_z = 1;
  std::size_t d_x = 1;
  Decoder decoder;
  Likelihood likelihood = Likelihood::Gaussian;

  static LatentModel make(DecoderKind kind, std::vector<std::size_t> widths,
                          Likelihood lik, Activation hidden = Activation::Tanh);

  std::vector<Tensor> init(Rng& rng) const;
  std::vector<std::string> param_names() const;
  std::size_t param_count() const;

  Var natural_params(std::span<const Var> params, Var z) const;
  /// Per-row log p_theta(x | z).
  Var log_likelihood(std::span<const Var> params, Var z, Var x) const;
  /// Per-row log p(z) + log p_theta(x | z).
  Var log_joint(std::span<const Var> params, Var z, Var x) const;

  Tensor log_joint(std::span<const Tensor> params, const Tensor& z, const Tensor& x) const;
  /// Gradient of sum_b log_joint with respect to z.
  Tensor grad_z_log_joint(std::span<const Tensor> params, const Tensor& z,
                          const Tensor& x) const;
};

/// x | z ~ N(z beta + b, diag(s2)), z ~ N(0, I). Everything is closed form.
struct LinearGaussian {
  Tensor beta;       // [d_z, d_x]
  Tensor bias;       // [d_x]
  Tensor noise_var;  // [d_x]

  std::size_t d_z() const { return beta.dim(0); }
  std::size_t d_x() const { return beta.dim(1); }

  /// Rows of beta are orthogonal with the given norms and the noise is
  /// isotropic, so the exact posterior covariance is diagonal.
  static LinearGaussian orthogonal(std::size_t d_z, std::size_t d_x,
                                   std::span<const double> row_norms, double noise_var,
                                   Rng& rng);

  Tensor marginal_cov() const;
  double log_marginal(std::span<const double> x) const;
  Tensor posterior_precision() const;
  Tensor posterior_cov() const;
  Tensor posterior_mean(std::span<const double> x) const;
  double log_joint(std::span<const double> x, std::span<const double> z) const;
  double log_posterior(std::span<const double> x, std::span<const double> z) const;
  Tensor sample_x(std::size_t n, Rng& rng) const;

  /// The same model as a LatentModel with a one-layer decoder; parameters
  /// are {beta, bias, log sigma}.
  LatentModel as_latent_model() const;
  std::vector<Tensor> latent_model_params() const;
  /// Inverse of latent_model_params for a one-layer Gaussian LatentModel.
  static LinearGaussian from_latent_params(std::span<const Tensor> params);
  /// An exact-posterior amortized encoder (no hidden layers) for a diagonal
  /// posterior; throws if the posterior covariance is not diagonal.
  Encoder exact_encoder() const;
  std::vector<Tensor> exact_encoder_params() const;
};

/// Inverse of softplus, used to set variance heads exactly.
double softplus_inverse(double y);

}  // namespace dpgm

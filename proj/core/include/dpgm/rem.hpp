// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpgm/adam.hpp"
#include "dpgm/models.hpp"

namespace dpgm {

/// K weighted particles for one observation. Weights are normalized in
/// log space.
struct ImportanceSet {
  Tensor particles;    // [K, d_z]
  Tensor log_weights;  // [K], raw
  Tensor weights;      // [K], normalized
  double ess = 0.0;    // 1 / sum(weights^2)
  double log_mean_weight = 0.0;

  std::size_t size() const { return weights.size(); }
};

/// Normalizes raw log-weights. Throws NumericalError when every weight is
/// zero or a log-weight is NaN/+inf.
ImportanceSet make_importance_set(Tensor particles, Tensor log_weights);

/// Full-covariance Gaussian found by matching weighted particle moments.
struct MomentProposal {
  Tensor mean;      // [d]
  Tensor cov;       // [d, d], jitter included
  Tensor chol;      // lower Cholesky factor of cov
  double jitter = 0.0;

  static MomentProposal from_moments(Tensor mean, Tensor cov);

  std::size_t dim() const { return mean.size(); }
  Tensor sample(std::size_t k, Rng& rng) const;
  /// Per-row log density of z [K, d].
  Tensor log_density(const Tensor& z) const;
};

enum class CovarianceWeighting {
  Weighted,    // sum_k alpha_k (z_k - mu)(z_k - mu)^T
  Unweighted,  // sum_k (z_k - mu)(z_k - mu)^T, alpha dropped
};

/// mu = sum_k alpha_k z_k; covariance per `weighting` plus jitter * I. The
/// jitter starts at `jitter` and doubles while the Cholesky factorization
/// fails, up to `max_jitter`; beyond that NumericalError is thrown.
MomentProposal moment_match(const ImportanceSet& set, double jitter = 1e-4,
                            CovarianceWeighting weighting = CovarianceWeighting::Weighted,
                            double max_jitter = 1e-1);

/// Single-observation importance sets; `x` is [1, d_x], `q` is [1, d_z].
ImportanceSet importance_weights(const LatentModel& model, std::span<const Tensor> params,
                                 const GaussianDiag& q, const Tensor& x, std::size_t k,
                                 Rng& rng);
ImportanceSet importance_weights(const LatentModel& model, std::span<const Tensor> params,
                                 const MomentProposal& s, const Tensor& x, std::size_t k,
                                 Rng& rng);

/// log (1/K) sum_k p(x, z_k) / q(z_k) with z_k ~ q.
double iwae_objective(const LatentModel& model, std::span<const Tensor> params,
                      const GaussianDiag& q, const Tensor& x, std::size_t k, Rng& rng);

/// IWAE bound for fixed particles, differentiable in the model parameters.
/// `log_q` are the proposal log densities of the particles.
Var iwae_bound_graph(const LatentModel& model, std::span<const Var> params, const Tensor& x,
                     const Tensor& particles, const Tensor& log_q);

/// sum_k alpha_k grad_theta log p_theta(x, z_k) for one observation.
std::vector<Tensor> rem_model_gradient(const ImportanceSet& set, const LatentModel& model,
                                       std::span<const Tensor> params, const Tensor& x);

/// Gradient of -sum_k beta_k log r_eta(z_k | x) with respect to the encoder
/// parameters for fixed particles and weights.
std::vector<Tensor> proposal_gradient(const Encoder& encoder,
                                      std::span<const Tensor> encoder_params, const Tensor& x,
                                      const ImportanceSet& set);

/// Draws K particles from the hyperproposal s, weights them by
/// p(x, z) / s(z) and returns the proposal gradient above.
std::vector<Tensor> proposal_gradient(const LatentModel& model,
                                      std::span<const Tensor> model_params,
                                      const Encoder& encoder,
                                      std::span<const Tensor> encoder_params,
                                      const MomentProposal& s, const Tensor& x, std::size_t k,
                                      Rng& rng);

enum class RemVariant { V1, V2 };

struct RemConfig {
  RemVariant variant = RemVariant::V1;
  std::size_t epochs = 100;
  std::size_t batch = 100;
  std::size_t particles = 50;
  double jitter = 1e-4;
  CovarianceWeighting weighting = CovarianceWeighting::Weighted;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  bool check_finite = false;

  void validate() const;
};

struct RemEpoch {
  std::size_t epoch = 0;
  double iwae_bound = 0.0;         // mean K-sample bound under r over the epoch
  double ess_mean = 0.0;           // mean ESS of the r-particle weights
  double kl_proposal_prior = 0.0;  // mean KL(r(z | x) || p(z)) over the data
  double wallclock_s = 0.0;
};

struct RemResult {
  std::vector<RemEpoch> log;
};

/// v1: model gradient from proposal particles (w weights), encoder gradient
/// from hyperproposal particles (v weights). v2: both from hyperproposal
/// particles. Adam on both parameter sets.
RemResult train_rem(const LatentModel& model, std::vector<Tensor>& model_params,
                    const Encoder& encoder, std::vector<Tensor>& encoder_params,
                    const Tensor& data, const RemConfig& config, Rng& rng,
                    const std::function<void(const RemEpoch&)>& on_epoch = {});

std::string rem_log_csv(const std::vector<RemEpoch>& log);

/// Mean over rows of the K-particle IWAE bound with the encoder as proposal.
double iwae_evaluate(const LatentModel& model, std::span<const Tensor> model_params,
                     const Encoder& encoder, std::span<const Tensor> encoder_params,
                     const Tensor& data, std::size_t k, Rng& rng);

}  // namespace dpgm

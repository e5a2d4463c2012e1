// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/vi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace dpgm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

McEstimate mean_and_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

double diag_log_density(std::span<const double> z, std::span<const double> mean,
                        std::span<const double> log_var) {
  double s = 0.0;
  for (std::size_t d = 0; d < z.size(); ++d) {
    const double r = z[d] - mean[d];
    s += r * r * std::exp(-log_var[d]) + log_var[d] + kLog2Pi;
  }
  return -0.5 * s;
}

double std_normal_log_density(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v + kLog2Pi;
  return -0.5 * s;
}

// Per sample: {log q(z | x_n), log q(z), log p(z)} with z ~ q(. | x_n),
// q(z) the uniform mixture over all rows.
struct MixtureDraws {
  std::vector<double> log_cond;
  std::vector<double> log_mix;
  std::vector<double> log_prior;
};

MixtureDraws draw_from_mixture(const GaussianDiag& q, std::size_t samples, Rng& rng) {
  if (samples == 0) throw DomainError("collapse metric: samples must be >= 1");
  const std::size_t n = q.mean.rows();
  const std::size_t d = q.mean.cols();
  const double log_n = std::log(static_cast<double>(n));
  const Tensor sd = q.stddev();
  MixtureDraws out;
  out.log_cond.reserve(n * samples);
  std::vector<double> z(d);
  std::vector<double> comp(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < samples; ++s) {
      for (std::size_t k = 0; k < d; ++k) z[k] = q.mean.at(i, k) + sd.at(i, k) * rng.normal();
      for (std::size_t m = 0; m < n; ++m) {
        comp[m] = diag_log_density(z, q.mean.row(m), q.log_var.row(m));
      }
      out.log_cond.push_back(comp[i]);
      out.log_mix.push_back(log_sum_exp(comp) - log_n);
      out.log_prior.push_back(std_normal_log_density(z));
    }
  }
  return out;
}

std::vector<Tensor> draw_eps(std::size_t samples, const Shape& shape, Rng& rng) {
  std::vector<Tensor> eps;
  eps.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) eps.push_back(rng.normal(shape));
  return eps;
}

void require_single_row(const GaussianDiag& q, const Tensor& x, const char* what) {
  if (q.mean.rank() != 2 || q.mean.rows() != 1 || x.rows() != 1 ||
      q.log_var.shape() != q.mean.shape()) {
    throw ShapeError(std::string(what) + ": expects q of shape [1, d_z] and x of shape [1, d_x]");
  }
}

}  // namespace

Tensor gaussian_kl(const GaussianDiag& q) {
  if (q.mean.shape() != q.log_var.shape()) {
    throw ShapeError("gaussian_kl: mean " + shape_string(q.mean.shape()) + " vs log_var " +
                     shape_string(q.log_var.shape()));
  }
  const std::size_t rows = q.mean.rows();
  const std::size_t d = q.mean.cols();
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double m = q.mean.at(r, k);
      const double lv = q.log_var.at(r, k);
      s += std::exp(lv) + m * m - lv - 1.0;
    }
    out[r] = 0.5 * s;
  }
  return out;
}

Var gaussian_kl(Var mean, Var log_var) {
  return 0.5 * sum_last(exp(log_var) + square(mean) - log_var - 1.0);
}

Var elbo_graph(const LatentModel& model, std::span<const Var> model_params,
               const Encoder& encoder, std::span<const Var> encoder_params, Var x,
               std::span<const Tensor> eps) {
  if (eps.empty()) throw DomainError("elbo: need at least one noise sample");
  Tape& tape = *x.tape();
  const auto [mu, log_var] = encoder.forward(encoder_params, x);
  const Var sd = exp(0.5 * log_var);
  Var rec;
  for (const Tensor& e : eps) {
    const Var z = mu + sd * tape.constant(e);
    const Var ll = model.log_likelihood(model_params, z, x);
    rec = rec.valid() ? rec + ll : ll;
  }
  if (eps.size() > 1) rec = rec * (1.0 / static_cast<double>(eps.size()));
  return mean(rec - gaussian_kl(mu, log_var));
}

ElboEstimate elbo_estimate(const LatentModel& model, std::span<const Tensor> model_params,
                           const Encoder& encoder, std::span<const Tensor> encoder_params,
                           const Tensor& x, std::size_t samples, Rng& rng) {
  if (samples == 0) throw DomainError("elbo_estimate: samples must be >= 1");
  const GaussianDiag q = encoder.encode(encoder_params, x);
  const Tensor sd = q.stddev();
  const std::size_t rows = x.rows();

  Tape tape;
  const auto mp = bind_params(tape, model_params, false);
  const Var xv = tape.constant(x);
  Tensor rec(Shape{rows}, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const Tensor z = q.reparam(rng.normal(q.mean.shape()));
    const Tensor ll = model.log_likelihood(mp, tape.constant(z), xv).value();
    rec += ll;
  }
  rec *= 1.0 / static_cast<double>(samples);
  const Tensor kl = gaussian_kl(q);

  ElboEstimate est;
  est.samples = samples;
  est.per_row = rec - kl;
  for (std::size_t r = 0; r < rows; ++r) {
    est.reconstruction += rec[r];
    est.kl += kl[r];
  }
  est.reconstruction /= static_cast<double>(rows);
  est.kl /= static_cast<double>(rows);
  est.value = est.reconstruction - est.kl;
  return est;
}

LocalGradient score_gradient(const LatentModel& model, std::span<const Tensor> model_params,
                             const GaussianDiag& q, const Tensor& x, std::size_t samples,
                             Rng& rng) {
  require_single_row(q, x, "score_gradient");
  if (samples == 0) throw DomainError("score_gradient: samples must be >= 1");
  const std::size_t d = q.mean.cols();
  const Tensor sd = q.stddev();

  // All S draws go through the model as one batch.
  Tensor z(Shape{samples, d});
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t k = 0; k < d; ++k) z.at(s, k) = q.mean[k] + sd[k] * rng.normal();
  }
  Tensor xs(Shape{samples, x.cols()});
  for (std::size_t s = 0; s < samples; ++s) {
    std::copy(x.data().begin(), x.data().end(), xs.row(s).begin());
  }
  const Tensor log_p = model.log_joint(model_params, z, xs);

  LocalGradient g{Tensor::zeros_like(q.mean), Tensor::zeros_like(q.log_var)};
  for (std::size_t s = 0; s < samples; ++s) {
    const double f = log_p[s] - diag_log_density(z.row(s), q.mean.row(0), q.log_var.row(0));
    for (std::size_t k = 0; k < d; ++k) {
      const double r = z.at(s, k) - q.mean[k];
      const double inv_var = std::exp(-q.log_var[k]);
      g.d_mean[k] += f * r * inv_var;
      g.d_log_var[k] += f * 0.5 * (r * r * inv_var - 1.0);
    }
  }
  g.d_mean *= 1.0 / static_cast<double>(samples);
  g.d_log_var *= 1.0 / static_cast<double>(samples);
  return g;
}

LocalGradient reparam_gradient(const LatentModel& model, std::span<const Tensor> model_params,
                               const GaussianDiag& q, const Tensor& x, std::size_t samples,
                               Rng& rng) {
  require_single_row(q, x, "reparam_gradient");
  if (samples == 0) throw DomainError("reparam_gradient: samples must be >= 1");
  const std::size_t d = q.mean.cols();
  Tape tape;
  const auto mp = bind_params(tape, model_params, false);
  const Var mu = tape.leaf(q.mean);
  const Var lv = tape.leaf(q.log_var);
  Tensor ones(Shape{samples, 1}, 1.0);
  const Var rep = tape.constant(ones);
  // Broadcast the single row of (mu, sigma) over S draws via a [S,1]x[1,d] product.
  const Var mu_s = matmul(rep, mu);
  const Var sd_s = matmul(rep, exp(0.5 * lv));
  const Var z = mu_s + sd_s * tape.constant(rng.normal(Shape{samples, d}));
  Tensor xs(Shape{samples, x.cols()});
  for (std::size_t s = 0; s < samples; ++s) {
    std::copy(x.data().begin(), x.data().end(), xs.row(s).begin());
  }
  const Var log_p = model.log_joint(mp, z, tape.constant(xs));
  const Var entropy = 0.5 * sum(lv + (1.0 + kLog2Pi));
  const Var objective = mean(log_p) + entropy;
  tape.backward(objective);
  return {tape.grad(mu), tape.grad(lv)};
}

ReparamGradient reparam_gradient(const LatentModel& model, std::span<const Tensor> model_params,
                                 const Encoder& encoder, std::span<const Tensor> encoder_params,
                                 const Tensor& x, std::size_t samples, Rng& rng) {
  if (samples == 0) throw DomainError("reparam_gradient: samples must be >= 1");
  Tape tape;
  const auto mp = bind_params(tape, model_params, true);
  const auto ep = bind_params(tape, encoder_params, true);
  const auto eps = draw_eps(samples, Shape{x.rows(), encoder.latent}, rng);
  const Var elbo = elbo_graph(model, mp, encoder, ep, tape.constant(x), eps);
  tape.backward(elbo);
  return {elbo.value().item(), tape.grads(mp), tape.grads(ep)};
}

McEstimate kl_q_prior_metric(const GaussianDiag& posteriors, std::size_t samples, Rng& rng) {
  const MixtureDraws draws = draw_from_mixture(posteriors, samples, rng);
  std::vector<double> v(draws.log_mix.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = draws.log_mix[i] - draws.log_prior[i];
  return mean_and_se(v);
}

McEstimate kl_q_prior_metric(const Encoder& encoder, std::span<const Tensor> encoder_params,
                             const Tensor& data, std::size_t samples, Rng& rng) {
  return kl_q_prior_metric(encoder.encode(encoder_params, data), samples, rng);
}

McEstimate mutual_information_metric(const GaussianDiag& posteriors, std::size_t samples,
                                     Rng& rng) {
  const MixtureDraws draws = draw_from_mixture(posteriors, samples, rng);
  std::vector<double> v(draws.log_mix.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = draws.log_cond[i] - draws.log_mix[i];
  return mean_and_se(v);
}

McEstimate mutual_information_metric(const Encoder& encoder,
                                     std::span<const Tensor> encoder_params,
                                     const Tensor& data, std::size_t samples, Rng& rng) {
  return mutual_information_metric(encoder.encode(encoder_params, data), samples, rng);
}

std::size_t active_units(const Tensor& posterior_means, double threshold) {
  if (!(threshold > 0.0)) throw DomainError("active_units: threshold must be > 0");
  const std::size_t n = posterior_means.rows();
  const std::size_t d = posterior_means.cols();
  if (n < 2) return 0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += posterior_means.at(i, k);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = posterior_means.at(i, k) - mean;
      ss += r * r;
    }
    if (ss / static_cast<double>(n - 1) >= threshold) ++count;
  }
  return count;
}

std::size_t active_units(const Encoder& encoder, std::span<const Tensor> encoder_params,
                         const Tensor& data, double threshold) {
  return active_units(encoder.encode(encoder_params, data).mean, threshold);
}

CollapseReport collapse_report(const Encoder& encoder, std::span<const Tensor> encoder_params,
                               const Tensor& data, std::size_t samples, double threshold,
                               Rng& rng) {
  const GaussianDiag q = encoder.encode(encoder_params, data);
  CollapseReport r;
  r.threshold = threshold;
  r.kl_q_prior = kl_q_prior_metric(q, samples, rng).value;
  r.mutual_information = mutual_information_metric(q, samples, rng).value;
  r.active_units = active_units(q.mean, threshold);
  return r;
}

void VaeConfig::validate() const {
  if (epochs == 0) throw DomainError("vae: epochs must be >= 1");
  if (batch == 0) throw DomainError("vae: batch must be >= 1");
  if (samples == 0) throw DomainError("vae: samples must be >= 1");
  if (!(au_threshold > 0.0)) throw DomainError("vae: au_threshold must be > 0");
  if (!(adam.lr > 0.0)) throw DomainError("vae: learning rate must be > 0");
}

VaeResult train_vae(const LatentModel& model, std::vector<Tensor>& model_params,
                    const Encoder& encoder, std::vector<Tensor>& encoder_params,
                    const Tensor& data, const VaeConfig& config, Rng& rng,
                    const std::function<void(const VaeEpoch&)>& on_epoch) {
  config.validate();
  const std::size_t n = data.rows();
  const std::size_t d_x = data.cols();
  if (config.batch > n) {
    throw DomainError("vae: batch " + std::to_string(config.batch) + " exceeds dataset size " +
                      std::to_string(n));
  }
  AdamState model_opt(config.adam);
  AdamState enc_opt(config.adam);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t iters = n / config.batch;

  VaeResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double elbo_sum = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
      Tensor xb(Shape{config.batch, d_x});
      for (std::size_t b = 0; b < config.batch; ++b) {
        const auto src = data.row(order[it * config.batch + b]);
        std::copy(src.begin(), src.end(), xb.row(b).begin());
      }
      Tape tape(config.check_finite);
      const auto mp = bind_params(tape, model_params, config.train_model);
      const auto ep = bind_params(tape, encoder_params, true);
      const auto eps = draw_eps(config.samples, Shape{config.batch, encoder.latent}, rng);
      const Var xv = tape.constant(xb);
      const Var elbo = elbo_graph(model, mp, encoder, ep, xv, eps);
      const double value = elbo.value().item();
      if (!std::isfinite(value)) {
        throw NumericalError("vae: non-finite ELBO at epoch " + std::to_string(epoch) +
                             ", iteration " + std::to_string(it));
      }
      tape.backward(-1.0 * elbo);
      auto enc_grads = tape.grads(ep);
      for (const auto& g : enc_grads) {
        if (!g.all_finite()) {
          throw NumericalError("vae: non-finite encoder gradient at epoch " +
                               std::to_string(epoch) + ", iteration " + std::to_string(it));
        }
      }
      adam_step(encoder_params, enc_grads, enc_opt);
      if (config.train_model) {
        auto model_grads = tape.grads(mp);
        for (const auto& g : model_grads) {
          if (!g.all_finite()) {
            throw NumericalError("vae: non-finite model gradient at epoch " +
                                 std::to_string(epoch) + ", iteration " + std::to_string(it));
          }
        }
        adam_step(model_params, model_grads, model_opt);
      }
      elbo_sum += value;
    }

    VaeEpoch row;
    row.epoch = epoch;
    row.elbo = elbo_sum / static_cast<double>(iters);
    const GaussianDiag q = encoder.encode(encoder_params, data);
    const Tensor kl = gaussian_kl(q);
    row.kl = std::accumulate(kl.values().begin(), kl.values().end(), 0.0) /
             static_cast<double>(n);
    const std::size_t m = std::min(config.metric_points, n);
    if (m > 0) {
      // Metrics on the first m rows of this epoch's shuffle.
      GaussianDiag sub{Tensor(Shape{m, encoder.latent}), Tensor(Shape{m, encoder.latent})};
      for (std::size_t i = 0; i < m; ++i) {
        std::ranges::copy(q.mean.row(order[i]), sub.mean.row(i).begin());
        std::ranges::copy(q.log_var.row(order[i]), sub.log_var.row(i).begin());
      }
      row.mi = mutual_information_metric(sub, config.metric_samples, rng).value;
      row.au = static_cast<double>(active_units(sub.mean, config.au_threshold));
    }
    row.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

std::string vae_log_csv(const std::vector<VaeEpoch>& log) {
  std::string out = "epoch,elbo,kl,mi,au,wallclock_s\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.epoch, r.elbo,
                  r.kl, r.mi, r.au, r.wallclock_s);
    out += buf;
  }
  return out;
}

}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/rem.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "dpgm/linalg.hpp"
#include "dpgm/vi.hpp"

namespace dpgm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const RowMat>;

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out(Shape{rows * times, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < times; ++t) {
      std::ranges::copy(x.row(r), out.row(r * times + t).begin());
    }
  }
  return out;
}

// [rows * times, rows] with a one in column r for each of the `times` copies of row r.
Tensor selector(std::size_t rows, std::size_t times) {
  Tensor e(Shape{rows * times, rows}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < times; ++t) e.at(r * times + t, r) = 1.0;
  }
  return e;
}

Tensor row_block(const Tensor& t, std::size_t begin, std::size_t count) {
  const std::size_t c = t.cols();
  Shape shape = t.shape();
  shape[0] = count;
  std::vector<double> data(t.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           t.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return Tensor(std::move(shape), std::move(data));
}

Tensor sample_diag(const GaussianDiag& q, std::size_t row, std::size_t k, Rng& rng) {
  const std::size_t d = q.mean.cols();
  Tensor z(Shape{k, d});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      z.at(i, j) = q.mean.at(row, j) + std::exp(0.5 * q.log_var.at(row, j)) * rng.normal();
    }
  }
  return z;
}

double diag_log_density(std::span<const double> z, const GaussianDiag& q, std::size_t row) {
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double r = z[j] - q.mean.at(row, j);
    const double lv = q.log_var.at(row, j);
    s += r * r * std::exp(-lv) + lv + kLog2Pi;
  }
  return -0.5 * s;
}

// Gradient of scale * sum_n w_n log p(x_n, z_n) over the model parameters.
std::vector<Tensor> weighted_model_grad(const LatentModel& model, std::span<const Tensor> params,
                                        const Tensor& x, const Tensor& z, const Tensor& w,
                                        double scale, bool check_finite) {
  Tape tape(check_finite);
  const auto mp = bind_params(tape, params, true);
  const Var lj = model.log_joint(mp, tape.constant(z), tape.constant(x));
  tape.backward(scale * sum(lj * tape.constant(w)));
  return tape.grads(mp);
}

// Gradient of -scale * sum_n w_n log r(z_n | x_{n / times}) over the encoder parameters.
std::vector<Tensor> weighted_proposal_grad(const Encoder& encoder,
                                           std::span<const Tensor> params, const Tensor& x,
                                           std::size_t times, const Tensor& z, const Tensor& w,
                                           double scale, bool check_finite) {
  Tape tape(check_finite);
  const auto ep = bind_params(tape, params, true);
  const auto [mu, lv] = encoder.forward(ep, tape.constant(x));
  const Var e = tape.constant(selector(x.rows(), times));
  const Var ld = gaussian_diag_log_density(tape.constant(z), matmul(e, mu), matmul(e, lv));
  tape.backward(-scale * sum(ld * tape.constant(w)));
  return tape.grads(ep);
}

void require_finite(const std::vector<Tensor>& grads, const char* what, std::size_t epoch,
                    std::size_t it) {
  for (const auto& g : grads) {
    if (!g.all_finite()) {
      throw NumericalError(std::string("rem: non-finite ") + what + " gradient at epoch " +
                           std::to_string(epoch) + ", iteration " + std::to_string(it));
    }
  }
}

}  // namespace

ImportanceSet make_importance_set(Tensor particles, Tensor log_weights) {
  const std::size_t k = log_weights.size();
  if (particles.rows() != k) {
    throw ShapeError("importance set: " + std::to_string(particles.rows()) + " particles vs " +
                     std::to_string(k) + " weights");
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double v : log_weights.values()) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw NumericalError("importance set: log-weight is NaN or +inf");
    }
    top = std::max(top, v);
  }
  if (!std::isfinite(top)) {
    throw NumericalError("importance set: all weights are zero (proposal misses the support)");
  }
  ImportanceSet set;
  set.weights = Tensor(Shape{k});
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    set.weights[i] = std::exp(log_weights[i] - top);
    total += set.weights[i];
  }
  double sq = 0.0;
  for (auto& a : set.weights.values()) {
    a /= total;
    sq += a * a;
  }
  set.ess = 1.0 / sq;
  set.log_mean_weight = top + std::log(total) - std::log(static_cast<double>(k));
  set.particles = std::move(particles);
  set.log_weights = std::move(log_weights);
  return set;
}

MomentProposal MomentProposal::from_moments(Tensor mean, Tensor cov) {
  MomentProposal p;
  p.chol = cholesky(cov);
  p.mean = std::move(mean);
  p.cov = std::move(cov);
  return p;
}

Tensor MomentProposal::sample(std::size_t k, Rng& rng) const {
  const std::size_t d = dim();
  Tensor z(Shape{k, d});
  std::vector<double> eps(d);
  for (std::size_t i = 0; i < k; ++i) {
    for (auto& e : eps) e = rng.normal();
    for (std::size_t r = 0; r < d; ++r) {
      double v = mean[r];
      for (std::size_t c = 0; c <= r; ++c) v += chol.at(r, c) * eps[c];
      z.at(i, r) = v;
    }
  }
  return z;
}

Tensor MomentProposal::log_density(const Tensor& z) const {
  const auto d = static_cast<Eigen::Index>(dim());
  if (z.cols() != dim()) {
    throw ShapeError("moment proposal: particles have " + std::to_string(z.cols()) +
                     " columns, expected " + std::to_string(dim()));
  }
  const MatMap l(chol.data().data(), d, d);
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det_half += std::log(l(i, i));
  Tensor out(Shape{z.rows()});
  Eigen::VectorXd r(d);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) r(j) = z.at(i, static_cast<std::size_t>(j)) - mean[static_cast<std::size_t>(j)];
    l.triangularView<Eigen::Lower>().solveInPlace(r);
    out[i] = -0.5 * (r.squaredNorm() + static_cast<double>(d) * kLog2Pi) - log_det_half;
  }
  return out;
}

MomentProposal moment_match(const ImportanceSet& set, double jitter,
                            CovarianceWeighting weighting, double max_jitter) {
  const std::size_t k = set.size();
  if (k < 2) throw DomainError("moment_match: needs at least 2 particles");
  if (!(jitter > 0.0) || max_jitter < jitter) {
    throw DomainError("moment_match: need 0 < jitter <= max_jitter");
  }
  const std::size_t d = set.particles.cols();
  Tensor mean(Shape{d}, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += set.weights[i] * set.particles.at(i, j);
  }
  Tensor cov(Shape{d, d}, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double a = weighting == CovarianceWeighting::Weighted ? set.weights[i] : 1.0;
    for (std::size_t r = 0; r < d; ++r) {
      const double dr = set.particles.at(i, r) - mean[r];
      for (std::size_t c = 0; c <= r; ++c) {
        cov.at(r, c) += a * dr * (set.particles.at(i, c) - mean[c]);
      }
    }
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < r; ++c) cov.at(c, r) = cov.at(r, c);
  }

  for (double eps = jitter;; eps = std::min(2.0 * eps, max_jitter)) {
    Tensor c = cov;
    for (std::size_t r = 0; r < d; ++r) c.at(r, r) += eps;
    try {
      MomentProposal p = MomentProposal::from_moments(mean, std::move(c));
      p.jitter = eps;
      return p;
    } catch (const NumericalError& err) {
      if (eps >= max_jitter) {
        throw NumericalError("moment_match: covariance not positive definite with jitter " +
                             std::to_string(eps) + ": " + err.what());
      }
    }
  }
}

ImportanceSet importance_weights(const LatentModel& model, std::span<const Tensor> params,
                                 const GaussianDiag& q, const Tensor& x, std::size_t k,
                                 Rng& rng) {
  if (k == 0) throw DomainError("importance_weights: K must be >= 1");
  if (q.mean.rows() != 1 || x.rows() != 1) {
    throw ShapeError("importance_weights: expects a single observation and proposal row");
  }
  Tensor z = sample_diag(q, 0, k, rng);
  Tensor logw = model.log_joint(params, z, repeat_rows(x, k));
  for (std::size_t i = 0; i < k; ++i) logw[i] -= diag_log_density(z.row(i), q, 0);
  return make_importance_set(std::move(z), std::move(logw));
}

ImportanceSet importance_weights(const LatentModel& model, std::span<const Tensor> params,
                                 const MomentProposal& s, const Tensor& x, std::size_t k,
                                 Rng& rng) {
  if (k == 0) throw DomainError("importance_weights: K must be >= 1");
  if (x.rows() != 1) throw ShapeError("importance_weights: expects a single observation");
  Tensor z = s.sample(k, rng);
  Tensor logw = model.log_joint(params, z, repeat_rows(x, k)) - s.log_density(z);
  return make_importance_set(std::move(z), std::move(logw));
}

double iwae_objective(const LatentModel& model, std::span<const Tensor> params,
                      const GaussianDiag& q, const Tensor& x, std::size_t k, Rng& rng) {
  return importance_weights(model, params, q, x, k, rng).log_mean_weight;
}

Var iwae_bound_graph(const LatentModel& model, std::span<const Var> params, const Tensor& x,
                     const Tensor& particles, const Tensor& log_q) {
  if (params.empty()) throw DomainError("iwae_bound_graph: no model parameters");
  Tape& tape = *params.front().tape();
  const std::size_t k = particles.rows();
  const Var lj = model.log_joint(params, tape.constant(particles),
                                 tape.constant(repeat_rows(x, k)));
  const Var logw = lj - tape.constant(log_q);
  return logsumexp(logw) - std::log(static_cast<double>(k));
}

std::vector<Tensor> rem_model_gradient(const ImportanceSet& set, const LatentModel& model,
                                       std::span<const Tensor> params, const Tensor& x) {
  if (x.rows() != 1) throw ShapeError("rem_model_gradient: expects a single observation");
  return weighted_model_grad(model, params, repeat_rows(x, set.size()), set.particles,
                             set.weights, 1.0, false);
}

std::vector<Tensor> proposal_gradient(const Encoder& encoder,
                                      std::span<const Tensor> encoder_params, const Tensor& x,
                                      const ImportanceSet& set) {
  if (x.rows() != 1) throw ShapeError("proposal_gradient: expects a single observation");
  return weighted_proposal_grad(encoder, encoder_params, x, set.size(), set.particles,
                                set.weights, 1.0, false);
}

std::vector<Tensor> proposal_gradient(const LatentModel& model,
                                      std::span<const Tensor> model_params,
                                      const Encoder& encoder,
                                      std::span<const Tensor> encoder_params,
                                      const MomentProposal& s, const Tensor& x, std::size_t k,
                                      Rng& rng) {
  const ImportanceSet set = importance_weights(model, model_params, s, x, k, rng);
  return proposal_gradient(encoder, encoder_params, x, set);
}

void RemConfig::validate() const {
  if (epochs == 0) throw DomainError("rem: epochs must be >= 1");
  if (batch == 0) throw DomainError("rem: batch must be >= 1");
  if (particles < 2) throw DomainError("rem: moment matching needs K >= 2 particles");
  if (!(jitter > 0.0)) throw DomainError("rem: jitter must be > 0");
  if (!(adam.lr > 0.0)) throw DomainError("rem: learning rate must be > 0");
}

RemResult train_rem(const LatentModel& model, std::vector<Tensor>& model_params,
                    const Encoder& encoder, std::vector<Tensor>& encoder_params,
                    const Tensor& data, const RemConfig& config, Rng& rng,
                    const std::function<void(const RemEpoch&)>& on_epoch) {
  config.validate();
  const std::size_t n = data.rows();
  const std::size_t d_x = data.cols();
  const std::size_t d_z = encoder.latent;
  const std::size_t k = config.particles;
  const std::size_t b = config.batch;
  if (b > n) {
    throw DomainError("rem: batch " + std::to_string(b) + " exceeds dataset size " +
                      std::to_string(n));
  }
  AdamState model_opt(config.adam);
  AdamState enc_opt(config.adam);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t iters = n / b;
  const double scale = 1.0 / static_cast<double>(b);
  const auto start = std::chrono::steady_clock::now();

  RemResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double bound_sum = 0.0;
    double ess_sum = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
      Tensor xb(Shape{b, d_x});
      for (std::size_t i = 0; i < b; ++i) {
        std::ranges::copy(data.row(order[it * b + i]), xb.row(i).begin());
      }
      const Tensor xe = repeat_rows(xb, k);
      const GaussianDiag q = encoder.encode(encoder_params, xb);

      // Proposal particles and their w-weights.
      Tensor zr(Shape{b * k, d_z});
      Tensor log_r(Shape{b * k});
      for (std::size_t i = 0; i < b; ++i) {
        const Tensor zi = sample_diag(q, i, k, rng);
        for (std::size_t j = 0; j < k; ++j) {
          std::ranges::copy(zi.row(j), zr.row(i * k + j).begin());
          log_r[i * k + j] = diag_log_density(zi.row(j), q, i);
        }
      }
      const Tensor logw = model.log_joint(model_params, zr, xe) - log_r;

      // Hyperproposal particles and their v-weights.
      Tensor alpha(Shape{b * k});
      Tensor zs(Shape{b * k, d_z});
      Tensor log_s(Shape{b * k});
      for (std::size_t i = 0; i < b; ++i) {
        ImportanceSet set = make_importance_set(row_block(zr, i * k, k), row_block(logw, i * k, k));
        bound_sum += set.log_mean_weight;
        ess_sum += set.ess;
        std::ranges::copy(set.weights.values(), alpha.values().begin() + static_cast<std::ptrdiff_t>(i * k));
        const MomentProposal s = moment_match(set, config.jitter, config.weighting);
        const Tensor zi = s.sample(k, rng);
        const Tensor li = s.log_density(zi);
        for (std::size_t j = 0; j < k; ++j) {
          std::ranges::copy(zi.row(j), zs.row(i * k + j).begin());
          log_s[i * k + j] = li[j];
        }
      }
      const Tensor logv = model.log_joint(model_params, zs, xe) - log_s;
      Tensor beta(Shape{b * k});
      for (std::size_t i = 0; i < b; ++i) {
        const ImportanceSet set =
            make_importance_set(row_block(zs, i * k, k), row_block(logv, i * k, k));
        std::ranges::copy(set.weights.values(), beta.values().begin() + static_cast<std::ptrdiff_t>(i * k));
      }

      const auto enc_grads = weighted_proposal_grad(encoder, encoder_params, xb, k, zs, beta,
                                                    scale, config.check_finite);
      require_finite(enc_grads, "encoder", epoch, it);
      // Ascent on the weighted log joint.
      auto model_grads =
          config.variant == RemVariant::V1
              ? weighted_model_grad(model, model_params, xe, zr, alpha, -scale,
                                    config.check_finite)
              : weighted_model_grad(model, model_params, xe, zs, beta, -scale,
                                    config.check_finite);
      require_finite(model_grads, "model", epoch, it);
      adam_step(encoder_params, enc_grads, enc_opt);
      adam_step(model_params, model_grads, model_opt);
    }

    RemEpoch row;
    row.epoch = epoch;
    row.iwae_bound = bound_sum / static_cast<double>(iters * b);
    row.ess_mean = ess_sum / static_cast<double>(iters * b);
    const Tensor kl = gaussian_kl(encoder.encode(encoder_params, data));
    row.kl_proposal_prior =
        std::accumulate(kl.values().begin(), kl.values().end(), 0.0) / static_cast<double>(n);
    row.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(row.iwae_bound)) {
      throw NumericalError("rem: non-finite bound at epoch " + std::to_string(epoch));
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

std::string rem_log_csv(const std::vector<RemEpoch>& log) {
  std::string out = "epoch,iwae_bound,ess_mean,kl_proposal_prior\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.iwae_bound,
                  r.ess_mean, r.kl_proposal_prior);
    out += buf;
  }
  return out;
}

double iwae_evaluate(const LatentModel& model, std::span<const Tensor> model_params,
                     const Encoder& encoder, std::span<const Tensor> encoder_params,
                     const Tensor& data, std::size_t k, Rng& rng) {
  const GaussianDiag q = encoder.encode(encoder_params, data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const GaussianDiag qi{row_block(q.mean, i, 1), row_block(q.log_var, i, 1)};
    total += iwae_objective(model, model_params, qi, row_block(data, i, 1), k, rng);
  }
  return total / static_cast<double>(data.rows());
}

}  // namespace dpgm

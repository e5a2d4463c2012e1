// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/models.hpp"

#include <cmath>
#include <numbers>

#include "dpgm/linalg.hpp"

namespace dpgm {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Tensor uniform_weight(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return rng.uniform({in, out}, -bound, bound);
}

void check_param_count(std::span<const Var> params, std::size_t want, const char* who) {
  if (params.size() != want) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(want) +
                     " parameter tensors, got " + std::to_string(params.size()));
  }
}

Var affine(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

}  // namespace

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Relu: return relu(x);
    case Activation::Softplus: return softplus(x);
  }
  return x;
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "relu") return Activation::Relu;
  if (name == "softplus") return Activation::Softplus;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
  }
  return "identity";
}

std::vector<Var> bind_params(Tape& tape, std::span<const Tensor> params, bool trainable) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(trainable ? tape.leaf(p) : tape.constant(p));
  return out;
}

Tensor efpca_decode(const Tensor& beta, const Tensor& z) { return matmul(z, beta); }

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ShapeError("mlp: need at least one layer");
  for (auto w : widths) {
    if (w == 0) throw ShapeError("mlp: layer widths must be positive");
  }
}

std::vector<Tensor> init_mlp(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<Tensor> params;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    params.push_back(uniform_weight(spec.widths[l], spec.widths[l + 1], rng));
    params.push_back(Tensor::zeros({spec.widths[l + 1]}));
  }
  return params;
}

std::vector<std::string> mlp_param_names(const MlpSpec& spec, const std::string& prefix) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    names.push_back(prefix + ".layer" + std::to_string(l) + ".weight");
    names.push_back(prefix + ".layer" + std::to_string(l) + ".bias");
  }
  return names;
}

Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, Var x) {
  check_param_count(params, 2 * spec.layers(), "mlp_forward");
  Var h = x;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    h = affine(h, params[2 * l], params[2 * l + 1]);
    h = activate(h, l + 1 == spec.layers() ? spec.output : spec.hidden);
  }
  return h;
}

std::vector<Tensor> init_skip(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<Tensor> params;
  params.push_back(uniform_weight(spec.widths[0], spec.widths[1], rng));
  params.push_back(Tensor::zeros({spec.widths[1]}));
  for (std::size_t l = 1; l < spec.layers(); ++l) {
    params.push_back(uniform_weight(spec.widths[l], spec.widths[l + 1], rng));
    params.push_back(uniform_weight(spec.widths[0], spec.widths[l + 1], rng));
    params.push_back(Tensor::zeros({spec.widths[l + 1]}));
  }
  return params;
}

std::vector<std::string> skip_param_names(const MlpSpec& spec, const std::string& prefix) {
  std::vector<std::string> names{prefix + ".layer0.weight", prefix + ".layer0.bias"};
  for (std::size_t l = 1; l < spec.layers(); ++l) {
    const auto p = prefix + ".layer" + std::to_string(l);
    names.push_back(p + ".weight_h");
    names.push_back(p + ".weight_z");
    names.push_back(p + ".bias");
  }
  return names;
}

Var skip_forward(const MlpSpec& spec, std::span<const Var> params, Var z) {
  check_param_count(params, 2 + 3 * (spec.layers() - 1), "skip_forward");
  Var h = activate(affine(z, params[0], params[1]),
                   spec.layers() == 1 ? spec.output : spec.hidden);
  for (std::size_t l = 1; l < spec.layers(); ++l) {
    const std::size_t o = 2 + 3 * (l - 1);
    h = add_bias(matmul(h, params[o]) + matmul(z, params[o + 1]), params[o + 2]);
    h = activate(h, l + 1 == spec.layers() ? spec.output : spec.hidden);
  }
  return h;
}

std::vector<Tensor> Decoder::init(Rng& rng) const {
  return kind == DecoderKind::Mlp ? init_mlp(spec, rng) : init_skip(spec, rng);
}

std::vector<std::string> Decoder::param_names() const {
  return kind == DecoderKind::Mlp ? mlp_param_names(spec, "decoder")
                                  : skip_param_names(spec, "decoder");
}

std::size_t Decoder::param_count() const {
  return kind == DecoderKind::Mlp ? 2 * spec.layers() : 2 + 3 * (spec.layers() - 1);
}

Var Decoder::forward(std::span<const Var> params, Var z) const {
  return kind == DecoderKind::Mlp ? mlp_forward(spec, params, z)
                                  : skip_forward(spec, params, z);
}

Tensor GaussianDiag::stddev() const {
  Tensor s = log_var;
  for (auto& v : s.values()) v = std::exp(0.5 * v);
  return s;
}

Tensor GaussianDiag::reparam(const Tensor& eps) const {
  if (eps.shape() != mean.shape()) {
    throw ShapeError("gaussian_diag: eps " + shape_string(eps.shape()) + " vs mean " +
                     shape_string(mean.shape()));
  }
  Tensor z = mean;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * log_var[i]) * eps[i];
  return z;
}

Tensor GaussianDiag::sample(Rng& rng) const { return reparam(rng.normal(mean.shape())); }

Tensor GaussianDiag::log_density(const Tensor& z) const {
  if (z.shape() != mean.shape()) {
    throw ShapeError("gaussian_diag: z " + shape_string(z.shape()) + " vs mean " +
                     shape_string(mean.shape()));
  }
  const std::size_t d = mean.rank() == 0 ? 1 : mean.shape().back();
  const std::size_t rows = mean.size() / d;
  Shape out_shape(mean.shape().begin(), mean.shape().end() - (mean.rank() ? 1 : 0));
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      const double diff = z[i] - mean[i];
      s += diff * diff * std::exp(-log_var[i]) + log_var[i];
    }
    out[r] = -0.5 * (s + static_cast<double>(d) * kLog2Pi);
  }
  return out;
}

Var gaussian_diag_log_density(Var z, Var mean, Var log_var) {
  const double d = static_cast<double>(z.shape().back());
  const Var quad = square(z - mean) * exp(-log_var) + log_var;
  return add_scalar(-0.5 * sum_last(quad), -0.5 * d * kLog2Pi);
}

Var standard_normal_log_density(Var z) {
  const double d = static_cast<double>(z.shape().back());
  return add_scalar(-0.5 * sum_last(square(z)), -0.5 * d * kLog2Pi);
}

std::vector<Tensor> Encoder::init(Rng& rng) const {
  if (trunk.empty()) throw ShapeError("encoder: trunk must start with the data dimension");
  std::vector<Tensor> params;
  for (std::size_t l = 0; l + 1 < trunk.size(); ++l) {
    params.push_back(uniform_weight(trunk[l], trunk[l + 1], rng));
    params.push_back(Tensor::zeros({trunk[l + 1]}));
  }
  for (int head = 0; head < 2; ++head) {
    params.push_back(uniform_weight(trunk.back(), latent, rng));
    params.push_back(Tensor::zeros({latent}));
  }
  return params;
}

std::vector<std::string> Encoder::param_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l + 1 < trunk.size(); ++l) {
    names.push_back("encoder.layer" + std::to_string(l) + ".weight");
    names.push_back("encoder.layer" + std::to_string(l) + ".bias");
  }
  for (const char* head : {"mean", "var"}) {
    names.push_back(std::string("encoder.") + head + ".weight");
    names.push_back(std::string("encoder.") + head + ".bias");
  }
  return names;
}

std::size_t Encoder::param_count() const { return 2 * (trunk.size() - 1) + 4; }

std::pair<Var, Var> Encoder::forward(std::span<const Var> params, Var x) const {
  check_param_count(params, param_count(), "encoder");
  Var h = x;
  std::size_t p = 0;
  for (std::size_t l = 0; l + 1 < trunk.size(); ++l, p += 2) {
    h = activate(affine(h, params[p], params[p + 1]), hidden);
  }
  const Var mu = affine(h, params[p], params[p + 1]);
  const Var var = softplus(affine(h, params[p + 2], params[p + 3]));
  return {mu, log(var)};
}

GaussianDiag Encoder::encode(std::span<const Tensor> params, const Tensor& x) const {
  Tape tape;
  const auto vars = bind_params(tape, params, false);
  const auto [mu, log_var] = forward(vars, tape.constant(x));
  return GaussianDiag{mu.value(), log_var.value()};
}

LatentModel LatentModel::make(DecoderKind kind, std::vector<std::size_t> widths,
                              Likelihood lik, Activation hidden) {
  LatentModel m;
  m.decoder.kind = kind;
  m.decoder.spec.widths = std::move(widths);
  m.decoder.spec.hidden = hidden;
  m.decoder.spec.validate();
  m.d_z = m.decoder.spec.widths.front();
  m.d_x = m.decoder.spec.widths.back();
  m.likelihood = lik;
  return m;
}

std::vector<Tensor> LatentModel::init(Rng& rng) const {
  auto params = decoder.init(rng);
  if (likelihood == Likelihood::Gaussian) params.push_back(Tensor::zeros({d_x}));
  return params;
}

std::vector<std::string> LatentModel::param_names() const {
  auto names = decoder.param_names();
  if (likelihood == Likelihood::Gaussian) names.push_back("likelihood.log_sigma");
  return names;
}

std::size_t LatentModel::param_count() const {
  return decoder.param_count() + (likelihood == Likelihood::Gaussian ? 1 : 0);
}

Var LatentModel::natural_params(std::span<const Var> params, Var z) const {
  check_param_count(params, param_count(), "latent_model");
  return decoder.forward(params.subspan(0, decoder.param_count()), z);
}

Var LatentModel::log_likelihood(std::span<const Var> params, Var z, Var x) const {
  const Var eta = natural_params(params, z);
  if (eta.shape() != x.shape()) {
    throw ShapeError("log_likelihood: decoder output " + shape_string(eta.shape()) +
                     " vs data " + shape_string(x.shape()));
  }
  switch (likelihood) {
    case Likelihood::Gaussian: {
      const Var log_sigma = params.back();
      const Var scaled = mul_row(x - eta, exp(-log_sigma));
      const Var per_dim = add_bias(-0.5 * square(scaled), -log_sigma);
      return add_scalar(sum_last(per_dim), -0.5 * static_cast<double>(d_x) * kLog2Pi);
    }
    case Likelihood::Bernoulli:
      for (double v : x.value().data()) {
        if (v != 0.0 && v != 1.0) throw DomainError("bernoulli likelihood: x must be 0/1");
      }
      return sum_last(x * eta - softplus(eta));
    case Likelihood::Poisson: {
      Tensor log_fact(Shape{x.value().rows()});
      const std::size_t cols = x.value().cols();
      for (std::size_t r = 0; r < log_fact.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double k = x.value()[r * cols + c];
          if (k < 0.0 || k != std::floor(k)) {
            throw DomainError("poisson likelihood: x must be a non-negative integer");
          }
          log_fact[r] += std::lgamma(k + 1.0);
        }
      }
      return sum_last(x * eta - exp(eta)) - x.tape()->constant(log_fact);
    }
  }
  throw std::logic_error("latent_model: unknown likelihood");
}

Var LatentModel::log_joint(std::span<const Var> params, Var z, Var x) const {
  return standard_normal_log_density(z) + log_likelihood(params, z, x);
}

Tensor LatentModel::log_joint(std::span<const Tensor> params, const Tensor& z,
                              const Tensor& x) const {
  Tape tape;
  const auto vars = bind_params(tape, params, false);
  return log_joint(vars, tape.constant(z), tape.constant(x)).value();
}

Tensor LatentModel::grad_z_log_joint(std::span<const Tensor> params, const Tensor& z,
                                     const Tensor& x) const {
  Tape tape;
  const auto vars = bind_params(tape, params, false);
  const Var zv = tape.leaf(z);
  tape.backward(sum(log_joint(vars, zv, tape.constant(x))));
  return tape.grad(zv);
}

LinearGaussian LinearGaussian::orthogonal(std::size_t d_z, std::size_t d_x,
                                          std::span<const double> row_norms,
                                          double noise_var, Rng& rng) {
  if (d_z > d_x || row_norms.size() != d_z || !(noise_var > 0.0)) {
    throw DomainError("linear_gaussian: need d_z <= d_x, one norm per row, noise_var > 0");
  }
  Tensor beta = rng.normal({d_z, d_x});
  for (std::size_t i = 0; i < d_z; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d_x; ++j) dot += beta.at(i, j) * beta.at(k, j);
      for (std::size_t j = 0; j < d_x; ++j) beta.at(i, j) -= dot * beta.at(k, j);
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < d_x; ++j) norm += beta.at(i, j) * beta.at(i, j);
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d_x; ++j) beta.at(i, j) /= norm;
  }
  for (std::size_t i = 0; i < d_z; ++i) {
    for (std::size_t j = 0; j < d_x; ++j) beta.at(i, j) *= row_norms[i];
  }
  LinearGaussian lg;
  lg.beta = std::move(beta);
  lg.bias = rng.normal({d_x});
  lg.noise_var = Tensor({d_x}, noise_var);
  return lg;
}

Tensor LinearGaussian::marginal_cov() const {
  Tensor c = matmul(transpose(beta), beta);
  for (std::size_t j = 0; j < d_x(); ++j) c.at(j, j) += noise_var[j];
  return c;
}

double LinearGaussian::log_marginal(std::span<const double> x) const {
  return mvn_log_density(x, bias.data(), marginal_cov());
}

Tensor LinearGaussian::posterior_precision() const {
  Tensor scaled = beta;
  for (std::size_t i = 0; i < d_z(); ++i) {
    for (std::size_t j = 0; j < d_x(); ++j) scaled.at(i, j) /= noise_var[j];
  }
  Tensor p = matmul(scaled, transpose(beta));
  for (std::size_t i = 0; i < d_z(); ++i) p.at(i, i) += 1.0;
  return p;
}

Tensor LinearGaussian::posterior_cov() const { return inverse_spd(posterior_precision()); }

Tensor LinearGaussian::posterior_mean(std::span<const double> x) const {
  if (x.size() != d_x()) throw ShapeError("linear_gaussian: x has wrong size");
  Tensor rhs({d_z()});
  for (std::size_t i = 0; i < d_z(); ++i) {
    for (std::size_t j = 0; j < d_x(); ++j) {
      rhs[i] += beta.at(i, j) * (x[j] - bias[j]) / noise_var[j];
    }
  }
  return solve_spd(posterior_precision(), rhs);
}

double LinearGaussian::log_joint(std::span<const double> x, std::span<const double> z) const {
  if (x.size() != d_x() || z.size() != d_z()) {
    throw ShapeError("linear_gaussian: x or z has wrong size");
  }
  double lp = -0.5 * static_cast<double>(d_z() + d_x()) * kLog2Pi;
  for (double v : z) lp -= 0.5 * v * v;
  for (std::size_t j = 0; j < d_x(); ++j) {
    double m = bias[j];
    for (std::size_t i = 0; i < d_z(); ++i) m += z[i] * beta.at(i, j);
    lp -= 0.5 * ((x[j] - m) * (x[j] - m) / noise_var[j] + std::log(noise_var[j]));
  }
  return lp;
}

double LinearGaussian::log_posterior(std::span<const double> x,
                                     std::span<const double> z) const {
  const Tensor m = posterior_mean(x);
  return mvn_log_density(z, m.data(), posterior_cov());
}

Tensor LinearGaussian::sample_x(std::size_t n, Rng& rng) const {
  Tensor x({n, d_x()});
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> z(d_z());
    for (auto& v : z) v = rng.normal();
    for (std::size_t j = 0; j < d_x(); ++j) {
      double m = bias[j];
      for (std::size_t i = 0; i < d_z(); ++i) m += z[i] * beta.at(i, j);
      x.at(r, j) = m + std::sqrt(noise_var[j]) * rng.normal();
    }
  }
  return x;
}

LatentModel LinearGaussian::as_latent_model() const {
  return LatentModel::make(DecoderKind::Mlp, {d_z(), d_x()}, Likelihood::Gaussian);
}

std::vector<Tensor> LinearGaussian::latent_model_params() const {
  Tensor log_sigma = noise_var;
  for (auto& v : log_sigma.values()) v = 0.5 * std::log(v);
  return {beta, bias, log_sigma};
}

LinearGaussian LinearGaussian::from_latent_params(std::span<const Tensor> params) {
  if (params.size() != 3 || params[0].rank() != 2) {
    throw ShapeError("linear_gaussian: expects {beta [d_z, d_x], bias, log_sigma}");
  }
  Tensor noise = params[2];
  for (auto& v : noise.values()) v = std::exp(2.0 * v);
  return LinearGaussian{params[0], params[1], noise};
}

Encoder LinearGaussian::exact_encoder() const {
  Encoder e;
  e.trunk = {d_x()};
  e.latent = d_z();
  return e;
}

std::vector<Tensor> LinearGaussian::exact_encoder_params() const {
  const Tensor cov = posterior_cov();
  for (std::size_t i = 0; i < d_z(); ++i) {
    for (std::size_t k = 0; k < d_z(); ++k) {
      if (i != k && std::abs(cov.at(i, k)) > 1e-12) {
        throw DomainError("linear_gaussian: posterior covariance is not diagonal");
      }
    }
  }
  // mean(x) = (x - b) W with W = diag(1/s2) beta^T cov.
  Tensor scaled_t = transpose(beta);
  for (std::size_t j = 0; j < d_x(); ++j) {
    for (std::size_t i = 0; i < d_z(); ++i) scaled_t.at(j, i) /= noise_var[j];
  }
  const Tensor w = matmul(scaled_t, cov);
  Tensor b({d_z()});
  for (std::size_t i = 0; i < d_z(); ++i) {
    for (std::size_t j = 0; j < d_x(); ++j) b[i] -= bias[j] * w.at(j, i);
  }
  Tensor var_bias({d_z()});
  for (std::size_t i = 0; i < d_z(); ++i) var_bias[i] = softplus_inverse(cov.at(i, i));
  return {w, b, Tensor::zeros({d_x(), d_z()}), var_bias};
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw DomainError("softplus_inverse: y must be positive");
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

}  // namespace dpgm

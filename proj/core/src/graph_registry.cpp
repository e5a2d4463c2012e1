// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/graph_registry.hpp"

#include <algorithm>
#include <cmath>

#include "dpgm/etm.hpp"
#include "dpgm/expfam.hpp"
#include "dpgm/models.hpp"
#include "dpgm/presgan.hpp"
#include "dpgm/rem.hpp"
#include "dpgm/vi.hpp"

namespace dpgm {

namespace {

// Projects a tensor-valued op to a scalar with fixed random weights.
Var weighted(Tape& tape, Var v, const Tensor& w) { return sum(v * tape.constant(w)); }

// Normal draws pushed at least `gap` away from zero (keeps kinks and poles out
// of the finite-difference stencil).
Tensor away_from_zero(Shape shape, double gap, Rng& rng) {
  Tensor t = rng.normal(std::move(shape));
  for (auto& v : t.values()) v = std::copysign(gap + std::abs(v), v);
  return t;
}

Tensor positive(Shape shape, double lo, double hi, Rng& rng) {
  return rng.uniform(std::move(shape), lo, hi);
}

using Unary = Var (*)(Var);

void add_unary(std::vector<RegisteredGraph>& out, const std::string& name, Unary f,
               Tensor x, Rng& rng) {
  const Tensor w = rng.normal(x.shape());
  out.push_back({name,
                 [f, w](Tape& t, std::span<const Var> in) { return weighted(t, f(in[0]), w); },
                 {std::move(x)}});
}

std::vector<Tensor> concat_params(std::vector<Tensor> a, const std::vector<Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

std::vector<RegisteredGraph> registered_graphs(Rng& rng) {
  std::vector<RegisteredGraph> g;
  const Shape m{3, 4};

  // Elementwise binary ops and affine maps.
  {
    const Tensor w = rng.normal(m);
    g.push_back({"add",
                 [w](Tape& t, std::span<const Var> in) { return weighted(t, in[0] + in[1], w); },
                 {rng.normal(m), rng.normal(m)}, true});
    g.push_back({"sub",
                 [w](Tape& t, std::span<const Var> in) { return weighted(t, in[0] - in[1], w); },
                 {rng.normal(m), rng.normal(m)}, true});
    g.push_back({"mul",
                 [w](Tape& t, std::span<const Var> in) { return weighted(t, in[0] * in[1], w); },
                 {rng.normal(m), rng.normal(m)}, true});
    g.push_back({"div",
                 [w](Tape& t, std::span<const Var> in) { return weighted(t, in[0] / in[1], w); },
                 {rng.normal(m), away_from_zero(m, 0.5, rng)}});
    g.push_back({"neg", [w](Tape& t, std::span<const Var> in) { return weighted(t, -in[0], w); },
                 {rng.normal(m)}, true});
    g.push_back({"scale",
                 [w](Tape& t, std::span<const Var> in) { return weighted(t, 2.5 * in[0], w); },
                 {rng.normal(m)}, true});
    g.push_back({"add_scalar",
                 [w](Tape& t, std::span<const Var> in) { return weighted(t, in[0] + 1.5, w); },
                 {rng.normal(m)}, true});
    const Tensor w2 = rng.normal({3, 5});
    g.push_back({"matmul",
                 [w2](Tape& t, std::span<const Var> in) {
                   return weighted(t, matmul(in[0], in[1]), w2);
                 },
                 {rng.normal(m), rng.normal({4, 5})}, true});
    const Tensor wt = rng.normal({4, 3});
    g.push_back({"transpose",
                 [wt](Tape& t, std::span<const Var> in) { return weighted(t, transpose(in[0]), wt); },
                 {rng.normal(m)}, true});
  }

  // Elementwise unary ops.
  add_unary(g, "tanh", &tanh, rng.normal(m), rng);
  add_unary(g, "sigmoid", &sigmoid, rng.normal(m), rng);
  add_unary(g, "softplus", &softplus, rng.normal(m), rng);
  add_unary(g, "relu", &relu, away_from_zero(m, 0.1, rng), rng);
  add_unary(g, "exp", &exp, rng.normal(m), rng);
  add_unary(g, "log", &log, positive(m, 0.5, 2.0, rng), rng);
  add_unary(g, "square", &square, rng.normal(m), rng);
  add_unary(g, "sqrt", &sqrt, positive(m, 0.5, 2.0, rng), rng);
  add_unary(g, "log_sigmoid", &log_sigmoid, rng.normal(m), rng);

  // Reductions and normalisations over the last axis.
  add_unary(g, "softmax", &softmax, rng.normal(m), rng);
  add_unary(g, "log_softmax", &log_softmax, rng.normal(m), rng);
  {
    const Tensor w3 = rng.normal({3});
    g.push_back({"logsumexp",
                 [w3](Tape& t, std::span<const Var> in) { return weighted(t, logsumexp(in[0]), w3); },
                 {rng.normal(m)}});
    g.push_back({"sum_last",
                 [w3](Tape& t, std::span<const Var> in) { return weighted(t, sum_last(in[0]), w3); },
                 {rng.normal(m)}, true});
    g.push_back({"mean", [](Tape&, std::span<const Var> in) { return mean(in[0]); },
                 {rng.normal(m)}, true});
  }

  // Broadcasts and structural ops.
  {
    const Tensor w = rng.normal(m);
    g.push_back({"add_bias",
                 [w](Tape& t, std::span<const Var> in) { return weighted(t, add_bias(in[0], in[1]), w); },
                 {rng.normal(m), rng.normal({4})}, true});
    g.push_back({"mul_row",
                 [w](Tape& t, std::span<const Var> in) { return weighted(t, mul_row(in[0], in[1]), w); },
                 {rng.normal(m), rng.normal({4})}, true});
    const Tensor wc = rng.normal({3, 6});
    g.push_back({"concat",
                 [wc](Tape& t, std::span<const Var> in) {
                   const Var parts[] = {in[0], in[1]};
                   return weighted(t, concat(parts), wc);
                 },
                 {rng.normal({3, 2}), rng.normal(m)}, true});
    const Tensor ws = rng.normal({4, 2});
    g.push_back({"slice",
                 [ws](Tape& t, std::span<const Var> in) { return weighted(t, slice(in[0], 1, 3), ws); },
                 {rng.normal({4, 4})}, true});
    const Tensor wr = rng.normal({2, 6});
    g.push_back({"reshape",
                 [wr](Tape& t, std::span<const Var> in) {
                   return weighted(t, reshape(in[0], {2, 6}), wr);
                 },
                 {rng.normal(m)}, true});
  }

  // Exponential-family log normalizers.
  {
    const ExpFamSpec fams[] = {ExpFamSpec::bernoulli(), ExpFamSpec::poisson(),
                               ExpFamSpec::categorical(4)};
    for (const auto& spec : fams) {
      g.push_back({std::string("log_normalizer_") + family_name(spec.family),
                   [spec](Tape&, std::span<const Var> in) { return log_normalizer(spec, in[0]); },
                   {rng.normal({spec.param_size()})}});
    }
    Tensor eta = Tensor::vector({0.7, -0.8});
    g.push_back({"log_normalizer_gaussian",
                 [](Tape&, std::span<const Var> in) {
                   return log_normalizer(ExpFamSpec::gaussian(), in[0]);
                 },
                 {eta}});
  }

  // MLP and skip decoders, encoder, diagonal Gaussian density.
  {
    const MlpSpec spec{{3, 5, 4, 2}};
    const auto params = init_mlp(spec, rng);
    const Tensor w = rng.normal({4, 2});
    g.push_back({"mlp_forward",
                 [spec, w](Tape& t, std::span<const Var> in) {
                   return weighted(t, mlp_forward(spec, in.subspan(1), in[0]), w);
                 },
                 concat_params({rng.normal({4, 3})}, params)});
    auto skip = init_skip(spec, rng);
    for (auto& p : skip) p = rng.normal(p.shape()) * 0.5;
    g.push_back({"skip_forward",
                 [spec, w](Tape& t, std::span<const Var> in) {
                   return weighted(t, skip_forward(spec, in.subspan(1), in[0]), w);
                 },
                 concat_params({rng.normal({4, 3})}, skip)});

    Encoder enc;
    enc.trunk = {4, 6};
    enc.latent = 2;
    const Tensor wm = rng.normal({3, 2});
    const Tensor wv = rng.normal({3, 2});
    g.push_back({"encoder_forward",
                 [enc, wm, wv](Tape& t, std::span<const Var> in) {
                   const auto [mu, lv] = enc.forward(in.subspan(1), in[0]);
                   return weighted(t, mu, wm) + weighted(t, lv, wv);
                 },
                 concat_params({rng.normal({3, 4})}, enc.init(rng))});
    g.push_back({"gaussian_diag_log_density",
                 [](Tape&, std::span<const Var> in) {
                   return sum(gaussian_diag_log_density(in[0], in[1], in[2]));
                 },
                 {rng.normal(m), rng.normal(m), rng.normal(m) * 0.3}});
  }

  // Latent-variable models, ELBO and IWAE.
  {
    for (Likelihood lik : {Likelihood::Gaussian, Likelihood::Bernoulli, Likelihood::Poisson}) {
      const LatentModel model = LatentModel::make(DecoderKind::Mlp, {2, 4, 3}, lik);
      auto params = model.init(rng);
      Tensor x(Shape{3, 3});
      for (auto& v : x.values()) {
        v = lik == Likelihood::Gaussian ? rng.normal()
            : lik == Likelihood::Bernoulli ? static_cast<double>(rng.below(2))
                                           : static_cast<double>(rng.below(4));
      }
      const char* names[] = {"log_joint_gaussian", "log_joint_bernoulli", "log_joint_poisson"};
      g.push_back({names[static_cast<int>(lik)],
                   [model, x](Tape& t, std::span<const Var> in) {
                     return sum(model.log_joint(in.subspan(1), in[0], t.constant(x)));
                   },
                   concat_params({rng.normal({3, 2})}, params)});
    }

    const LatentModel model = LatentModel::make(DecoderKind::Skip, {2, 4, 3}, Likelihood::Gaussian);
    Encoder enc;
    enc.trunk = {3, 4};
    enc.latent = 2;
    const std::size_t np = model.param_count();
    const Tensor x = rng.normal({3, 3});
    const std::vector<Tensor> eps{rng.normal({3, 2}), rng.normal({3, 2})};
    g.push_back({"elbo",
                 [model, enc, np, x, eps](Tape& t, std::span<const Var> in) {
                   return elbo_graph(model, in.subspan(0, np), enc, in.subspan(np),
                                     t.constant(x), eps);
                 },
                 concat_params(model.init(rng), enc.init(rng))});

    const Tensor x1 = rng.normal({1, 3});
    const Tensor particles = rng.normal({6, 2});
    const Tensor log_q = rng.normal({6});
    g.push_back({"iwae_bound",
                 [model, x1, particles, log_q](Tape&, std::span<const Var> in) {
                   return iwae_bound_graph(model, in, x1, particles, log_q);
                 },
                 model.init(rng)});

    // Weighted log-joint and proposal objectives used by REM.
    Tensor alpha(Shape{6});
    double total = 0.0;
    for (auto& a : alpha.values()) total += (a = rng.uniform());
    alpha *= 1.0 / total;
    const Tensor x_rep = [&] {
      Tensor r(Shape{6, 3});
      for (std::size_t k = 0; k < 6; ++k) std::ranges::copy(x1.row(0), r.row(k).begin());
      return r;
    }();
    g.push_back({"rem_weighted_log_joint",
                 [model, x_rep, particles, alpha](Tape& t, std::span<const Var> in) {
                   return sum(model.log_joint(in, t.constant(particles), t.constant(x_rep)) *
                              t.constant(alpha));
                 },
                 model.init(rng)});
    g.push_back({"rem_proposal_objective",
                 [enc, x_rep, particles, alpha](Tape& t, std::span<const Var> in) {
                   const auto [mu, lv] = enc.forward(in, t.constant(x_rep));
                   return -1.0 * sum(gaussian_diag_log_density(t.constant(particles), mu, lv) *
                                     t.constant(alpha));
                 },
                 enc.init(rng)});
  }

  // GAN losses and the PresGAN generator surrogate.
  {
    const MlpSpec dspec{{2, 5, 1}};
    const MlpSpec gspec{{3, 5, 2}};
    const auto dparams = init_mlp(dspec, rng);
    const std::size_t nd = dparams.size();
    g.push_back({"gan_loss",
                 [dspec, nd](Tape&, std::span<const Var> in) {
                   return gan_loss(dspec, in.subspan(0, nd), in[nd], in[nd + 1]);
                 },
                 concat_params(dparams, {rng.normal({4, 2}), rng.normal({4, 2})})});

    const Tensor z = rng.normal({4, 3});
    const Tensor eps = rng.normal({4, 2});
    const Tensor coeff = rng.normal({4, 2});
    const std::size_t ng = 2 * gspec.layers();
    g.push_back({"presgan_generator_loss",
                 [gspec, dspec, ng, z, eps, coeff](Tape& t, std::span<const Var> in) {
                   const auto gp = in.subspan(0, ng);
                   const Var log_sigma = in[ng];
                   const auto dp = in.subspan(ng + 1);
                   const Var x = generate(gspec, gp, log_sigma, t.constant(z), eps);
                   const Var adv = -1.0 * mean(log_sigmoid(mlp_forward(dspec, dp, x)));
                   const Var ent = 0.25 * sum(t.constant(coeff) * x);
                   return adv - 0.1 * ent + 0.2 * sum(log_sigma);
                 },
                 concat_params(concat_params(init_mlp(gspec, rng), {rng.normal({2}) * 0.3}),
                               init_mlp(dspec, rng))});
  }

  // ETM ELBO and CBOW loss.
  {
    EtmSpec spec;
    spec.topics = 3;
    spec.embed = 4;
    spec.vocab = 8;
    spec.hidden = {6};
    spec.activation = Activation::Tanh;
    Tensor counts(Shape{5, 8}, 0.0);
    for (std::size_t d = 0; d < 5; ++d) {
      for (int i = 0; i < 6; ++i) counts.at(d, rng.below(8)) += 1.0;
    }
    const Tensor eps = rng.normal({5, 3});
    const std::vector<Tensor> enc = spec.encoder().init(rng);
    g.push_back({"etm_elbo",
                 [spec, counts, eps](Tape&, std::span<const Var> in) {
                   return etm_elbo_graph(spec, in[0], in[1], in.subspan(2), counts, eps, 2.0);
                 },
                 concat_params({rng.normal({4, 8}) * 0.5, rng.normal({3, 4}) * 0.5}, enc)});

    Tensor ctx(Shape{4, 8}, 0.0);
    Tensor target(Shape{4, 8}, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
      ctx.at(i, rng.below(8)) += 1.0;
      ctx.at(i, rng.below(8)) += 1.0;
      target.at(i, rng.below(8)) = 1.0;
    }
    g.push_back({"cbow_loss",
                 [ctx, target](Tape& t, std::span<const Var> in) {
                   const Var logp = log_softmax(matmul(matmul(t.constant(ctx), in[0]), in[1]));
                   return -0.25 * sum(logp * t.constant(target));
                 },
                 {rng.normal({8, 4}) * 0.3, rng.normal({4, 8}) * 0.3}});
  }
  return g;
}

std::vector<GraphCheck> check_registered_graphs(Rng& rng, double h) {
  std::vector<GraphCheck> out;
  for (const auto& graph : registered_graphs(rng)) {
    // Five-point differences are exact for polynomials of degree <= 4, so a
    // wide step on multilinear graphs only reduces cancellation error.
    const double step = graph.linear ? std::max(h, 0.1) : h;
    out.push_back({graph.name, graph.linear, check_gradients_detail(graph.build, graph.inputs, step)});
  }
  return out;
}

}  // namespace dpgm

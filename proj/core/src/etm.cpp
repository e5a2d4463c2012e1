// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/etm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <json.hpp>

#include "dpgm/vi.hpp"

namespace dpgm {

namespace {

void softmax_rows(Tensor& t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    const double lse = log_sum_exp(row);
    for (auto& v : row) v = std::exp(v - lse);
  }
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace

void CbowConfig::validate() const {
  if (dim == 0) throw DomainError("cbow: dim must be >= 1");
  if (window == 0) throw DomainError("cbow: window must be >= 1");
  if (epochs == 0 || batch == 0) throw DomainError("cbow: epochs and batch must be >= 1");
}

Tensor CbowModel::predict(std::span<const std::uint32_t> context_words) const {
  const std::size_t l = context.cols();
  Tensor h(Shape{1, l}, 0.0);
  for (auto w : context_words) {
    for (std::size_t j = 0; j < l; ++j) h[j] += context.at(w, j);
  }
  Tensor logits = matmul(h, rho);
  softmax_rows(logits);
  return logits.reshaped({logits.size()});
}

CbowModel train_cbow(const std::vector<std::vector<std::uint32_t>>& streams,
                     std::size_t vocab_size, const CbowConfig& config, Rng& rng) {
  config.validate();
  if (vocab_size == 0) throw DomainError("cbow: empty vocabulary");
  std::size_t longest = 0;
  for (const auto& s : streams) longest = std::max(longest, s.size());
  if (config.window >= longest) {
    throw DomainError("cbow: window " + std::to_string(config.window) +
                      " is not shorter than any document (longest has " +
                      std::to_string(longest) + " tokens)");
  }
  // One example per (document, position).
  std::vector<std::pair<std::size_t, std::size_t>> examples;
  for (std::size_t d = 0; d < streams.size(); ++d) {
    for (std::size_t t = 0; t < streams[d].size(); ++t) {
      if (streams[d][t] >= vocab_size) throw DomainError("cbow: token id out of range");
      if (streams[d].size() > 1) examples.emplace_back(d, t);
    }
  }

  CbowModel model;
  model.context = rng.normal(Shape{vocab_size, config.dim});
  model.context *= 0.1;
  model.rho = rng.normal(Shape{config.dim, vocab_size});
  model.rho *= 0.1;
  AdamState opt(config.adam);
  const std::size_t b = std::min(config.batch, examples.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + b <= examples.size(); start += b) {
      Tensor ctx(Shape{b, vocab_size}, 0.0);
      Tensor target(Shape{b, vocab_size}, 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        const auto [d, t] = examples[start + i];
        const auto& s = streams[d];
        const std::size_t lo = t >= config.window ? t - config.window : 0;
        const std::size_t hi = std::min(s.size() - 1, t + config.window);
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c != t) ctx.at(i, s[c]) += 1.0;
        }
        target.at(i, s[t]) = 1.0;
      }
      Tape tape;
      const Var c = tape.leaf(model.context);
      const Var r = tape.leaf(model.rho);
      const Var logp = log_softmax(matmul(matmul(tape.constant(ctx), c), r));
      const Var loss = -1.0 / static_cast<double>(b) * sum(logp * tape.constant(target));
      tape.backward(loss);
      std::vector<Tensor> params{model.context, model.rho};
      adam_step(params, tape.grads(std::vector<Var>{c, r}), opt);
      model.context = std::move(params[0]);
      model.rho = std::move(params[1]);
      loss_sum += loss.value().item();
      ++batches;
    }
    model.epoch_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  return model;
}

Tensor topics(const Tensor& rho, const Tensor& alpha) {
  Tensor beta = matmul(alpha, rho);
  softmax_rows(beta);
  return beta;
}

Var topics(Var rho, Var alpha) { return softmax(matmul(alpha, rho)); }

Encoder EtmSpec::encoder() const {
  Encoder e;
  e.trunk.push_back(vocab);
  e.trunk.insert(e.trunk.end(), hidden.begin(), hidden.end());
  e.latent = topics;
  e.hidden = activation;
  return e;
}

void EtmSpec::validate() const {
  if (topics == 0 || embed == 0 || vocab == 0) {
    throw DomainError("etm: topics, embed and vocab must be >= 1");
  }
}

EtmModel EtmModel::init(const EtmSpec& spec, Rng& rng) {
  spec.validate();
  EtmModel m;
  m.spec = spec;
  m.rho = rng.normal(Shape{spec.embed, spec.vocab});
  m.rho *= 1.0 / std::sqrt(static_cast<double>(spec.embed));
  m.alpha = rng.normal(Shape{spec.topics, spec.embed});
  m.alpha *= 1.0 / std::sqrt(static_cast<double>(spec.embed));
  m.encoder_params = spec.encoder().init(rng);
  return m;
}

Tensor EtmModel::beta() const { return topics(rho, alpha); }

GaussianDiag EtmModel::infer(const Tensor& counts) const {
  return spec.encoder().encode(encoder_params, normalize_counts(counts));
}

Tensor EtmModel::theta_mean(const Tensor& counts) const {
  Tensor theta = infer(counts).mean;
  softmax_rows(theta);
  return theta;
}

Tensor normalize_counts(const Tensor& counts) {
  Tensor out = counts;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double n = std::accumulate(row.begin(), row.end(), 0.0);
    if (!(n > 0.0)) throw DomainError("etm: empty document in batch (row " + std::to_string(r) + ")");
    for (auto& v : row) v /= n;
  }
  return out;
}

Var etm_elbo_graph(const EtmSpec& spec, Var rho, Var alpha, std::span<const Var> encoder_params,
                   const Tensor& counts, const Tensor& eps, double scale) {
  Tape& tape = *rho.tape();
  const Tensor input = normalize_counts(counts);
  const auto [mu, log_var] = spec.encoder().forward(encoder_params, tape.constant(input));
  const Var delta = mu + exp(0.5 * log_var) * tape.constant(eps);
  const Var theta = softmax(delta);
  const Var beta = topics(rho, alpha);
  const Var rec = sum_last(tape.constant(counts) * log(matmul(theta, beta)));
  return scale * sum(rec - gaussian_kl(mu, log_var));
}

EtmElbo etm_elbo(const EtmModel& model, const Tensor& counts, std::size_t num_docs, Rng& rng) {
  const std::size_t b = counts.rows();
  const double scale = static_cast<double>(num_docs) / static_cast<double>(b);
  Tape tape;
  const Var rho = tape.leaf(model.rho);
  const Var alpha = tape.leaf(model.alpha);
  const auto enc = bind_params(tape, model.encoder_params, true);
  const Tensor eps = rng.normal(Shape{b, model.spec.topics});
  const Var elbo = etm_elbo_graph(model.spec, rho, alpha, enc, counts, eps, scale);
  tape.backward(elbo);

  EtmElbo out;
  out.value = elbo.value().item();
  const GaussianDiag q = model.infer(counts);
  const Tensor kl = gaussian_kl(q);
  out.kl = scale * std::accumulate(kl.values().begin(), kl.values().end(), 0.0);
  out.reconstruction = out.value + out.kl;
  out.grad_rho = tape.grad(rho);
  out.grad_alpha = tape.grad(alpha);
  out.grad_encoder = tape.grads(enc);
  return out;
}

void EtmConfig::validate() const {
  spec.validate();
  if (epochs == 0 || batch == 0) throw DomainError("etm: epochs and batch must be >= 1");
  if (!(adam.lr > 0.0)) throw DomainError("etm: learning rate must be > 0");
}

EtmResult train_etm(const Corpus& corpus, const EtmConfig& config, Rng& rng,
                    const std::function<void(const EtmEpoch&)>& on_epoch) {
  corpus.validate();
  EtmConfig cfg = config;
  cfg.spec.vocab = corpus.vocab_size();
  cfg.validate();
  const std::size_t n = corpus.num_docs();
  const std::size_t b = std::min(cfg.batch, n);
  if (n == 0) throw DomainError("etm: empty corpus");

  EtmResult result;
  result.model = EtmModel::init(cfg.spec, rng);
  EtmModel& m = result.model;
  const bool train_rho = cfg.rho_mode == RhoMode::Joint;
  if (!train_rho) {
    if (!corpus.has_tokens()) throw DomainError("etm: prefit embeddings need token streams");
    CbowConfig cb = cfg.cbow;
    cb.dim = cfg.spec.embed;
    m.rho = train_cbow(corpus.tokens, corpus.vocab_size(), cb, rng).rho;
  }

  AdamState opt(cfg.adam);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const double tokens = static_cast<double>(corpus.total_tokens());
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double elbo_sum = 0.0;
    double rec_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t s = 0; s + b <= n; s += b) {
      const Tensor counts = corpus.counts(std::span<const std::size_t>(order).subspan(s, b));
      const double scale = static_cast<double>(n) / static_cast<double>(b);
      Tape tape(cfg.check_finite);
      const Var rho = train_rho ? tape.leaf(m.rho) : tape.constant(m.rho);
      const Var alpha = tape.leaf(m.alpha);
      const auto enc = bind_params(tape, m.encoder_params, true);
      const Tensor eps = rng.normal(Shape{b, cfg.spec.topics});
      const Var elbo = etm_elbo_graph(cfg.spec, rho, alpha, enc, counts, eps, scale);
      const double value = elbo.value().item();
      if (!std::isfinite(value)) {
        throw NumericalError("etm: non-finite ELBO at epoch " + std::to_string(epoch));
      }
      tape.backward(-1.0 * elbo);

      std::vector<Tensor> params;
      std::vector<Tensor> grads;
      if (train_rho) {
        params.push_back(m.rho);
        grads.push_back(tape.grad(rho));
      }
      params.push_back(m.alpha);
      grads.push_back(tape.grad(alpha));
      for (std::size_t i = 0; i < enc.size(); ++i) {
        params.push_back(m.encoder_params[i]);
        grads.push_back(tape.grad(enc[i]));
      }
      for (const auto& g : grads) {
        if (!g.all_finite()) {
          throw NumericalError("etm: non-finite gradient at epoch " + std::to_string(epoch));
        }
      }
      adam_step(params, grads, opt);
      std::size_t p = 0;
      if (train_rho) m.rho = std::move(params[p++]);
      m.alpha = std::move(params[p++]);
      for (auto& e : m.encoder_params) e = std::move(params[p++]);

      // Per-document ELBO and reconstruction for the log (unscaled).
      elbo_sum += value / scale;
      const GaussianDiag q = m.infer(counts);
      const Tensor kl = gaussian_kl(q);
      rec_sum += value / scale + std::accumulate(kl.values().begin(), kl.values().end(), 0.0);
      seen += b;
      if (cfg.on_step) cfg.on_step(m.beta());
    }
    EtmEpoch row;
    row.epoch = epoch;
    row.elbo = elbo_sum / static_cast<double>(seen);
    row.perplexity = std::exp(-rec_sum / (tokens * static_cast<double>(seen) / static_cast<double>(n)));
    row.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

std::string etm_log_csv(const std::vector<EtmEpoch>& log) {
  std::string out = "epoch,elbo,perplexity\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", r.epoch, r.elbo, r.perplexity);
    out += buf;
  }
  return out;
}

std::vector<std::vector<std::uint32_t>> top_words(const Tensor& beta, std::size_t n) {
  const std::size_t v = beta.cols();
  if (n > v) throw DomainError("top_words: n exceeds vocabulary size");
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t k = 0; k < beta.rows(); ++k) {
    const auto row = beta.row(k);
    std::vector<std::uint32_t> ids(v);
    std::iota(ids.begin(), ids.end(), 0u);
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                        return row[a] != row[b] ? row[a] > row[b] : a < b;
                      });
    ids.resize(n);
    out.push_back(std::move(ids));
  }
  return out;
}

double npmi(const CoOccurrence& co, std::uint32_t a, std::uint32_t b) {
  const double d = static_cast<double>(co.num_docs);
  const std::size_t joint = co.joint(a, b);
  if (joint == 0) return -1.0;
  const double pab = static_cast<double>(joint) / d;
  if (pab == 1.0) return 1.0;
  const double pa = static_cast<double>(co.df.at(a)) / d;
  const double pb = static_cast<double>(co.df.at(b)) / d;
  return std::log(pab / (pa * pb)) / -std::log(pab);
}

double topic_coherence(const Tensor& beta, const CoOccurrence& co, std::size_t top_n) {
  if (top_n < 2) throw DomainError("topic_coherence: top_n must be >= 2");
  const auto tops = top_words(beta, top_n);
  double total = 0.0;
  for (const auto& words : tops) {
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      for (std::size_t j = i + 1; j < words.size(); ++j, ++pairs) s += npmi(co, words[i], words[j]);
    }
    total += s / static_cast<double>(pairs);
  }
  return total / static_cast<double>(tops.size());
}

double topic_diversity(const Tensor& beta, std::size_t top_n) {
  const auto tops = top_words(beta, top_n);
  std::set<std::uint32_t> unique;
  for (const auto& words : tops) unique.insert(words.begin(), words.end());
  return static_cast<double>(unique.size()) / static_cast<double>(top_n * tops.size());
}

CompletionScore document_completion_loglik(const Tensor& beta, const Tensor& theta,
                                           const Corpus& test) {
  if (theta.rows() != test.num_docs() || theta.cols() != beta.rows()) {
    throw ShapeError("document_completion: theta " + shape_string(theta.shape()) +
                     " does not match corpus and topics");
  }
  CompletionScore score;
  double total = 0.0;
  for (std::size_t d = 0; d < test.num_docs(); ++d) {
    const auto toks = test.doc_tokens(d);
    if (toks.size() < 2) throw DomainError("document_completion: document with < 2 tokens");
    for (std::size_t i = toks.size() / 2; i < toks.size(); ++i) {
      double p = 0.0;
      for (std::size_t k = 0; k < beta.rows(); ++k) p += theta.at(d, k) * beta.at(k, toks[i]);
      total += std::log(p);
      ++score.tokens;
    }
  }
  score.per_word = total / static_cast<double>(score.tokens);
  score.perplexity = std::exp(-score.per_word);
  return score;
}

CompletionScore document_completion_loglik(const EtmModel& model, const Corpus& test) {
  const std::size_t v = test.vocab_size();
  Tensor first(Shape{test.num_docs(), v}, 0.0);
  for (std::size_t d = 0; d < test.num_docs(); ++d) {
    const auto toks = test.doc_tokens(d);
    if (toks.size() < 2) throw DomainError("document_completion: document with < 2 tokens");
    for (std::size_t i = 0; i < toks.size() / 2; ++i) first.at(d, toks[i]) += 1.0;
  }
  return document_completion_loglik(model.beta(), model.theta_mean(first), test);
}

TopicMatch greedy_topic_match(const Tensor& estimated, const Tensor& reference) {
  if (estimated.cols() != reference.cols()) {
    throw ShapeError("topic match: vocabulary sizes differ");
  }
  const std::size_t ke = estimated.rows();
  const std::size_t kr = reference.rows();
  std::vector<double> sim(ke * kr);
  for (std::size_t i = 0; i < ke; ++i) {
    for (std::size_t j = 0; j < kr; ++j) sim[i * kr + j] = cosine(estimated.row(i), reference.row(j));
  }
  TopicMatch m;
  m.assignment.assign(ke, kr);
  m.cosine.assign(ke, 0.0);
  std::vector<bool> used_e(ke, false), used_r(kr, false);
  const std::size_t pairs = std::min(ke, kr);
  double total = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    double best = -2.0;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < ke; ++i) {
      if (used_e[i]) continue;
      for (std::size_t j = 0; j < kr; ++j) {
        if (!used_r[j] && sim[i * kr + j] > best) {
          best = sim[i * kr + j];
          bi = i;
          bj = j;
        }
      }
    }
    used_e[bi] = used_r[bj] = true;
    m.assignment[bi] = bj;
    m.cosine[bi] = best;
    total += best;
  }
  m.mean_cosine = total / static_cast<double>(pairs);
  return m;
}

TopicReport topic_report(const Tensor& beta, const Corpus& corpus, std::size_t words) {
  TopicReport r;
  const CoOccurrence co = co_occurrence(corpus);
  for (const auto& ids : top_words(beta, std::min(words, beta.cols()))) {
    std::vector<std::string> w;
    for (auto id : ids) w.push_back(corpus.vocab.at(id));
    r.top_words.push_back(std::move(w));
  }
  r.coherence = topic_coherence(beta, co, std::min<std::size_t>(10, beta.cols()));
  r.diversity = topic_diversity(beta, std::min<std::size_t>(25, beta.cols()));
  r.quality = std::exp(r.coherence * r.diversity);
  return r;
}

std::string topic_report_json(const TopicReport& report) {
  nlohmann::json j;
  j["topics"] = report.top_words;
  j["tc"] = report.coherence;
  j["td"] = report.diversity;
  j["quality"] = report.quality;
  return j.dump(2) + "\n";
}

}  // namespace dpgm

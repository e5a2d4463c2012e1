// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpgm/adam.hpp"
#include "dpgm/corpus.hpp"
#include "dpgm/models.hpp"

namespace dpgm {

/// Continuous bag of words with a full softmax: the target word is drawn from
/// softmax(rho^T sum_{c in context} alpha_c).
struct CbowConfig {
  std::size_t dim = 16;
  std::size_t window = 2;
  std::size_t epochs = 20;
  std::size_t batch = 256;
  AdamConfig adam{1e-2, 0.9, 0.999, 1e-8};

  void validate() const;
};

struct CbowModel {
  Tensor context;  // [V, L], one vector per context word
  Tensor rho;      // [L, V], word embeddings
  std::vector<double> epoch_loss;

  /// Predictive distribution over the vocabulary for a context.
  Tensor predict(std::span<const std::uint32_t> context_words) const;
};

/// Throws DomainError when the window is at least as long as every document.
CbowModel train_cbow(const std::vector<std::vector<std::uint32_t>>& streams,
                     std::size_t vocab_size, const CbowConfig& config, Rng& rng);

/// beta = row-softmax(alpha rho): [K, L] x [L, V] -> [K, V].
Tensor topics(const Tensor& rho, const Tensor& alpha);
Var topics(Var rho, Var alpha);

struct EtmSpec {
  std::size_t topics = 3;
  std::size_t embed = 16;
  std::size_t vocab = 0;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::Relu;

  /// Inference network: normalized bag of words -> (mu, log sigma^2) over K.
  Encoder encoder() const;
  void validate() const;
};

struct EtmModel {
  EtmSpec spec;
  Tensor rho;    // [L, V]
  Tensor alpha;  // [K, L]
  std::vector<Tensor> encoder_params;

  static EtmModel init(const EtmSpec& spec, Rng& rng);

  Tensor beta() const;
  /// Variational posterior over delta for rows of a count matrix.
  GaussianDiag infer(const Tensor& counts) const;
  /// softmax of the variational mean of delta.
  Tensor theta_mean(const Tensor& counts) const;
};

/// Row-normalizes counts (the inference network input).
Tensor normalize_counts(const Tensor& counts);

/// scale * sum over the batch of [sum_v counts_v log (theta beta)_v - KL],
/// theta = softmax(mu + sigma eps).
Var etm_elbo_graph(const EtmSpec& spec, Var rho, Var alpha, std::span<const Var> encoder_params,
                   const Tensor& counts, const Tensor& eps, double scale);

struct EtmElbo {
  double value = 0.0;           // scaled by D / |B|
  double reconstruction = 0.0;  // same scaling
  double kl = 0.0;              // same scaling
  Tensor grad_rho;
  Tensor grad_alpha;
  std::vector<Tensor> grad_encoder;
};

/// Minibatch ELBO with one reparameterized draw and its gradients.
EtmElbo etm_elbo(const EtmModel& model, const Tensor& counts, std::size_t num_docs, Rng& rng);

enum class RhoMode { Prefit, Joint };

struct EtmConfig {
  EtmSpec spec;
  RhoMode rho_mode = RhoMode::Joint;
  CbowConfig cbow;
  std::size_t epochs = 200;
  std::size_t batch = 100;
  AdamConfig adam{5e-3, 0.9, 0.999, 1e-8};
  bool check_finite = false;
  /// Called after every step with the current topics; used to audit the
  /// simplex invariant.
  std::function<void(const Tensor& beta)> on_step;

  void validate() const;
};

struct EtmEpoch {
  std::size_t epoch = 0;
  double elbo = 0.0;        // per document
  double perplexity = 0.0;  // exp(-reconstruction / tokens)
  double wallclock_s = 0.0;
};

struct EtmResult {
  EtmModel model;
  std::vector<EtmEpoch> log;
};

EtmResult train_etm(const Corpus& corpus, const EtmConfig& config, Rng& rng,
                    const std::function<void(const EtmEpoch&)>& on_epoch = {});

std::string etm_log_csv(const std::vector<EtmEpoch>& log);

/// Indices of the n largest entries of each row, descending, ties by id.
std::vector<std::vector<std::uint32_t>> top_words(const Tensor& beta, std::size_t n);

/// Normalized PMI from document co-occurrence. 1 when both words appear in
/// every document, -1 when they never co-occur.
double npmi(const CoOccurrence& co, std::uint32_t a, std::uint32_t b);
double topic_coherence(const Tensor& beta, const CoOccurrence& co, std::size_t top_n = 10);
double topic_diversity(const Tensor& beta, std::size_t top_n = 25);

struct CompletionScore {
  double per_word = 0.0;  // mean log-likelihood of held-out halves
  double perplexity = 0.0;
  std::size_t tokens = 0;
};

/// The first half of each document's tokens sets theta (variational mean),
/// the second half is scored.
CompletionScore document_completion_loglik(const EtmModel& model, const Corpus& test);
/// Same with fixed topics and per-document topic proportions.
CompletionScore document_completion_loglik(const Tensor& beta, const Tensor& theta,
                                           const Corpus& test);

struct TopicMatch {
  std::vector<std::size_t> assignment;  // estimated topic -> reference topic
  std::vector<double> cosine;
  double mean_cosine = 0.0;
};

/// Repeatedly pairs the most similar unmatched rows (cosine similarity).
TopicMatch greedy_topic_match(const Tensor& estimated, const Tensor& reference);

struct TopicReport {
  std::vector<std::vector<std::string>> top_words;
  double coherence = 0.0;
  double diversity = 0.0;
  double quality = 0.0;  // exp(coherence * diversity)
};

TopicReport topic_report(const Tensor& beta, const Corpus& corpus, std::size_t words = 10);
std::string topic_report_json(const TopicReport& report);

}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpgm/rng.hpp"
#include "dpgm/tensor.hpp"

namespace dpgm {

/// Sparse bag of words: (term id, count) with ids ascending and counts >= 1.
struct Document {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> terms;

  std::size_t length() const;
};

/// Vocabulary, bags of words and, optionally, the raw token streams the bags
/// were built from (needed for embedding training and document completion).
struct Corpus {
  std::vector<std::string> vocab;
  std::vector<Document> docs;
  std::vector<std::vector<std::uint32_t>> tokens;

  std::size_t vocab_size() const { return vocab.size(); }
  std::size_t num_docs() const { return docs.size(); }
  bool has_tokens() const { return !tokens.empty(); }
  std::size_t total_tokens() const;
  /// Checks ids < V, counts >= 1, no empty documents, tokens consistent.
  void validate() const;

  /// Dense [rows.size(), V] count matrix for the selected documents.
  Tensor counts(std::span<const std::size_t> rows) const;
  Tensor counts() const;
  /// Token stream of document d: raw tokens when present, otherwise the bag
  /// expanded in id order.
  std::vector<std::uint32_t> doc_tokens(std::size_t d) const;

  Corpus subset(std::span<const std::size_t> rows) const;
};

Document bag_of_words(std::span<const std::uint32_t> tokens);

/// Builds bags from token streams; keeps the streams.
Corpus corpus_from_tokens(std::vector<std::string> vocab,
                          std::vector<std::vector<std::uint32_t>> tokens);

// File formats: vocabulary has one term per line (line index = id);
// documents have one doc per line as space-separated `id:count` pairs; the
// raw-token file has one doc per line of whitespace-separated terms.
std::vector<std::string> parse_vocab(const std::string& text);
std::vector<Document> parse_documents(const std::string& text, std::size_t vocab_size);
std::vector<std::vector<std::uint32_t>> parse_tokens(const std::string& text,
                                                     const std::vector<std::string>& vocab);
std::string format_vocab(const std::vector<std::string>& vocab);
std::string format_documents(const std::vector<Document>& docs);
std::string format_tokens(const Corpus& corpus);

/// Reads vocab and docs files; `tokens_path` may be empty.
Corpus load_corpus(const std::string& vocab_path, const std::string& docs_path,
                   const std::string& tokens_path = "");
void save_corpus(const Corpus& corpus, const std::string& dir);

/// Document frequency of each word and of each word pair.
struct CoOccurrence {
  std::size_t num_docs = 0;
  std::vector<std::size_t> df;  // [V]
  /// Number of documents containing both words.
  std::size_t joint(std::uint32_t a, std::uint32_t b) const;

  std::vector<std::vector<std::uint32_t>> doc_sets;  // sorted unique ids per doc
};

CoOccurrence co_occurrence(const Corpus& corpus);

/// Corpus sampled from known topics: beta_k ~ Dir(topic_concentration),
/// theta_d ~ Dir(doc_concentration), each token draws a topic then a word.
struct PlantedCorpus {
  Corpus corpus;
  Tensor beta;   // [K, V]
  Tensor theta;  // [D, K]
};

struct PlantedSpec {
  std::size_t topics = 3;
  std::size_t vocab = 50;
  std::size_t docs = 500;
  std::size_t doc_length = 80;  // mean; lengths are Poisson, at least 2
  double topic_concentration = 0.05;
  double doc_concentration = 0.3;
};

PlantedCorpus planted_corpus(const PlantedSpec& spec, Rng& rng);

}  // namespace dpgm

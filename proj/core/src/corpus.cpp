// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <unordered_map>

#include "dpgm/expfam.hpp"
#include "dpgm/tensor_io.hpp"

namespace dpgm {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::uint32_t parse_u32(std::string_view s, const std::string& context) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DomainError("corpus: bad integer '" + std::string(s) + "' in " + context);
  }
  return v;
}

}  // namespace

std::size_t Document::length() const {
  std::size_t n = 0;
  for (const auto& [id, c] : terms) n += c;
  return n;
}

std::size_t Corpus::total_tokens() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.length();
  return n;
}

void Corpus::validate() const {
  const std::size_t v = vocab_size();
  if (v == 0) throw DomainError("corpus: empty vocabulary");
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (docs[d].terms.empty()) {
      throw DomainError("corpus: document " + std::to_string(d) + " is empty");
    }
    std::int64_t prev = -1;
    for (const auto& [id, c] : docs[d].terms) {
      if (id >= v) {
        throw DomainError("corpus: document " + std::to_string(d) + " has term id " +
                          std::to_string(id) + " >= V = " + std::to_string(v));
      }
      if (c == 0) throw DomainError("corpus: document " + std::to_string(d) + " has a zero count");
      if (static_cast<std::int64_t>(id) <= prev) {
        throw DomainError("corpus: document " + std::to_string(d) + " term ids not ascending");
      }
      prev = id;
    }
  }
  if (has_tokens()) {
    if (tokens.size() != docs.size()) {
      throw DomainError("corpus: " + std::to_string(tokens.size()) + " token streams for " +
                        std::to_string(docs.size()) + " documents");
    }
    for (std::size_t d = 0; d < docs.size(); ++d) {
      if (tokens[d].size() != docs[d].length()) {
        throw DomainError("corpus: token stream " + std::to_string(d) +
                          " does not match its bag of words");
      }
    }
  }
}

Tensor Corpus::counts(std::span<const std::size_t> rows) const {
  Tensor out(Shape{rows.size(), vocab_size()}, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& [id, c] : docs.at(rows[r]).terms) out.at(r, id) = c;
  }
  return out;
}

Tensor Corpus::counts() const {
  std::vector<std::size_t> all(docs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return counts(all);
}

std::vector<std::uint32_t> Corpus::doc_tokens(std::size_t d) const {
  if (has_tokens()) return tokens.at(d);
  std::vector<std::uint32_t> out;
  for (const auto& [id, c] : docs.at(d).terms) out.insert(out.end(), c, id);
  return out;
}

Corpus Corpus::subset(std::span<const std::size_t> rows) const {
  Corpus out;
  out.vocab = vocab;
  for (std::size_t r : rows) {
    out.docs.push_back(docs.at(r));
    if (has_tokens()) out.tokens.push_back(tokens.at(r));
  }
  return out;
}

Document bag_of_words(std::span<const std::uint32_t> tokens) {
  std::map<std::uint32_t, std::uint32_t> counts;
  for (auto t : tokens) ++counts[t];
  Document doc;
  doc.terms.assign(counts.begin(), counts.end());
  return doc;
}

Corpus corpus_from_tokens(std::vector<std::string> vocab,
                          std::vector<std::vector<std::uint32_t>> tokens) {
  Corpus c;
  c.vocab = std::move(vocab);
  for (const auto& t : tokens) c.docs.push_back(bag_of_words(t));
  c.tokens = std::move(tokens);
  c.validate();
  return c;
}

std::vector<std::string> parse_vocab(const std::string& text) {
  auto lines = split_lines(text);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) throw DomainError("vocab: empty term on line " + std::to_string(i + 1));
  }
  return lines;
}

std::vector<Document> parse_documents(const std::string& text, std::size_t vocab_size) {
  std::vector<Document> docs;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::istringstream in(lines[ln]);
    std::string pair;
    std::map<std::uint32_t, std::uint32_t> terms;
    const std::string where = "documents line " + std::to_string(ln + 1);
    while (in >> pair) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos) throw DomainError("corpus: expected id:count in " + where);
      const auto id = parse_u32(std::string_view(pair).substr(0, colon), where);
      const auto c = parse_u32(std::string_view(pair).substr(colon + 1), where);
      if (id >= vocab_size) {
        throw DomainError("corpus: term id " + std::to_string(id) + " out of range in " + where);
      }
      if (c == 0) throw DomainError("corpus: zero count in " + where);
      terms[id] += c;
    }
    if (terms.empty()) continue;  // blank line
    Document d;
    d.terms.assign(terms.begin(), terms.end());
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<std::vector<std::uint32_t>> parse_tokens(const std::string& text,
                                                     const std::vector<std::string>& vocab) {
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], static_cast<std::uint32_t>(i));
  std::vector<std::vector<std::uint32_t>> out;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::istringstream in(lines[ln]);
    std::string word;
    std::vector<std::uint32_t> doc;
    while (in >> word) {
      const auto it = index.find(word);
      if (it == index.end()) {
        throw DomainError("corpus: unknown token '" + word + "' on tokens line " +
                          std::to_string(ln + 1));
      }
      doc.push_back(it->second);
    }
    if (!doc.empty()) out.push_back(std::move(doc));
  }
  return out;
}

std::string format_vocab(const std::vector<std::string>& vocab) {
  std::string out;
  for (const auto& w : vocab) out += w + "\n";
  return out;
}

std::string format_documents(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    for (std::size_t i = 0; i < d.terms.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(d.terms[i].first) + ":" + std::to_string(d.terms[i].second);
    }
    out += '\n';
  }
  return out;
}

std::string format_tokens(const Corpus& corpus) {
  std::string out;
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    const auto toks = corpus.doc_tokens(d);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i) out += ' ';
      out += corpus.vocab.at(toks[i]);
    }
    out += '\n';
  }
  return out;
}

Corpus load_corpus(const std::string& vocab_path, const std::string& docs_path,
                   const std::string& tokens_path) {
  Corpus c;
  c.vocab = parse_vocab(read_text(vocab_path));
  c.docs = parse_documents(read_text(docs_path), c.vocab.size());
  if (!tokens_path.empty()) c.tokens = parse_tokens(read_text(tokens_path), c.vocab);
  c.validate();
  return c;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_text_atomic(base / "vocab.txt", format_vocab(corpus.vocab));
  write_text_atomic(base / "docs.txt", format_documents(corpus.docs));
  if (corpus.has_tokens()) write_text_atomic(base / "tokens.txt", format_tokens(corpus));
}

std::size_t CoOccurrence::joint(std::uint32_t a, std::uint32_t b) const {
  if (a == b) return df.at(a);
  std::size_t n = 0;
  for (const auto& s : doc_sets) {
    if (std::binary_search(s.begin(), s.end(), a) && std::binary_search(s.begin(), s.end(), b)) ++n;
  }
  return n;
}

CoOccurrence co_occurrence(const Corpus& corpus) {
  CoOccurrence co;
  co.num_docs = corpus.num_docs();
  co.df.assign(corpus.vocab_size(), 0);
  for (const auto& d : corpus.docs) {
    std::vector<std::uint32_t> ids;
    for (const auto& [id, c] : d.terms) {
      ids.push_back(id);
      ++co.df.at(id);
    }
    std::sort(ids.begin(), ids.end());
    co.doc_sets.push_back(std::move(ids));
  }
  return co;
}

PlantedCorpus planted_corpus(const PlantedSpec& spec, Rng& rng) {
  if (spec.topics == 0 || spec.vocab < 2 || spec.docs == 0 || spec.doc_length < 2) {
    throw DomainError("planted corpus: need topics >= 1, vocab >= 2, docs >= 1, doc_length >= 2");
  }
  const std::vector<double> topic_alpha(spec.vocab, spec.topic_concentration);
  const std::vector<double> doc_alpha(spec.topics, spec.doc_concentration);
  PlantedCorpus out;
  out.beta = Tensor(Shape{spec.topics, spec.vocab});
  for (std::size_t k = 0; k < spec.topics; ++k) {
    const auto b = sample_dirichlet(topic_alpha, rng);
    std::ranges::copy(b, out.beta.row(k).begin());
  }
  out.theta = Tensor(Shape{spec.docs, spec.topics});
  std::vector<std::vector<std::uint32_t>> tokens(spec.docs);
  for (std::size_t d = 0; d < spec.docs; ++d) {
    const auto theta = sample_dirichlet(doc_alpha, rng);
    std::ranges::copy(theta, out.theta.row(d).begin());
    const std::size_t n =
        std::max<std::size_t>(2, sample_poisson(static_cast<double>(spec.doc_length), rng));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = sample_categorical(theta, rng);
      tokens[d].push_back(static_cast<std::uint32_t>(sample_categorical(out.beta.row(k), rng)));
    }
  }
  std::vector<std::string> vocab(spec.vocab);
  for (std::size_t v = 0; v < spec.vocab; ++v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "w%03zu", v);
    vocab[v] = buf;
  }
  out.corpus = corpus_from_tokens(std::move(vocab), std::move(tokens));
  return out;
}

}  // namespace dpgm

// Apache License, Version 2.0, refer to LICENSE.txt

#include "cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpgm/checkpoint.hpp"
#include "dpgm/corpus.hpp"
#include "dpgm/etm.hpp"
#include "dpgm/experiments.hpp"
#include "dpgm/graph_registry.hpp"
#include "dpgm/hmc.hpp"
#include "dpgm/presgan.hpp"
#include "dpgm/rem.hpp"
#include "dpgm/tensor_io.hpp"
#include "dpgm/vi.hpp"

namespace dpgm::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<double> lambda;
  std::optional<std::size_t> k_particles;
  std::optional<std::size_t> epochs;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  return j;
}

// Rejects unknown keys so typos do not silently fall back to defaults.
void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError("unknown config key '" + where + item.key() + "'");
  }
}

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  return j.contains(key) ? j.at(key) : empty;
}

std::size_t threads_from_env() {
  const char* v = std::getenv("DPGM_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  std::size_t n = 0;
  const char* end = v + std::strlen(v);
  const auto [ptr, ec] = std::from_chars(v, end, n);
  if (ec != std::errc() || ptr != end || n == 0) {
    throw ConfigError(std::string("DPGM_THREADS must be a positive integer, got '") + v + "'");
  }
  return n;
}

std::uint64_t seed_of(const Common& c, const json& j) {
  if (c.seed) return *c.seed;
  return get<std::uint64_t>(j, "seed", 2019);
}

fs::path out_dir(const Common& c) {
  fs::path dir(c.out);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

// JSON has no infinity; the +inf sentinel is spelled as a string.
json number_or_inf(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? json("inf") : json("-inf");
}

json to_json(const Tensor& t) { return json(t.values()); }

// ---------------------------------------------------------------- ringsim

PresganConfig presgan_config(const json& j) {
  PresganConfig c;
  c.lambda = get(j, "lambda", c.lambda);
  c.lambda_tilde = get(j, "lambda_tilde", c.lambda_tilde);
  c.sigma_low = get(j, "sigma_low", c.sigma_low);
  c.sigma_high = get(j, "sigma_high", c.sigma_high);
  c.sigma_init_log = get(j, "sigma_init_log", c.sigma_init_log);
  const json& h = section(j, "hmc");
  check_keys(h, {"steps", "leapfrog", "step_size", "burn_in", "target_accept"}, "hmc.");
  c.hmc.num_samples = get(h, "steps", c.hmc.num_samples);
  c.hmc.leapfrog = get(h, "leapfrog", c.hmc.leapfrog);
  c.hmc.step_size = get(h, "step_size", c.hmc.step_size);
  c.hmc.burn_in = get(h, "burn_in", c.hmc.burn_in);
  c.hmc.target_accept = get(h, "target_accept", c.hmc.target_accept);
  const json& lr = section(j, "lr");
  check_keys(lr, {"disc", "gen", "sigma"}, "lr.");
  c.lr_disc = get(lr, "disc", c.lr_disc);
  c.lr_gen = get(lr, "gen", c.lr_gen);
  c.lr_sigma = get(lr, "sigma", c.lr_sigma);
  c.batch = get(j, "batch", c.batch);
  c.epochs = get(j, "epochs", c.epochs);
  const std::string form = get<std::string>(j, "adversarial", "non_saturating");
  if (form == "literal") {
    c.adversarial = AdversarialForm::Literal;
  } else if (form != "non_saturating") {
    throw ConfigError("adversarial must be 'non_saturating' or 'literal'");
  }
  return c;
}

Checkpoint generator_checkpoint(const Generator& gen) {
  Checkpoint ck;
  ck.names = mlp_param_names(gen.spec, "gen");
  ck.tensors = gen.params;
  ck.names.push_back("gen.log_sigma");
  ck.tensors.push_back(gen.log_sigma);
  json spec = {{"widths", gen.spec.widths},
               {"hidden", activation_name(gen.spec.hidden)},
               {"sigma_low", gen.sigma_low},
               {"sigma_high", gen.sigma_high}};
  ck.spec_json = spec.dump();
  return ck;
}

Generator load_generator(const fs::path& dir) {
  const Checkpoint ck = load_checkpoint(dir);
  json spec;
  try {
    spec = json::parse(ck.spec_json);
  } catch (const json::parse_error& e) {
    throw ConfigError(dir.string() + ": bad generator spec: " + e.what());
  }
  Generator gen;
  gen.spec.widths = get<std::vector<std::size_t>>(spec, "widths", {});
  gen.spec.hidden = parse_activation(get<std::string>(spec, "hidden", "tanh"));
  gen.spec.validate();
  gen.sigma_low = get(spec, "sigma_low", gen.sigma_low);
  gen.sigma_high = get(spec, "sigma_high", gen.sigma_high);
  const auto names = mlp_param_names(gen.spec, "gen");
  if (ck.tensors.size() != names.size() + 1) {
    throw ConfigError(dir.string() + ": expected " + std::to_string(names.size() + 1) +
                      " tensors, found " + std::to_string(ck.tensors.size()));
  }
  gen.params.assign(ck.tensors.begin(), ck.tensors.end() - 1);
  gen.log_sigma = ck.tensors.back();
  return gen;
}

json coverage_json(const ModeCoverage& cov) {
  return {{"modes", cov.covered},
          {"proportions", cov.proportions},
          {"unassigned_fraction", cov.unassigned_fraction},
          {"kl", number_or_inf(cov.kl)},
          {"assign_radius", cov.assign_radius},
          {"min_fraction", cov.min_fraction}};
}

int cmd_ringsim(const Common& common, std::ostream& out) {
  const json j = load_config(common.config);
  check_keys(j,
             {"lambda", "lambda_tilde", "sigma_low", "sigma_high", "sigma_init_log", "hmc", "lr",
              "batch", "epochs", "seed", "adversarial", "ring", "samples", "eval_samples",
              "assign_radius", "min_fraction"},
             "");
  PresganConfig config = presgan_config(j);
  if (common.lambda) config.lambda = *common.lambda;
  if (common.epochs) config.epochs = *common.epochs;
  config.validate();

  const json& r = section(j, "ring");
  check_keys(r, {"modes", "radius", "stddev", "imbalance"}, "ring.");
  RingTarget target;
  target.modes = get(r, "modes", target.modes);
  target.radius = get(r, "radius", target.radius);
  target.stddev = get(r, "stddev", target.stddev);
  if (const auto k = get<std::size_t>(r, "imbalance", 0); k > 0) {
    target.weights = imbalanced_weights(k, target.modes);
  }
  target.validate();
  const std::size_t n = get<std::size_t>(j, "samples", 5000);
  const std::size_t n_eval = get<std::size_t>(j, "eval_samples", 5000);
  const double radius = get(j, "assign_radius", 0.5);
  const double min_fraction = get(j, "min_fraction", 0.02);
  if (n == 0 || n_eval == 0) throw ConfigError("samples and eval_samples must be positive");

  const std::uint64_t seed = seed_of(common, j);
  const fs::path dir = out_dir(common);
  Rng rng(seed);
  const Tensor data = ring_sample(target, n, rng);
  const std::size_t every = std::max<std::size_t>(1, config.epochs / 10);
  PresganResult res =
      train_presgan(data, config, rng, [&](const PresganEpoch& e, const Generator&) {
        if (e.epoch % every == 0 || e.epoch == config.epochs) {
          out << "epoch " << e.epoch << " disc " << e.disc_loss << " gen " << e.gen_loss
              << " sigma " << e.sigma_mean << " accept " << e.hmc_accept << "\n";
        }
      });

  const Tensor z = rng.normal({n_eval, res.gen.d_z()});
  const Tensor means = res.gen.mean(z);
  const Tensor noisy = generate(res.gen, z, rng.normal({n_eval, res.gen.d_x()}));
  const ModeCoverage cov = mode_coverage(means, target, radius, min_fraction);
  const ModeCoverage cov_noisy = mode_coverage(noisy, target, radius, min_fraction);

  json report = coverage_json(cov);
  report["noisy"] = coverage_json(cov_noisy);
  report["lambda"] = config.lambda;
  report["seed"] = seed;
  report["epochs"] = config.epochs;
  report["sigma"] = to_json(res.gen.sigma());

  save_csv(dir / "samples.csv", means);
  write_json(dir / "coverage.json", report);
  write_text_atomic(dir / "train_log.csv", presgan_log_csv(res.log));
  save_checkpoint(dir / "generator", generator_checkpoint(res.gen));
  out << "modes " << cov.covered << " of " << target.modes << ", kl " << cov.kl << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- oracle

struct OracleSpec {
  std::size_t d_z = 2;
  std::size_t d_x = 5;
  std::vector<double> row_norms{2.0, 1.0};
  double noise_var = 0.5;
};

OracleSpec oracle_spec(const json& j) {
  check_keys(j, {"d_z", "d_x", "row_norms", "noise_var"}, "model.");
  OracleSpec s;
  s.d_z = get(j, "d_z", s.d_z);
  s.d_x = get(j, "d_x", s.d_x);
  s.row_norms = get(j, "row_norms", s.row_norms);
  s.noise_var = get(j, "noise_var", s.noise_var);
  if (s.row_norms.size() != s.d_z) throw ConfigError("model.row_norms must have d_z entries");
  return s;
}

LinearGaussian oracle_model(const OracleSpec& s, Rng& rng) {
  return LinearGaussian::orthogonal(s.d_z, s.d_x, s.row_norms, s.noise_var, rng);
}

double mean_log_marginal(const LinearGaussian& m, const Tensor& x) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) total += m.log_marginal(x.row(i));
  return total / static_cast<double>(x.rows());
}

int cmd_oracle(const Common& common, std::ostream& out) {
  const json j = load_config(common.config);
  check_keys(j,
             {"model", "train", "test", "hidden", "epochs", "batch", "lr", "k_particles",
              "eval_k", "methods", "seed"},
             "");
  const OracleSpec spec = oracle_spec(section(j, "model"));
  const std::size_t n_train = get<std::size_t>(j, "train", 1000);
  const std::size_t n_test = get<std::size_t>(j, "test", 200);
  const std::size_t hidden = get<std::size_t>(j, "hidden", 32);
  const std::size_t epochs = common.epochs.value_or(get<std::size_t>(j, "epochs", 100));
  const std::size_t batch = get<std::size_t>(j, "batch", 100);
  const double lr = get(j, "lr", 1e-2);
  const std::size_t particles =
      common.k_particles.value_or(get<std::size_t>(j, "k_particles", 50));
  const auto eval_k = get<std::vector<std::size_t>>(j, "eval_k", {1, 5, 50, 1000});
  const auto methods =
      get<std::vector<std::string>>(j, "methods", {"vae", "rem_v1", "rem_v2"});
  if (n_train == 0 || n_test == 0) throw ConfigError("train and test must be positive");

  const std::uint64_t seed = seed_of(common, j);
  const fs::path dir = out_dir(common);
  Rng rng(seed);
  const LinearGaussian truth = oracle_model(spec, rng);
  const Tensor train = truth.sample_x(n_train, rng);
  const Tensor test = truth.sample_x(n_test, rng);
  const double log_p = mean_log_marginal(truth, test);

  std::string bounds = "method,k,bound,truth,gap\n";
  std::string log_csv = "method,epoch,objective\n";
  char buf[256];
  auto add_bound = [&](const std::string& method, std::size_t k, double bound) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%.17g,%.17g\n", method.c_str(), k, bound,
                  log_p, log_p - bound);
    bounds += buf;
  };

  {
    const LatentModel model = truth.as_latent_model();
    const auto mp = truth.latent_model_params();
    const Encoder enc = truth.exact_encoder();
    const auto ep = truth.exact_encoder_params();
    for (std::size_t k : eval_k) add_bound("exact_posterior", k, iwae_evaluate(model, mp, enc, ep, test, k, rng));
  }

  json summary = {{"truth", log_p}, {"methods", json::object()}};
  for (const auto& method : methods) {
    const LatentModel model = truth.as_latent_model();
    auto mp = model.init(rng);
    Encoder enc;
    enc.trunk = {spec.d_x, hidden};
    enc.latent = spec.d_z;
    auto ep = enc.init(rng);
    if (method == "vae") {
      VaeConfig c;
      c.epochs = epochs;
      c.batch = batch;
      c.adam.lr = lr;
      c.metric_points = 0;
      c.check_finite = true;
      const VaeResult res = train_vae(model, mp, enc, ep, train, c, rng);
      for (const auto& e : res.log) {
        std::snprintf(buf, sizeof(buf), "vae,%zu,%.17g\n", e.epoch, e.elbo);
        log_csv += buf;
      }
    } else if (method == "rem_v1" || method == "rem_v2") {
      RemConfig c;
      c.variant = method == "rem_v1" ? RemVariant::V1 : RemVariant::V2;
      c.epochs = epochs;
      c.batch = batch;
      c.particles = particles;
      c.adam.lr = lr;
      c.check_finite = true;
      const RemResult res = train_rem(model, mp, enc, ep, train, c, rng);
      for (const auto& e : res.log) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g\n", method.c_str(), e.epoch, e.iwae_bound);
        log_csv += buf;
      }
    } else {
      throw ConfigError("unknown method '" + method + "' (vae, rem_v1, rem_v2)");
    }
    for (std::size_t k : eval_k) add_bound(method, k, iwae_evaluate(model, mp, enc, ep, test, k, rng));
    const double fitted = mean_log_marginal(LinearGaussian::from_latent_params(mp), test);
    summary["methods"][method] = {{"log_marginal", fitted},
                                  {"relative_error", std::abs(fitted - log_p) / std::abs(log_p)}};
    out << method << ": fitted log p(x) " << fitted << " vs truth " << log_p << "\n";
  }

  write_text_atomic(dir / "bounds.csv", bounds);
  write_text_atomic(dir / "train_log.csv", log_csv);
  write_json(dir / "loglik.json", summary);
  return kExitOk;
}

// -------------------------------------------------------------------- etm

int cmd_etm(const Common& common, std::ostream& out) {
  const json j = load_config(common.config);
  check_keys(j,
             {"corpus", "planted", "topics", "embed", "hidden", "activation", "rho", "cbow",
              "epochs", "batch", "lr", "top_words", "test_fraction", "seed"},
             "");
  const std::uint64_t seed = seed_of(common, j);
  Rng rng(seed);

  Corpus corpus;
  std::optional<Tensor> planted_beta;
  if (j.contains("corpus")) {
    const json& c = j.at("corpus");
    check_keys(c, {"vocab", "docs", "tokens"}, "corpus.");
    corpus = load_corpus(get<std::string>(c, "vocab", ""), get<std::string>(c, "docs", ""),
                         get<std::string>(c, "tokens", ""));
  } else {
    const json& p = section(j, "planted");
    check_keys(p,
               {"topics", "vocab", "docs", "doc_length", "topic_concentration",
                "doc_concentration"},
               "planted.");
    PlantedSpec ps;
    ps.topics = get(p, "topics", ps.topics);
    ps.vocab = get(p, "vocab", ps.vocab);
    ps.docs = get(p, "docs", ps.docs);
    ps.doc_length = get(p, "doc_length", ps.doc_length);
    ps.topic_concentration = get(p, "topic_concentration", ps.topic_concentration);
    ps.doc_concentration = get(p, "doc_concentration", ps.doc_concentration);
    PlantedCorpus pc = planted_corpus(ps, rng);
    corpus = std::move(pc.corpus);
    planted_beta = std::move(pc.beta);
  }

  EtmConfig config;
  config.spec.vocab = corpus.vocab_size();
  config.spec.topics = get(j, "topics", config.spec.topics);
  config.spec.embed = get(j, "embed", config.spec.embed);
  config.spec.hidden = get(j, "hidden", config.spec.hidden);
  config.spec.activation = parse_activation(get<std::string>(j, "activation", "relu"));
  const std::string rho = get<std::string>(j, "rho", "joint");
  if (rho == "prefit") {
    config.rho_mode = RhoMode::Prefit;
  } else if (rho != "joint") {
    throw ConfigError("rho must be 'joint' or 'prefit'");
  }
  const json& cb = section(j, "cbow");
  check_keys(cb, {"window", "epochs", "batch", "lr"}, "cbow.");
  config.cbow.dim = config.spec.embed;
  config.cbow.window = get(cb, "window", config.cbow.window);
  config.cbow.epochs = get(cb, "epochs", config.cbow.epochs);
  config.cbow.batch = get(cb, "batch", config.cbow.batch);
  config.cbow.adam.lr = get(cb, "lr", config.cbow.adam.lr);
  config.epochs = common.epochs.value_or(get(j, "epochs", config.epochs));
  config.batch = get(j, "batch", config.batch);
  config.adam.lr = get(j, "lr", config.adam.lr);
  config.check_finite = true;
  config.validate();
  const std::size_t words = get<std::size_t>(j, "top_words", 10);
  const double test_fraction = get(j, "test_fraction", 0.1);
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in [0, 1)");
  }

  const std::size_t n_test =
      static_cast<std::size_t>(test_fraction * static_cast<double>(corpus.num_docs()));
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    (d + n_test < corpus.num_docs() ? train_rows : test_rows).push_back(d);
  }
  const Corpus train = corpus.subset(train_rows);

  const fs::path dir = out_dir(common);
  const std::size_t every = std::max<std::size_t>(1, config.epochs / 10);
  const EtmResult res = train_etm(train, config, rng, [&](const EtmEpoch& e) {
    if (e.epoch % every == 0 || e.epoch == config.epochs) {
      out << "epoch " << e.epoch << " elbo " << e.elbo << " perplexity " << e.perplexity << "\n";
    }
  });

  const Tensor beta = res.model.beta();
  const TopicReport report = topic_report(beta, train, words);
  json topics = json::parse(topic_report_json(report));
  if (!test_rows.empty()) {
    const CompletionScore score = document_completion_loglik(res.model, corpus.subset(test_rows));
    topics["completion"] = {{"per_word", score.per_word},
                            {"perplexity", score.perplexity},
                            {"tokens", score.tokens}};
  }
  if (planted_beta) {
    const TopicMatch match = greedy_topic_match(beta, *planted_beta);
    topics["planted_match"] = {{"assignment", match.assignment},
                               {"cosine", match.cosine},
                               {"mean_cosine", match.mean_cosine}};
    out << "planted topic cosine " << match.mean_cosine << "\n";
  }
  write_json(dir / "topics.json", topics);
  write_text_atomic(dir / "train_log.csv", etm_log_csv(res.log));
  out << "tc " << report.coherence << " td " << report.diversity << " quality " << report.quality
      << "\n";
  return kExitOk;
}

// ------------------------------------------------------------ eval-loglik

int cmd_eval_loglik(const Common& common, std::ostream& out) {
  const json j = load_config(common.config);
  check_keys(j,
             {"generator", "data", "model", "points", "train", "samples", "gamma", "truncate",
              "encoder", "seed"},
             "");
  const std::uint64_t seed = seed_of(common, j);
  Rng rng(seed);
  const std::size_t points = get<std::size_t>(j, "points", 100);
  const std::size_t n_train = get<std::size_t>(j, "train", 1000);
  LoglikOptions opts;
  opts.samples = common.k_particles.value_or(get(j, "samples", opts.samples));
  opts.gamma = get(j, "gamma", opts.gamma);
  opts.truncate = get(j, "truncate", opts.truncate);
  const json& e = section(j, "encoder");
  check_keys(e, {"hidden", "epochs", "lr", "batch"}, "encoder.");
  if (points == 0 || n_train == 0) throw ConfigError("points and train must be positive");

  Generator gen;
  Tensor fit_data;
  Tensor test;
  std::optional<LinearGaussian> truth;
  if (j.contains("generator")) {
    gen = load_generator(get<std::string>(j, "generator", ""));
    const Tensor data = load_csv(get<std::string>(j, "data", ""));
    if (data.rank() != 2 || data.cols() != gen.d_x()) {
      throw ConfigError("data must be [N, " + std::to_string(gen.d_x()) + "]");
    }
    const std::size_t n_eval = std::min(points, data.rows());
    std::vector<std::vector<double>> fit_rows;
    std::vector<std::vector<double>> test_rows;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      auto& dst = i < data.rows() - n_eval ? fit_rows : test_rows;
      dst.emplace_back(data.row(i).begin(), data.row(i).end());
    }
    if (fit_rows.empty()) fit_rows = test_rows;
    fit_data = stack_rows(fit_rows);
    test = stack_rows(test_rows);
  } else {
    const OracleSpec spec = oracle_spec(section(j, "model"));
    truth = oracle_model(spec, rng);
    gen.spec = MlpSpec{{spec.d_z, spec.d_x}};
    gen.params = {truth->beta, truth->bias};
    gen.log_sigma = Tensor({spec.d_x}, 0.5 * std::log(spec.noise_var));
    gen.sigma_low = std::sqrt(spec.noise_var) * 0.5;
    gen.sigma_high = std::sqrt(spec.noise_var) * 2.0;
    fit_data = truth->sample_x(n_train, rng);
    test = truth->sample_x(points, rng);
  }

  const LatentModel model = gen.as_latent_model();
  auto mp = gen.latent_params();
  Encoder enc;
  enc.trunk = {gen.d_x(), get<std::size_t>(e, "hidden", 32)};
  enc.latent = gen.d_z();
  auto ep = enc.init(rng);
  VaeConfig vc;
  vc.epochs = common.epochs.value_or(get<std::size_t>(e, "epochs", 100));
  vc.batch = get<std::size_t>(e, "batch", 100);
  vc.adam.lr = get(e, "lr", 1e-2);
  vc.metric_points = 0;
  vc.train_model = false;
  vc.check_finite = true;
  train_vae(model, mp, enc, ep, fit_data, vc, rng);

  const Tensor ll = is_loglik(gen, test, enc, ep, opts, rng);
  double mean = 0.0;
  for (double v : ll.data()) mean += v / static_cast<double>(ll.size());
  json report = {{"mean", mean},
                 {"per_point", to_json(ll)},
                 {"samples", opts.samples},
                 {"gamma", opts.gamma},
                 {"truncate", opts.truncate}};
  if (truth) {
    const double exact = mean_log_marginal(*truth, test);
    report["truth"] = exact;
    report["relative_error"] = std::abs(mean - exact) / std::abs(exact);
    out << "log p(x) " << mean << " vs closed form " << exact << "\n";
  } else {
    out << "log p(x) " << mean << "\n";
  }
  write_json(out_dir(common) / "loglik.json", report);
  return kExitOk;
}

// --------------------------------------------------------------- gradcheck

int cmd_gradcheck(const Common& common, std::ostream& out) {
  const json j = load_config(common.config);
  check_keys(j, {"h", "seed"}, "");
  Rng rng(seed_of(common, j));
  const auto checks = check_registered_graphs(rng, get(j, "h", 1e-4));
  json graphs = json::array();
  bool all = true;
  double worst = 0.0;
  for (const auto& c : checks) {
    const double tol = c.linear ? 1e-9 : 1e-5;
    const bool pass = c.result.max_rel_error < tol;
    all = all && pass;
    worst = std::max(worst, c.result.max_rel_error);
    graphs.push_back({{"name", c.name},
                      {"linear", c.linear},
                      {"max_rel_error", c.result.max_rel_error},
                      {"tolerance", tol},
                      {"pass", pass}});
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %.3e %s\n", c.name.c_str(), c.result.max_rel_error,
                  pass ? "ok" : "FAIL");
    out << buf;
  }
  write_json(out_dir(common) / "gradcheck.json",
             {{"graphs", graphs}, {"max_rel_error", worst}, {"pass", all}});
  return all ? kExitOk : kExitNumerical;
}

// --------------------------------------------------------------- hmc-bench

int cmd_hmc_bench(const Common& common, std::ostream& out) {
  const json j = load_config(common.config);
  check_keys(j,
             {"dim", "chains", "samples", "burn_in", "leapfrog", "step_size", "target_accept",
              "seed"},
             "");
  const std::size_t dim = get<std::size_t>(j, "dim", 1);
  const std::size_t chains = get<std::size_t>(j, "chains", 100);
  HmcConfig hmc;
  hmc.num_samples = get<std::size_t>(j, "samples", 100);
  hmc.burn_in = get<std::size_t>(j, "burn_in", 500);
  hmc.leapfrog = get(j, "leapfrog", hmc.leapfrog);
  hmc.step_size = get(j, "step_size", 0.5);
  hmc.target_accept = get(j, "target_accept", hmc.target_accept);
  hmc.validate();
  if (dim == 0 || chains == 0) throw ConfigError("dim and chains must be positive");

  Rng rng(seed_of(common, j));
  const BatchLogDensity target = [](const Tensor& z, Tensor& grad) {
    Tensor logp({z.rows()});
    grad = z * -1.0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
      for (double v : z.row(r)) logp[r] -= 0.5 * v * v;
    }
    return logp;
  };
  const Tensor init = rng.normal({chains, dim});
  const HmcResult res = hmc_sample(target, init, hmc, rng);

  std::vector<double> sum(dim, 0.0);
  std::vector<double> sq(dim, 0.0);
  double count = 0.0;
  for (const auto& s : res.samples) {
    for (std::size_t r = 0; r < s.rows(); ++r) {
      for (std::size_t d = 0; d < dim; ++d) {
        sum[d] += s.at(r, d);
        sq[d] += s.at(r, d) * s.at(r, d);
      }
      count += 1.0;
    }
  }
  double mean_err = 0.0;
  double var_err = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double m = sum[d] / count;
    const double v = sq[d] / count - m * m;
    mean_err = std::max(mean_err, std::abs(m));
    var_err = std::max(var_err, std::abs(v - 1.0));
  }

  const Tensor z0 = rng.normal({chains, dim});
  const Tensor p0 = rng.normal({chains, dim});
  const auto [z1, p1] = leapfrog(z0, p0, target, res.step_size, hmc.leapfrog);
  const auto [z2, p2] = leapfrog(z1, p1 * -1.0, target, res.step_size, hmc.leapfrog);
  const double reversibility = std::max(max_abs_diff(z2, z0), max_abs_diff(p2 * -1.0, p0));

  const json report = {{"samples", static_cast<std::size_t>(count)},
                       {"mean_abs_error", mean_err},
                       {"variance_error", var_err},
                       {"acceptance", res.kept_acceptance},
                       {"burn_in_acceptance", res.acceptance_rate},
                       {"step_size", res.step_size},
                       {"reversibility_error", reversibility},
                       {"degenerate", res.degenerate}};
  write_json(out_dir(common) / "hmc.json", report);
  out << "mean error " << mean_err << ", variance error " << var_err << ", acceptance "
      << res.kept_acceptance << ", step " << res.step_size << "\n";
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "u64 seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep probabilistic graphical models: experiments and checks", "dpgm"};
  app.require_subcommand(1);
  Common common;

  auto* ringsim = app.add_subcommand("ringsim", "train (Pres)GAN on the ring of Gaussians");
  add_common(ringsim, common);
  ringsim->add_option("--lambda", common.lambda, "entropy weight (0 trains a noised GAN)");
  ringsim->add_option("--epochs", common.epochs, "training epochs");

  auto* oracle = app.add_subcommand("oracle", "VAE / REM / IWAE on a linear-Gaussian model");
  add_common(oracle, common);
  oracle->add_option("--k-particles", common.k_particles, "REM particles per data point");
  oracle->add_option("--epochs", common.epochs, "training epochs");

  auto* etm = app.add_subcommand("etm", "train the embedded topic model and report topics");
  add_common(etm, common);
  etm->add_option("--epochs", common.epochs, "training epochs");

  auto* loglik = app.add_subcommand("eval-loglik", "importance-sampled generator log-likelihood");
  add_common(loglik, common);
  loglik->add_option("--k-particles", common.k_particles, "importance samples per point");
  loglik->add_option("--epochs", common.epochs, "encoder fitting epochs");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every graph");
  add_common(gradcheck, common);

  auto* hmc = app.add_subcommand("hmc-bench", "HMC moment checks on a standard normal");
  add_common(hmc, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    threads_from_env();
    if (ringsim->parsed()) return cmd_ringsim(common, out);
    if (oracle->parsed()) return cmd_oracle(common, out);
    if (etm->parsed()) return cmd_etm(common, out);
    if (loglik->parsed()) return cmd_eval_loglik(common, out);
    if (gradcheck->parsed()) return cmd_gradcheck(common, out);
    return cmd_hmc_bench(common, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace dpgm::cli

// Apache License, Version 2.0, refer to LICENSE.txt

#include <benchmark/benchmark.h>

#include "dpgm/etm.hpp"
#include "dpgm/hmc.hpp"
#include "dpgm/presgan.hpp"
#include "dpgm/rem.hpp"
#include "dpgm/vi.hpp"

namespace {

using namespace dpgm;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = rng.normal({n, n});
  const Tensor b = rng.normal({n, n});
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

// Ring generator: 10 -> 128 -> 128 -> 2, batch 100.
void BM_GeneratorForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const MlpSpec spec{{10, 128, 128, 2}};
  const auto params = init_mlp(spec, rng);
  const Tensor z = rng.normal({100, 10});
  for (auto _ : state) {
    Tape tape;
    const auto vars = bind_params(tape, params, true);
    const Var loss = sum(square(mlp_forward(spec, vars, tape.constant(z))));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grads(vars));
  }
}
BENCHMARK(BM_GeneratorForwardBackward);

void BM_PresganGeneratorStep(benchmark::State& state) {
  Rng rng(3);
  const Generator gen = Generator::make(MlpSpec{{10, 128, 128, 2}}, 0.0, 1e-2, 0.3, rng);
  const Discriminator disc = Discriminator::make(MlpSpec{{2, 128, 128, 1}}, rng);
  HmcConfig hmc;
  const Tensor z = rng.normal({100, 10});
  const Tensor eps = rng.normal({100, 2});
  for (auto _ : state) {
    benchmark::DoNotOptimize(generator_gradients(gen, disc, z, eps, hmc, 0.1, 0.0, rng));
  }
}
BENCHMARK(BM_PresganGeneratorStep)->Unit(benchmark::kMillisecond);

void BM_HmcStandardNormal(benchmark::State& state) {
  Rng rng(4);
  const auto dim = static_cast<std::size_t>(state.range(0));
  const BatchLogDensity target = [](const Tensor& z, Tensor& grad) {
    Tensor logp({z.rows()});
    grad = z * -1.0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
      for (double v : z.row(r)) logp[r] -= 0.5 * v * v;
    }
    return logp;
  };
  HmcConfig config;
  config.burn_in = 10;
  config.num_samples = 10;
  const Tensor init = rng.normal({100, dim});
  for (auto _ : state) benchmark::DoNotOptimize(hmc_sample(target, init, config, rng));
}
BENCHMARK(BM_HmcStandardNormal)->Arg(2)->Arg(10);

void BM_VaeGradient(benchmark::State& state) {
  Rng rng(5);
  const LatentModel model = LatentModel::make(DecoderKind::Mlp, {8, 64, 32}, Likelihood::Gaussian);
  const auto mp = model.init(rng);
  Encoder enc;
  enc.trunk = {32, 64};
  enc.latent = 8;
  const auto ep = enc.init(rng);
  const Tensor x = rng.normal({100, 32});
  for (auto _ : state) benchmark::DoNotOptimize(reparam_gradient(model, mp, enc, ep, x, 1, rng));
}
BENCHMARK(BM_VaeGradient)->Unit(benchmark::kMicrosecond);

void BM_IwaeEvaluate(benchmark::State& state) {
  Rng rng(6);
  const double norms[] = {2.0, 1.0};
  const LinearGaussian lg = LinearGaussian::orthogonal(2, 5, norms, 0.5, rng);
  const LatentModel model = lg.as_latent_model();
  const auto mp = lg.latent_model_params();
  const Encoder enc = lg.exact_encoder();
  const auto ep = lg.exact_encoder_params();
  const Tensor x = lg.sample_x(10, rng);
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(iwae_evaluate(model, mp, enc, ep, x, k, rng));
}
BENCHMARK(BM_IwaeEvaluate)->Arg(5)->Arg(50)->Arg(1000);

void BM_EtmElbo(benchmark::State& state) {
  Rng rng(7);
  const PlantedCorpus pc = planted_corpus(PlantedSpec{}, rng);
  EtmSpec spec;
  spec.vocab = pc.corpus.vocab_size();
  const EtmModel model = EtmModel::init(spec, rng);
  std::vector<std::size_t> rows(100);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Tensor counts = pc.corpus.counts(rows);
  for (auto _ : state) {
    benchmark::DoNotOptimize(etm_elbo(model, counts, pc.corpus.num_docs(), rng));
  }
}
BENCHMARK(BM_EtmElbo)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

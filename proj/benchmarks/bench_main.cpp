#include <benchmark/benchmark.h>

#include <vector>

#include "relbias/adjust.hpp"
#include "relbias/ensemble.hpp"
#include "relbias/metrics.hpp"
#include "relbias/numeric.hpp"
#include "relbias/priors.hpp"
#include "relbias/synth.hpp"
#include "relbias/types.hpp"

using namespace relbias;

namespace {

synth::SynthModel bench_model(int k) {
  return synth::make_model(k, 8, 2.0, synth::zipf_prior(k, 1.0),
                           synth::zipf_prior(k, 0.7),
                           PriorDistribution::uniform_over(k), 0.1, 3.0, 7);
}

}  // namespace

static void BM_Generate(benchmark::State& state) {
  const auto model = bench_model(50);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto data = synth::generate(model, n, synth::Regime::sgg);
    benchmark::DoNotOptimize(data.dataset.samples.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Generate)->Arg(1000)->Arg(10000);

static void BM_EstimatePrior(benchmark::State& state) {
  const auto model = bench_model(50);
  const Dataset nonbg = filter_nonbackground(
      synth::generate(model, static_cast<int>(state.range(0)), synth::Regime::sgg)
          .dataset);
  const auto pi_sg = priors::count_prior(nonbg);
  priors::SolverConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.max_iters = 50;  // fixed step budget; measures per-iteration cost
  cfg.grad_tol = 0.0 + 1e-300;
  for (auto _ : state) {
    auto result = priors::estimate_prior(nonbg, pi_sg, cfg);
    benchmark::DoNotOptimize(result.prior.probs.data());
  }
  state.SetItemsProcessed(state.iterations() * 50 * nonbg.size());
}
BENCHMARK(BM_EstimatePrior)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

static void BM_AdjustAndCalibrate(benchmark::State& state) {
  const auto model = bench_model(50);
  const auto data = synth::generate(model, 2000, synth::Regime::sgg);
  const adjust::AdjustmentSpec spec{model.pretrain_prior, model.sgg_prior, 1.0};
  for (auto _ : state) {
    for (const auto& s : data.dataset.samples) {
      auto probs = adjust::calibrated_probs(adjust::adjust_logits(s.zs_logits, spec), 1.3);
      benchmark::DoNotOptimize(probs.data());
    }
  }
  state.SetItemsProcessed(state.iterations() * data.dataset.size());
}
BENCHMARK(BM_AdjustAndCalibrate);

static void BM_EnsembleSample(benchmark::State& state) {
  const auto model = bench_model(50);
  const auto data = synth::generate(model, 1000, synth::Regime::sgg);
  const adjust::AdjustmentSpec spec{model.pretrain_prior, model.sgg_prior, 1.0};
  std::vector<std::vector<double>> p_zs, p_sg;
  for (const auto& s : data.dataset.samples) {
    p_zs.push_back(adjust::calibrated_probs(adjust::adjust_logits(s.zs_logits, spec), 1.0));
    const std::vector<double> sg_rel(s.sg_logits.begin() + 1, s.sg_logits.end());
    p_sg.push_back(adjust::calibrated_probs(sg_rel, 1.0));
  }
  for (auto _ : state) {
    for (size_t i = 0; i < p_zs.size(); ++i) {
      const auto w = ensemble::certainty_weight(p_zs[i], p_sg[i], 1.0);
      auto out = ensemble::compose_full(data.dataset.samples[i],
                                        ensemble::fuse_relations(p_zs[i], p_sg[i], w), w);
      benchmark::DoNotOptimize(out.p_relations.data());
    }
  }
  state.SetItemsProcessed(state.iterations() * p_zs.size());
}
BENCHMARK(BM_EnsembleSample);

static void BM_RecallAtK(benchmark::State& state) {
  const auto model = bench_model(50);
  const auto data = synth::generate(model, static_cast<int>(state.range(0)),
                                    synth::Regime::sgg);
  metrics::PredictionSet preds;
  for (const auto& s : data.dataset.samples) {
    const auto full = softmax(s.sg_logits);
    preds.relation_scores.emplace_back(full.begin() + 1, full.end());
  }
  const std::vector<int> cutoffs{20, 50, 100};
  for (auto _ : state) {
    auto r = metrics::recall_at_k(data.dataset, preds, cutoffs);
    benchmark::DoNotOptimize(&r);
  }
  state.SetItemsProcessed(state.iterations() * data.dataset.size());
}
BENCHMARK(BM_RecallAtK)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}

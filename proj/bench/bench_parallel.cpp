// Serial reference vs OpenMP kernels. Arg(0) is serial, Arg(1) parallel.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <string>

#include "isa/metrics.hpp"
#include "isa/pipeline.hpp"
#include "isa/scorer.hpp"

using namespace isa;

namespace {

Execution exec_of(const benchmark::State& state) {
  return state.range(0) ? Execution::Parallel : Execution::Serial;
}

AudioBuffer noise(double seconds) {
  std::mt19937_64 gen(1);
  std::normal_distribution<float> n(0.0f, 0.1f);
  std::vector<float> s(static_cast<std::size_t>(seconds * 16000));
  for (auto& v : s) v = n(gen);
  return {std::move(s), 16000};
}

void BM_EnergyScoreWindows(benchmark::State& state) {
  auto audio = noise(60.0);
  EnergyScorer scorer;
  ScoringContext ctx;
  ctx.utt_id = "bench";
  ctx.duration = audio.duration();
  ctx.audio = &audio;
  auto windows = coarse_grid(ctx.duration, 0.5, 0.05, true);
  for (auto _ : state) benchmark::DoNotOptimize(scorer.score_batch(ctx, windows, exec_of(state)));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * windows.size()));
}
BENCHMARK(BM_EnergyScoreWindows)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EvaluateDataset(benchmark::State& state) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<UtteranceRecord> manifest;
  std::vector<PredictionRecord> preds;
  for (int i = 0; i < 5000; ++i) {
    UtteranceRecord r;
    r.utt_id = "u" + std::to_string(i);
    r.audio_path = r.utt_id + ".wav";
    r.duration = 10.0;
    SegmentSet gt{{}, 10.0}, pr{{}, 10.0};
    for (int k = 0; k < 3; ++k) {
      double s = 0.5 + 3.0 * k + u(gen);
      gt.segments.push_back({s, s + 0.5});
      for (int j = 0; j < 3; ++j) pr.segments.push_back({s + j * 0.7 + 0.1 * u(gen), s + j * 0.7 + 0.5});
    }
    r.ground_truth = gt;
    r.variant = variant_for_count(gt.count());
    manifest.push_back(r);
    preds.push_back({r.utt_id, InferenceMode::Isa, pr});
  }
  EvalOptions o;
  o.taus = {0.1, 0.3, 0.5, 0.7, 0.9};
  o.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_dataset(manifest, preds, o));
}
BENCHMARK(BM_EvaluateDataset)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

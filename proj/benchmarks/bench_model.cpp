#include <benchmark/benchmark.h>

#include "audiomt/corpus.hpp"
#include "audiomt/model.hpp"
#include "audiomt/optimizer.hpp"
#include "audiomt/random.hpp"
#include "audiomt/synth.hpp"

namespace {

using namespace audiomt;

std::vector<TrainingExample> toy_batch(const Vocabulary& vocab, std::size_t n) {
  Rng rng(7);
  std::vector<TrainingExample> batch;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> syms;
    std::string target;
    for (int k = 0; k < 4; ++k) {
      syms.push_back(static_cast<int>(uniform_below(rng, synth::kSymbolCount)));
      target += (k ? " " : "") + std::string(synth::symbol_name(syms.back()));
    }
    ManifestRecord rec;
    rec.task_type = TaskCode::ASR;
    rec.audio_language = "en";
    rec.text_language = "en";
    rec.target = target;
    batch.push_back(assemble(rec, vocab, log_mel(synth::render_utterance(syms, 0.5, 0.001, rng))));
  }
  return batch;
}

template <typename S>
void BM_TrainStep(benchmark::State& state) {
  const Vocabulary vocab = default_vocabulary(default_language_codes(), 256);
  const auto batch = toy_batch(vocab, static_cast<std::size_t>(state.range(0)));
  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(vocab.size());
  auto params = init_parameters<S>(cfg);
  auto opt = OptimizerState<S>::init(params);
  const LrSchedule schedule;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step<S>(batch, params, opt, TrainStage::Joint, schedule));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep<double>)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep<float>)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  const Vocabulary vocab = default_vocabulary(default_language_codes(), 256);
  const auto batch = toy_batch(vocab, 1);
  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(vocab.size());
  const auto params = init_parameters<double>(cfg);
  const TokenSequence header(batch[0].tokens.begin(), batch[0].tokens.begin() + 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(greedy_decode_prefix(batch[0].features, header, params, 20, -1));
  }
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

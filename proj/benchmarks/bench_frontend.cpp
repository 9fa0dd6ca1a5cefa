#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "audiomt/frontend.hpp"

namespace {

audiomt::AudioClip sine(double seconds, int rate) {
  audiomt::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = 0.5 * std::sin(2 * std::numbers::pi * 440.0 * i / rate);
  }
  return clip;
}

void BM_LogMel(benchmark::State& state) {
  const auto clip = sine(static_cast<double>(state.range(0)), 16000);
  for (auto _ : state) benchmark::DoNotOptimize(audiomt::log_mel(clip));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogMel)->Arg(1)->Arg(10)->Arg(30)->Unit(benchmark::kMillisecond);

void BM_Resample(benchmark::State& state) {
  const auto clip = sine(10.0, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(audiomt::resample(clip, 16000));
}
BENCHMARK(BM_Resample)->Arg(8000)->Arg(22050)->Arg(44100)->Arg(48000)->Unit(benchmark::kMillisecond);

}  // namespace

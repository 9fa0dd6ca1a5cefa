#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "audiomt/corpus.hpp"
#include "audiomt/frontend.hpp"
#include "audiomt/random.hpp"
#include "audiomt/srwt.hpp"

namespace audiomt::synth {

// Desk-scale tasks built from tone sequences. Each symbol is one pure tone.
enum class ToyTask { ToyASR, ToyClassify, ToySRWT, ToyTranslate, ToyConflict };

std::string_view to_string(ToyTask task);
std::optional<ToyTask> parse_toy_task(std::string_view name);
// Dataset id used for manifests and mixing, e.g. "toy_asr".
std::string dataset_id(ToyTask task);
const std::vector<ToyTask>& all_toy_tasks();

inline constexpr int kSymbolCount = 16;
inline constexpr double kToneSeconds = 0.120;
inline constexpr double kGapSeconds = 0.040;
inline constexpr double kSymbolPeriod = kToneSeconds + kGapSeconds;

std::string_view symbol_name(int symbol);
double symbol_frequency(int symbol);
// Fixed permutation without fixed points, used by ToyTranslate and the
// second ToyConflict target.
int permuted_symbol(int symbol);

// Conflict pair: both records share audio; the caption record's target is
// the first symbol's name, the analysis record's target is its permuted name.
inline constexpr TaskCode kConflictCaptionCode = TaskCode::AAC;
inline constexpr TaskCode kConflictAnalysisCode = TaskCode::SEC;
inline constexpr TaskCode kClassifyCode = TaskCode::ASC;

struct SynthSpec {
  std::vector<ToyTask> tasks = all_toy_tasks();
  std::size_t train_per_task = 200;
  std::size_t heldout_per_task = 50;
  int min_symbols = 2;
  int max_symbols = 5;
  double amplitude = 0.5;
  double noise = 0.001;
};

// Word k spans [k * 0.160, k * 0.160 + 0.120] seconds.
TimedTranscript utterance_timing(const std::vector<int>& symbols);
AudioClip render_utterance(const std::vector<int>& symbols, double amplitude, double noise,
                           Rng& noise_rng);

struct SynthResult {
  // "<dataset>.<split>" -> manifest path, e.g. "toy_asr.train".
  std::map<std::string, std::filesystem::path> manifests;
  std::size_t wav_files = 0;
};

// Writes audio/ and <dataset>.{train,heldout}.jsonl under out_dir. ToySRWT
// reuses the ToyASR utterances; each task draws from its own seeded stream so
// the output for a task does not depend on which other tasks are requested.
SynthResult synth_corpus(const SynthSpec& spec, std::uint64_t seed,
                         const std::filesystem::path& out_dir);

std::filesystem::path manifest_path(const std::filesystem::path& corpus_dir,
                                    std::string_view dataset, std::string_view split);

}  // namespace audiomt::synth

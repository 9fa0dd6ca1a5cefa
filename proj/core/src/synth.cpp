#include "audiomt/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "audiomt/error.hpp"

namespace audiomt::synth {

namespace {

constexpr std::array<std::string_view, kSymbolCount> kSymbolNames = {
    "ka", "lo", "mi", "nu", "pe", "ro", "si", "tu",
    "va", "we", "xi", "yo", "za", "bu", "de", "fo"};

constexpr double kFadeSeconds = 0.010;

enum class AudioGroup { Speech, Translate, Classify, Conflict };

struct Utterance {
  std::vector<int> symbols;
  std::string wav;  // relative to the corpus dir
};

std::string names_of(const std::vector<int>& symbols, bool permuted) {
  std::string out;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i) out += ' ';
    out += symbol_name(permuted ? permuted_symbol(symbols[i]) : symbols[i]);
  }
  return out;
}

std::string_view group_name(AudioGroup g) {
  switch (g) {
    case AudioGroup::Speech: return "speech";
    case AudioGroup::Translate: return "translate";
    case AudioGroup::Classify: return "classify";
    case AudioGroup::Conflict: return "conflict";
  }
  return "?";
}

std::vector<Utterance> make_group(AudioGroup group, const SynthSpec& spec, std::uint64_t seed,
                                  std::string_view split, std::size_t count,
                                  const std::filesystem::path& out_dir, std::size_t* wav_files) {
  const std::uint64_t salt = static_cast<std::uint64_t>(group) * 2 + (split == "train" ? 0 : 1);
  Rng rng(mix_seed(seed, 100 + salt));
  std::vector<Utterance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Utterance u;
    const auto n = uniform_int(rng, spec.min_symbols, spec.max_symbols);
    for (std::int64_t k = 0; k < n; ++k) {
      u.symbols.push_back(static_cast<int>(uniform_int(rng, 0, kSymbolCount - 1)));
    }
    Rng noise_rng(rng());
    char name[96];
    std::snprintf(name, sizeof name, "audio/%s_%s_%04zu.wav",
                  std::string(group_name(group)).c_str(), std::string(split).c_str(), i);
    u.wav = name;
    write_wav(out_dir / u.wav, render_utterance(u.symbols, spec.amplitude, spec.noise, noise_rng));
    ++*wav_files;
    out.push_back(std::move(u));
  }
  return out;
}

ManifestRecord record(const Utterance& u, TaskCode code, std::string audio_language,
                      std::string text_language, std::string target) {
  ManifestRecord r;
  r.audio_path = u.wav;
  r.task_type = code;
  r.audio_language = std::move(audio_language);
  r.text_language = std::move(text_language);
  r.target = std::move(target);
  return r;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& r : records) out << to_manifest_line(r) << '\n';
}

}  // namespace

std::string_view to_string(ToyTask task) {
  switch (task) {
    case ToyTask::ToyASR: return "ToyASR";
    case ToyTask::ToyClassify: return "ToyClassify";
    case ToyTask::ToySRWT: return "ToySRWT";
    case ToyTask::ToyTranslate: return "ToyTranslate";
    case ToyTask::ToyConflict: return "ToyConflict";
  }
  return "?";
}

std::optional<ToyTask> parse_toy_task(std::string_view name) {
  for (ToyTask t : all_toy_tasks()) {
    if (to_string(t) == name || dataset_id(t) == name) return t;
  }
  return std::nullopt;
}

std::string dataset_id(ToyTask task) {
  switch (task) {
    case ToyTask::ToyASR: return "toy_asr";
    case ToyTask::ToyClassify: return "toy_classify";
    case ToyTask::ToySRWT: return "toy_srwt";
    case ToyTask::ToyTranslate: return "toy_translate";
    case ToyTask::ToyConflict: return "toy_conflict";
  }
  return "?";
}

const std::vector<ToyTask>& all_toy_tasks() {
  static const std::vector<ToyTask> tasks = {ToyTask::ToyASR, ToyTask::ToyClassify,
                                             ToyTask::ToySRWT, ToyTask::ToyTranslate,
                                             ToyTask::ToyConflict};
  return tasks;
}

std::string_view symbol_name(int symbol) {
  return kSymbolNames.at(static_cast<std::size_t>(symbol));
}

double symbol_frequency(int symbol) {
  // Log-spaced from 250 Hz to 4 kHz.
  return 250.0 * std::pow(16.0, symbol / static_cast<double>(kSymbolCount - 1));
}

int permuted_symbol(int symbol) { return (symbol * 5 + 3) % kSymbolCount; }

TimedTranscript utterance_timing(const std::vector<int>& symbols) {
  TimedTranscript t;
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const double start = static_cast<double>(k) * kSymbolPeriod;
    t.words.push_back({std::string(symbol_name(symbols[k])), start, start + kToneSeconds});
  }
  return t;
}

AudioClip render_utterance(const std::vector<int>& symbols, double amplitude, double noise,
                           Rng& noise_rng) {
  AudioClip clip;
  clip.sample_rate = kTargetSampleRate;
  const auto period = static_cast<std::size_t>(std::lround(kSymbolPeriod * kTargetSampleRate));
  const auto tone = static_cast<std::size_t>(std::lround(kToneSeconds * kTargetSampleRate));
  const auto fade = static_cast<std::size_t>(std::lround(kFadeSeconds * kTargetSampleRate));
  clip.samples.assign(period * symbols.size(), 0.0);
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const double f = symbol_frequency(symbols[k]);
    for (std::size_t n = 0; n < tone; ++n) {
      double gain = 1.0;
      if (n < fade) gain = 0.5 - 0.5 * std::cos(std::numbers::pi * n / fade);
      if (tone - 1 - n < fade) gain = 0.5 - 0.5 * std::cos(std::numbers::pi * (tone - 1 - n) / fade);
      clip.samples[k * period + n] =
          amplitude * gain * std::sin(2.0 * std::numbers::pi * f * n / kTargetSampleRate);
    }
  }
  if (noise > 0.0) {
    for (double& s : clip.samples) s += noise * standard_normal(noise_rng);
  }
  return clip;
}

std::filesystem::path manifest_path(const std::filesystem::path& corpus_dir,
                                    std::string_view dataset, std::string_view split) {
  return corpus_dir / (std::string(dataset) + "." + std::string(split) + ".jsonl");
}

SynthResult synth_corpus(const SynthSpec& spec, std::uint64_t seed,
                         const std::filesystem::path& out_dir) {
  if (spec.min_symbols < 1 || spec.max_symbols < spec.min_symbols ||
      spec.max_symbols * kSymbolPeriod > kMaxClipSeconds) {
    throw Error(ErrorCode::InvalidConfig, "symbol count range");
  }
  std::set<ToyTask> tasks(spec.tasks.begin(), spec.tasks.end());
  if (tasks.empty()) throw Error(ErrorCode::InvalidConfig, "no tasks requested");
  std::filesystem::create_directories(out_dir / "audio");

  SynthResult result;
  for (std::string_view split : {"train", "heldout"}) {
    const std::size_t count = split == "train" ? spec.train_per_task : spec.heldout_per_task;
    auto group = [&](AudioGroup g) {
      return make_group(g, spec, seed, split, count, out_dir, &result.wav_files);
    };
    auto emit = [&](ToyTask task, const std::vector<ManifestRecord>& records) {
      const auto path = manifest_path(out_dir, dataset_id(task), split);
      write_manifest(path, records);
      result.manifests[dataset_id(task) + "." + std::string(split)] = path;
    };

    if (tasks.count(ToyTask::ToyASR) || tasks.count(ToyTask::ToySRWT)) {
      const auto speech = group(AudioGroup::Speech);
      if (tasks.count(ToyTask::ToyASR)) {
        std::vector<ManifestRecord> records;
        for (const auto& u : speech) {
          records.push_back(record(u, TaskCode::ASR, "en", "en", names_of(u.symbols, false)));
        }
        emit(ToyTask::ToyASR, records);
      }
      if (tasks.count(ToyTask::ToySRWT)) {
        std::vector<ManifestRecord> records;
        for (const auto& u : speech) {
          auto r = record(u, TaskCode::SRWT, "en", "en", names_of(u.symbols, false));
          r.timed_target = utterance_timing(u.symbols);
          records.push_back(std::move(r));
        }
        emit(ToyTask::ToySRWT, records);
      }
    }
    if (tasks.count(ToyTask::ToyTranslate)) {
      std::vector<ManifestRecord> records;
      for (const auto& u : group(AudioGroup::Translate)) {
        records.push_back(record(u, TaskCode::S2TT, "en", "de", names_of(u.symbols, true)));
      }
      emit(ToyTask::ToyTranslate, records);
    }
    if (tasks.count(ToyTask::ToyClassify)) {
      std::vector<ManifestRecord> records;
      for (const auto& u : group(AudioGroup::Classify)) {
        records.push_back(record(u, kClassifyCode, std::string(kUnknownLanguage), "en",
                                 u.symbols.size() % 2 == 0 ? "even" : "odd"));
      }
      emit(ToyTask::ToyClassify, records);
    }
    if (tasks.count(ToyTask::ToyConflict)) {
      std::vector<ManifestRecord> records;
      for (const auto& u : group(AudioGroup::Conflict)) {
        const int first = u.symbols.front();
        records.push_back(record(u, kConflictCaptionCode, std::string(kUnknownLanguage), "en",
                                 std::string(symbol_name(first))));
        records.push_back(record(u, kConflictAnalysisCode, std::string(kUnknownLanguage), "en",
                                 std::string(symbol_name(permuted_symbol(first)))));
      }
      emit(ToyTask::ToyConflict, records);
    }
  }
  return result;
}

}  // namespace audiomt::synth

#pragma once

#include <string>
#include <vector>

#include "audiomt/random.hpp"
#include "audiomt/srwt.hpp"
#include "audiomt/tag_grammar.hpp"
#include "audiomt/vocabulary.hpp"

namespace audiomt::testing {

inline std::string random_word(Rng& rng, std::size_t max_len = 8) {
  static const std::string letters = "abcdefghijklmnopqrstuvwxyz'-.,?";
  const auto len = 1 + uniform_below(rng, max_len);
  std::string w;
  for (std::uint64_t i = 0; i < len; ++i) w += letters[uniform_below(rng, letters.size())];
  return w;
}

inline std::string random_text(Rng& rng, std::size_t max_words) {
  const auto n = 1 + uniform_below(rng, max_words);
  std::string s;
  for (std::uint64_t i = 0; i < n; ++i) s += (i ? " " : "") + random_word(rng);
  return s;
}

// Random header satisfying every TaskHeader invariant.
inline TaskHeader random_valid_header(Rng& rng, const Vocabulary& vocab) {
  const auto& codes = vocab.language_codes();
  auto lang = [&](bool allow_unknown) {
    if (allow_unknown && uniform_below(rng, 4) == 0) return LanguageTag::unknown();
    return LanguageTag{codes[uniform_below(rng, codes.size())]};
  };
  TaskHeader h;
  h.task.kind = static_cast<TaskKind>(uniform_below(rng, 5));
  if (h.task.kind == TaskKind::QuestionAnswer) h.task.question = random_text(rng, 6);
  const bool speech = h.task.kind == TaskKind::Transcribe || h.task.kind == TaskKind::Translate;
  h.kind = speech && uniform_below(rng, 2) ? TranscriptionKind::Transcripts : TranscriptionKind::Analysis;
  h.audio_language = lang(true);
  h.text_language = lang(false);
  h.timestamps = h.task.kind == TaskKind::Transcribe && uniform_below(rng, 2);
  if (uniform_below(rng, 2)) h.instruction = random_text(rng, 5);
  return h;
}

// Body made of text and time tokens only.
inline TokenSequence random_body(Rng& rng, const Vocabulary& vocab) {
  TokenSequence body;
  const auto n = uniform_below(rng, 12);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (uniform_below(rng, 5) == 0) {
      body.push_back(vocab.time_token(static_cast<int>(uniform_below(rng, kTimeTokenCount))));
    } else {
      body.push_back(static_cast<TokenId>(uniform_below(rng, vocab.text_size())));
    }
  }
  return body;
}

// Random valid transcript with arbitrary (off-grid) times inside [0, 30].
inline TimedTranscript random_transcript(Rng& rng) {
  TimedTranscript t;
  const auto n = uniform_below(rng, 12);
  double cursor = uniform01(rng) * 2.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const double start = cursor + uniform01(rng) * 0.5;
    const double end = start + uniform01(rng) * 1.5;
    if (end > 30.0) break;
    t.words.push_back({random_word(rng), start, end});
    cursor = end;
  }
  return t;
}

}  // namespace audiomt::testing

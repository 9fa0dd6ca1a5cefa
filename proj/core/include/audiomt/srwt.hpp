#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "audiomt/vocabulary.hpp"

namespace audiomt {

struct TimedWord {
  std::string word;
  double start = 0.0;
  double end = 0.0;

  bool operator==(const TimedWord&) const = default;
};

struct TimedTranscript {
  std::vector<TimedWord> words;

  bool operator==(const TimedTranscript&) const = default;
};

// Throws InvalidTranscript (empty word, end < start, overlap) or
// TimeOutOfRange (outside [0, 30 s]).
void validate(const TimedTranscript& transcript);

struct TimeToken {
  int index = 0;
  double seconds() const { return index * kTimeQuantum; }
};

// Nearest multiple of 40 ms; exact ties round down.
TimeToken quantize_time(double seconds);

// Per word: <|start|> tokens(word) <|end|>.
TokenSequence encode_timed(const TimedTranscript& transcript, const Vocabulary& vocab);

// Inverse of encode_timed. Stops at <|endoftext|>. Throws MalformedSRWT with
// the position and one of MissingStartTime, EmptyWord, MissingEndTime,
// DecreasingTime, UnexpectedToken as detail.
TimedTranscript decode_timed(std::span<const TokenId> tokens, const Vocabulary& vocab);

struct AlignmentOptions {
  // When set, an inserted or deleted word counts as a word whose start and
  // end are both off by this much. Otherwise unmatched words are only counted.
  std::optional<double> unmatched_penalty_ms;
};

struct AlignmentScore {
  double mean_ms = 0.0;
  std::size_t matched = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
};

// Words are paired by minimum edit distance on their text; the score is the
// mean absolute start/end boundary error over paired words, in milliseconds.
// Throws ScoreUndefined when nothing can be averaged.
AlignmentScore alignment_score(const TimedTranscript& pred, const TimedTranscript& ref,
                               const AlignmentOptions& options = {});

// {"words": [{"w": text, "s": seconds, "e": seconds}, ...]}
nlohmann::json to_json(const TimedTranscript& transcript);
TimedTranscript timed_transcript_from_json(const nlohmann::json& j);

}  // namespace audiomt

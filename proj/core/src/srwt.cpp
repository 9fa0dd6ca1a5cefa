#include "audiomt/srwt.hpp"

#include <cmath>

#include "audiomt/error.hpp"

namespace audiomt {

namespace {

void check_range(double t) {
  if (!(t >= 0.0 && t <= kMaxTimestamp)) {
    throw Error(ErrorCode::TimeOutOfRange, std::to_string(t) + " s outside [0, 30]");
  }
}

}  // namespace

void validate(const TimedTranscript& transcript) {
  double previous_end = 0.0;
  for (std::size_t i = 0; i < transcript.words.size(); ++i) {
    const auto& w = transcript.words[i];
    check_range(w.start);
    check_range(w.end);
    if (w.word.empty()) throw Error(ErrorCode::InvalidTranscript, "empty word", i);
    if (w.end < w.start) throw Error(ErrorCode::InvalidTranscript, "end before start", i);
    if (w.start < previous_end) throw Error(ErrorCode::InvalidTranscript, "overlapping words", i);
    previous_end = w.end;
  }
}

TimeToken quantize_time(double seconds) {
  check_range(seconds);
  // Ties (x.5 quanta, within rounding noise) go to the lower index.
  const double q = seconds / kTimeQuantum;
  const auto index = static_cast<int>(std::ceil(q - 0.5 - 1e-9));
  return TimeToken{std::max(0, index)};
}

TokenSequence encode_timed(const TimedTranscript& transcript, const Vocabulary& vocab) {
  validate(transcript);
  TokenSequence out;
  for (const auto& w : transcript.words) {
    out.push_back(vocab.time_token(quantize_time(w.start).index));
    const auto pieces = vocab.tokenize(w.word);
    out.insert(out.end(), pieces.begin(), pieces.end());
    out.push_back(vocab.time_token(quantize_time(w.end).index));
  }
  return out;
}

TimedTranscript decode_timed(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  TimedTranscript out;
  const TokenId eot = vocab.tag(SpecialTag::EndOfText);
  int previous_end = 0;
  std::size_t pos = 0;
  auto fail = [&](const char* reason) {
    return Error(ErrorCode::MalformedSrwt, reason, pos);
  };
  while (pos < tokens.size() && tokens[pos] != eot) {
    const auto start = vocab.time_index(tokens[pos]);
    if (!start) {
      if (vocab.is_text(tokens[pos])) throw fail("MissingStartTime");
      throw fail("UnexpectedToken");
    }
    if (*start < previous_end) throw fail("DecreasingTime");
    ++pos;
    const std::size_t word_begin = pos;
    while (pos < tokens.size() && vocab.is_text(tokens[pos])) ++pos;
    if (pos == word_begin) {
      if (pos < tokens.size() && vocab.is_time(tokens[pos])) throw fail("EmptyWord");
      throw fail("MissingEndTime");
    }
    if (pos >= tokens.size() || tokens[pos] == eot) throw fail("MissingEndTime");
    const auto end = vocab.time_index(tokens[pos]);
    if (!end) throw fail("UnexpectedToken");
    if (*end < *start) throw fail("DecreasingTime");
    out.words.push_back({vocab.detokenize(tokens.subspan(word_begin, pos - word_begin)),
                         TimeToken{*start}.seconds(), TimeToken{*end}.seconds()});
    previous_end = *end;
    ++pos;
  }
  return out;
}

AlignmentScore alignment_score(const TimedTranscript& pred, const TimedTranscript& ref,
                               const AlignmentOptions& options) {
  const std::size_t n = pred.words.size();
  const std::size_t m = ref.words.size();
  if (n == 0 && m == 0) throw Error(ErrorCode::ScoreUndefined, "both transcripts empty");

  // dist[i][j]: edit distance between pred[:i] and ref[:j].
  std::vector<std::vector<std::size_t>> dist(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) dist[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) dist[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = pred.words[i - 1].word == ref.words[j - 1].word ? 0 : 1;
      dist[i][j] = std::min({dist[i - 1][j - 1] + sub, dist[i - 1][j] + 1, dist[i][j - 1] + 1});
    }
  }

  AlignmentScore score;
  double total = 0.0;
  std::size_t items = 0;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const std::size_t sub = pred.words[i - 1].word == ref.words[j - 1].word ? 0 : 1;
      if (dist[i][j] == dist[i - 1][j - 1] + sub) {
        const auto& p = pred.words[i - 1];
        const auto& r = ref.words[j - 1];
        total += std::abs(p.start - r.start) * 1000.0 + std::abs(p.end - r.end) * 1000.0;
        items += 2;
        ++score.matched;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && dist[i][j] == dist[i - 1][j] + 1) {
      ++score.insertions;
      --i;
    } else {
      ++score.deletions;
      --j;
    }
  }
  if (options.unmatched_penalty_ms) {
    const std::size_t unmatched = score.insertions + score.deletions;
    total += 2.0 * static_cast<double>(unmatched) * *options.unmatched_penalty_ms;
    items += 2 * unmatched;
  }
  if (items == 0) throw Error(ErrorCode::ScoreUndefined, "no aligned words");
  score.mean_ms = total / static_cast<double>(items);
  return score;
}

nlohmann::json to_json(const TimedTranscript& transcript) {
  nlohmann::json words = nlohmann::json::array();
  for (const auto& w : transcript.words) {
    words.push_back({{"w", w.word}, {"s", w.start}, {"e", w.end}});
  }
  return {{"words", words}};
}

TimedTranscript timed_transcript_from_json(const nlohmann::json& j) {
  TimedTranscript out;
  for (const auto& w : j.at("words")) {
    out.words.push_back({w.at("w").get<std::string>(), w.at("s").get<double>(),
                         w.at("e").get<double>()});
  }
  return out;
}

}  // namespace audiomt

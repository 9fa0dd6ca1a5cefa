#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace audiomt {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Fixed control tags, in vocabulary order.
enum class SpecialTag : int {
  EndOfText,
  StartOfTranscripts,
  StartOfAnalysis,
  Transcribe,
  Translate,
  Caption,
  Analysis,
  QuestionAnswer,
  Timestamps,
  NoTimestamps,
  EndOfInstruction,
  ImStart,
  ImEnd,
  Unconditioned,
};

inline constexpr std::array<std::string_view, 14> kFixedTagNames = {
    "<|endoftext|>",   "<|startoftranscripts|>", "<|startofanalysis|>",
    "<|transcribe|>",  "<|translate|>",          "<|caption|>",
    "<|analysis|>",    "<|question-answer|>",    "<|timestamps|>",
    "<|notimestamps|>", "<|endofinstruction|>",  "<|im_start|>",
    "<|im_end|>",      "<|unconditioned|>",
};

inline constexpr std::string_view kUnknownLanguage = "unknown";
inline constexpr int kTimeTokenCount = 751;
inline constexpr double kTimeQuantum = 0.040;
inline constexpr double kMaxTimestamp = 30.0;

inline const std::vector<std::string>& default_language_codes() {
  static const std::vector<std::string> codes = {"zh", "en", "de", "es",
                                                 "fr", "it", "ja", "ko"};
  return codes;
}

std::string time_token_name(int index);

// Token layout: [text subwords][fixed tags][language tags, unknown last]
// [time tokens 0.00 .. 30.00]. Text subwords are byte strings; the first
// min(n, 256) are single bytes, the rest are merged pieces. Text is encoded by
// greedy longest match, so the token list alone defines the tokenizer.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> text_tokens,
             std::vector<std::string> language_codes);

  std::size_t size() const { return names_.size(); }
  std::size_t text_size() const { return text_tokens_.size(); }

  TokenId tag(SpecialTag t) const {
    return fixed_begin_ + static_cast<TokenId>(t);
  }
  std::optional<TokenId> language(std::string_view code) const;
  TokenId unknown_language() const { return time_begin_ - 1; }
  TokenId time_token(int index) const;

  bool is_text(TokenId id) const { return id >= 0 && id < fixed_begin_; }
  bool is_special(TokenId id) const {
    return id >= fixed_begin_ && id < static_cast<TokenId>(size());
  }
  bool is_language(TokenId id) const {
    return id >= language_begin_ && id < time_begin_;
  }
  bool is_time(TokenId id) const {
    return id >= time_begin_ && id < static_cast<TokenId>(size());
  }
  std::optional<SpecialTag> fixed_tag(TokenId id) const;
  std::optional<int> time_index(TokenId id) const;
  // Language code of a language tag; "unknown" for the unknown tag.
  std::optional<std::string> language_code(TokenId id) const;

  const std::vector<std::string>& language_codes() const { return languages_; }
  const std::vector<std::string>& text_tokens() const { return text_tokens_; }

  // Printable name: special tags literally, text tokens as raw bytes.
  const std::string& name(TokenId id) const;

  // Throws UnencodableText when a byte has no token (text_size < 256).
  TokenSequence tokenize(std::string_view text) const;
  // Text tokens as raw bytes, special tokens by their literal names.
  std::string detokenize(std::span<const TokenId> ids) const;

  // One token per line; text tokens escaped (\\, \xHH), specials literal.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return names_ == other.names_;
  }

 private:
  std::vector<std::string> text_tokens_;
  std::vector<std::string> languages_;
  std::vector<std::string> names_;
  TokenId fixed_begin_ = 0;
  TokenId language_begin_ = 0;
  TokenId time_begin_ = 0;
  std::unordered_map<std::string, TokenId> text_lookup_;
  std::size_t max_piece_ = 1;
};

// `merged` supplies pieces beyond the 256 single bytes; it must hold at least
// text_tokenizer_size - 256 entries when text_tokenizer_size > 256.
Vocabulary default_vocabulary(std::span<const std::string> language_codes,
                              std::size_t text_tokenizer_size,
                              std::span<const std::string> merged = {});

// Byte-pair merge table learned from whitespace-split words of `corpus`.
// Pieces never contain whitespace. Ties break on the lexicographically
// smallest pair so the result is deterministic.
std::vector<std::string> learn_merges(std::span<const std::string> corpus,
                                      std::size_t max_merges);

}  // namespace audiomt

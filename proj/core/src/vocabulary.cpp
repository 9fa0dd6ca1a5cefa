#include "audiomt/vocabulary.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "audiomt/error.hpp"
#include "audiomt/text.hpp"

namespace audiomt {

namespace {

bool looks_special(std::string_view s) {
  return s.size() >= 4 && s.substr(0, 2) == "<|" && s.substr(s.size() - 2) == "|>";
}

std::string escape_text_token(std::string_view raw) {
  std::string out;
  for (unsigned char c : raw) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c <= 0x20 || c >= 0x7F || c == '<') {
      char buf[5];
      std::snprintf(buf, sizeof buf, "\\x%02X", c);
      out += buf;
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::string unescape_text_token(std::string_view s, std::size_t line) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 1 < s.size() && s[i + 1] == '\\') {
      out.push_back('\\');
      ++i;
    } else if (i + 3 < s.size() && s[i + 1] == 'x') {
      const std::string hex(s.substr(i + 2, 2));
      out.push_back(static_cast<char>(std::stoi(hex, nullptr, 16)));
      i += 3;
    } else {
      throw Error(ErrorCode::MalformedVocabulary, "bad escape", line);
    }
  }
  return out;
}

}  // namespace

std::string time_token_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "<|%.2f|>", index * kTimeQuantum);
  return buf;
}

Vocabulary::Vocabulary(std::vector<std::string> text_tokens,
                       std::vector<std::string> language_codes)
    : text_tokens_(std::move(text_tokens)), languages_(std::move(language_codes)) {
  if (text_tokens_.empty()) {
    throw Error(ErrorCode::MalformedVocabulary, "no text tokens");
  }
  if (languages_.empty()) {
    throw Error(ErrorCode::MalformedVocabulary, "no language codes");
  }
  std::set<std::string> seen;
  for (const auto& code : languages_) {
    if (code.empty() || code == kUnknownLanguage || !seen.insert(code).second) {
      throw Error(ErrorCode::DuplicateLanguage, "language code '" + code + "'");
    }
  }
  for (std::size_t i = 0; i < text_tokens_.size(); ++i) {
    const auto& piece = text_tokens_[i];
    if (piece.empty()) throw Error(ErrorCode::MalformedVocabulary, "empty text token", i);
    if (!text_lookup_.emplace(piece, static_cast<TokenId>(i)).second) {
      throw Error(ErrorCode::MalformedVocabulary, "duplicate text token", i);
    }
    max_piece_ = std::max(max_piece_, piece.size());
  }

  names_ = text_tokens_;
  fixed_begin_ = static_cast<TokenId>(names_.size());
  for (auto tag : kFixedTagNames) names_.emplace_back(tag);
  language_begin_ = static_cast<TokenId>(names_.size());
  for (const auto& code : languages_) names_.push_back("<|" + code + "|>");
  names_.push_back("<|" + std::string(kUnknownLanguage) + "|>");
  time_begin_ = static_cast<TokenId>(names_.size());
  for (int i = 0; i < kTimeTokenCount; ++i) names_.push_back(time_token_name(i));
}

std::optional<TokenId> Vocabulary::language(std::string_view code) const {
  if (code == kUnknownLanguage) return unknown_language();
  for (std::size_t i = 0; i < languages_.size(); ++i) {
    if (languages_[i] == code) return language_begin_ + static_cast<TokenId>(i);
  }
  return std::nullopt;
}

TokenId Vocabulary::time_token(int index) const {
  if (index < 0 || index >= kTimeTokenCount) {
    throw Error(ErrorCode::TimeOutOfRange, "time index " + std::to_string(index));
  }
  return time_begin_ + index;
}

std::optional<SpecialTag> Vocabulary::fixed_tag(TokenId id) const {
  if (id < fixed_begin_ || id >= language_begin_) return std::nullopt;
  return static_cast<SpecialTag>(id - fixed_begin_);
}

std::optional<int> Vocabulary::time_index(TokenId id) const {
  if (!is_time(id)) return std::nullopt;
  return id - time_begin_;
}

std::optional<std::string> Vocabulary::language_code(TokenId id) const {
  if (!is_language(id)) return std::nullopt;
  if (id == unknown_language()) return std::string(kUnknownLanguage);
  return languages_[static_cast<std::size_t>(id - language_begin_)];
}

const std::string& Vocabulary::name(TokenId id) const {
  if (id < 0 || id >= static_cast<TokenId>(size())) {
    throw Error(ErrorCode::VocabMismatch, "token id " + std::to_string(id));
  }
  return names_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::tokenize(std::string_view text) const {
  TokenSequence out;
  std::size_t i = 0;
  std::string probe;
  while (i < text.size()) {
    std::size_t len = std::min(max_piece_, text.size() - i);
    bool matched = false;
    for (; len >= 1; --len) {
      probe.assign(text.substr(i, len));
      if (auto it = text_lookup_.find(probe); it != text_lookup_.end()) {
        out.push_back(it->second);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw Error(ErrorCode::UnencodableText,
                  "byte " + std::to_string(static_cast<unsigned char>(text[i])) +
                      " has no token",
                  i);
    }
  }
  return out;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += name(id);
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (i < text_tokens_.size()) {
      out << escape_text_token(names_[i]) << '\n';
    } else {
      out << names_[i] << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);

  std::vector<std::string> text;
  std::size_t i = 0;
  for (; i < lines.size() && !looks_special(lines[i]); ++i) {
    text.push_back(unescape_text_token(lines[i], i));
  }
  for (std::size_t t = 0; t < kFixedTagNames.size(); ++t, ++i) {
    if (i >= lines.size() || lines[i] != kFixedTagNames[t]) {
      throw Error(ErrorCode::MalformedVocabulary,
                  "expected " + std::string(kFixedTagNames[t]), i);
    }
  }
  std::vector<std::string> languages;
  const std::string unknown = "<|" + std::string(kUnknownLanguage) + "|>";
  for (; i < lines.size() && lines[i] != unknown; ++i) {
    if (!looks_special(lines[i])) {
      throw Error(ErrorCode::MalformedVocabulary, "expected language tag", i);
    }
    languages.push_back(lines[i].substr(2, lines[i].size() - 4));
  }
  if (i >= lines.size()) {
    throw Error(ErrorCode::MalformedVocabulary, "missing " + unknown, i);
  }
  ++i;
  for (int t = 0; t < kTimeTokenCount; ++t, ++i) {
    if (i >= lines.size() || lines[i] != time_token_name(t)) {
      throw Error(ErrorCode::MalformedVocabulary, "expected " + time_token_name(t), i);
    }
  }
  if (i != lines.size()) {
    throw Error(ErrorCode::MalformedVocabulary, "trailing lines", i);
  }
  return Vocabulary(std::move(text), std::move(languages));
}

Vocabulary default_vocabulary(std::span<const std::string> language_codes,
                              std::size_t text_tokenizer_size,
                              std::span<const std::string> merged) {
  if (language_codes.empty()) {
    throw Error(ErrorCode::InvalidConfig, "at least one language code required");
  }
  if (text_tokenizer_size < 2) {
    throw Error(ErrorCode::InvalidConfig, "text_tokenizer_size must be >= 2");
  }
  std::set<std::string> seen;
  for (const auto& code : language_codes) {
    if (!seen.insert(code).second) {
      throw Error(ErrorCode::DuplicateLanguage, "language code '" + code + "'");
    }
  }
  std::vector<std::string> text;
  const std::size_t bytes = std::min<std::size_t>(text_tokenizer_size, 256);
  for (std::size_t b = 0; b < bytes; ++b) text.emplace_back(1, static_cast<char>(b));
  const std::size_t wanted = text_tokenizer_size - bytes;
  if (merged.size() < wanted) {
    throw Error(ErrorCode::InvalidConfig,
                "text_tokenizer_size needs " + std::to_string(wanted) +
                    " merged pieces, got " + std::to_string(merged.size()));
  }
  for (std::size_t i = 0; i < wanted; ++i) text.push_back(merged[i]);
  return Vocabulary(std::move(text),
                    std::vector<std::string>(language_codes.begin(), language_codes.end()));
}

std::vector<std::string> learn_merges(std::span<const std::string> corpus,
                                      std::size_t max_merges) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : corpus) {
    std::string word;
    for (char c : line) {
      if (text::is_space(c)) {
        if (!word.empty()) ++word_counts[word];
        word.clear();
      } else {
        word.push_back(c);
      }
    }
    if (!word.empty()) ++word_counts[word];
  }

  struct Word {
    std::vector<std::string> pieces;
    std::size_t count;
  };
  std::vector<Word> words;
  for (const auto& [w, count] : word_counts) {
    Word entry{{}, count};
    for (char c : w) entry.pieces.emplace_back(1, c);
    words.push_back(std::move(entry));
  }

  std::vector<std::string> merges;
  std::set<std::string> produced;
  while (merges.size() < max_merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.pieces.size(); ++i) {
        pairs[{w.pieces[i], w.pieces[i + 1]}] += w.count;
      }
    }
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 1;
    for (const auto& [pair, count] : pairs) {
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr) break;
    const std::string left = best->first, right = best->second;
    const std::string joined = left + right;
    for (auto& w : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.pieces.size(); ++i) {
        if (i + 1 < w.pieces.size() && w.pieces[i] == left && w.pieces[i + 1] == right) {
          next.push_back(joined);
          ++i;
        } else {
          next.push_back(w.pieces[i]);
        }
      }
      w.pieces = std::move(next);
    }
    if (produced.insert(joined).second) merges.push_back(joined);
  }
  return merges;
}

}  // namespace audiomt

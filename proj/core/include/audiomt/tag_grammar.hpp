#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "audiomt/vocabulary.hpp"

namespace audiomt {

enum class TranscriptionKind { Transcripts, Analysis };

enum class TaskKind { Transcribe, Translate, Caption, Analysis, QuestionAnswer };

struct TaskCategory {
  TaskKind kind = TaskKind::Transcribe;
  std::string question;  // QuestionAnswer only

  static TaskCategory question_answer(std::string q) {
    return {TaskKind::QuestionAnswer, std::move(q)};
  }
  bool operator==(const TaskCategory&) const = default;
};

struct LanguageTag {
  std::string code{kUnknownLanguage};

  static LanguageTag unknown() { return {std::string(kUnknownLanguage)}; }
  bool is_unknown() const { return code == kUnknownLanguage; }
  bool operator==(const LanguageTag&) const = default;
};

// The six ordered header slots that precede every target.
struct TaskHeader {
  TranscriptionKind kind = TranscriptionKind::Transcripts;
  LanguageTag audio_language;
  TaskCategory task;
  LanguageTag text_language;
  bool timestamps = false;
  std::string instruction;

  bool operator==(const TaskHeader&) const = default;
};

enum class HeaderViolation {
  TranscriptsRequireSpeechTask,  // kind=Transcripts needs Transcribe/Translate
  TimestampsRequireTranscribe,
  OutputLanguageUnknown,
  EmptyQuestion,
};

std::string_view to_string(HeaderViolation v);
std::string_view to_string(TaskKind k);
std::string_view to_string(TranscriptionKind k);

// Empty iff every header invariant holds.
std::vector<HeaderViolation> validate(const TaskHeader& header);

// Emits kind, audio language, task (+ question text), text language,
// timestamps flag, then the instruction text. A non-empty instruction is
// closed by <|endofinstruction|> so the header can be split from a text body.
// Throws InvalidHeader naming the first violated rule, UnknownLanguage when a
// code is not in the vocabulary.
TokenSequence build_header(const TaskHeader& header, const Vocabulary& vocab);

struct ParsedHeader {
  TaskHeader header;
  TokenSequence remainder;
  std::size_t header_length = 0;
};

// Inverse of build_header. Throws MalformedHeader with the offending position
// and the expected token class as detail.
ParsedHeader parse_header(std::span<const TokenId> tokens, const Vocabulary& vocab);

}  // namespace audiomt

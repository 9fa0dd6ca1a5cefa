#include "audiomt/tag_grammar.hpp"

#include <optional>

#include "audiomt/error.hpp"

namespace audiomt {

std::string_view to_string(HeaderViolation v) {
  switch (v) {
    case HeaderViolation::TranscriptsRequireSpeechTask: return "TranscriptsRequireSpeechTask";
    case HeaderViolation::TimestampsRequireTranscribe: return "TimestampsRequireTranscribe";
    case HeaderViolation::OutputLanguageUnknown: return "OutputLanguageUnknown";
    case HeaderViolation::EmptyQuestion: return "EmptyQuestion";
  }
  return "?";
}

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Transcribe: return "transcribe";
    case TaskKind::Translate: return "translate";
    case TaskKind::Caption: return "caption";
    case TaskKind::Analysis: return "analysis";
    case TaskKind::QuestionAnswer: return "question-answer";
  }
  return "?";
}

std::string_view to_string(TranscriptionKind k) {
  return k == TranscriptionKind::Transcripts ? "transcripts" : "analysis";
}

std::vector<HeaderViolation> validate(const TaskHeader& h) {
  std::vector<HeaderViolation> out;
  if (h.kind == TranscriptionKind::Transcripts && h.task.kind != TaskKind::Transcribe &&
      h.task.kind != TaskKind::Translate) {
    out.push_back(HeaderViolation::TranscriptsRequireSpeechTask);
  }
  if (h.timestamps && h.task.kind != TaskKind::Transcribe) {
    out.push_back(HeaderViolation::TimestampsRequireTranscribe);
  }
  if (h.text_language.is_unknown()) {
    out.push_back(HeaderViolation::OutputLanguageUnknown);
  }
  if (h.task.kind == TaskKind::QuestionAnswer && h.task.question.empty()) {
    out.push_back(HeaderViolation::EmptyQuestion);
  }
  return out;
}

namespace {

SpecialTag task_tag(TaskKind k) {
  switch (k) {
    case TaskKind::Transcribe: return SpecialTag::Transcribe;
    case TaskKind::Translate: return SpecialTag::Translate;
    case TaskKind::Caption: return SpecialTag::Caption;
    case TaskKind::Analysis: return SpecialTag::Analysis;
    case TaskKind::QuestionAnswer: return SpecialTag::QuestionAnswer;
  }
  return SpecialTag::Transcribe;
}

std::optional<TaskKind> task_kind(SpecialTag t) {
  switch (t) {
    case SpecialTag::Transcribe: return TaskKind::Transcribe;
    case SpecialTag::Translate: return TaskKind::Translate;
    case SpecialTag::Caption: return TaskKind::Caption;
    case SpecialTag::Analysis: return TaskKind::Analysis;
    case SpecialTag::QuestionAnswer: return TaskKind::QuestionAnswer;
    default: return std::nullopt;
  }
}

TokenId language_token(const LanguageTag& lang, const Vocabulary& vocab) {
  auto id = vocab.language(lang.code);
  if (!id) throw Error(ErrorCode::UnknownLanguage, "language '" + lang.code + "'");
  return *id;
}

}  // namespace

TokenSequence build_header(const TaskHeader& h, const Vocabulary& vocab) {
  if (const auto violations = validate(h); !violations.empty()) {
    throw Error(ErrorCode::InvalidHeader, std::string(to_string(violations.front())));
  }
  TokenSequence out;
  out.push_back(vocab.tag(h.kind == TranscriptionKind::Transcripts
                              ? SpecialTag::StartOfTranscripts
                              : SpecialTag::StartOfAnalysis));
  out.push_back(language_token(h.audio_language, vocab));
  out.push_back(vocab.tag(task_tag(h.task.kind)));
  if (h.task.kind == TaskKind::QuestionAnswer) {
    const auto q = vocab.tokenize(h.task.question);
    out.insert(out.end(), q.begin(), q.end());
  }
  out.push_back(language_token(h.text_language, vocab));
  out.push_back(vocab.tag(h.timestamps ? SpecialTag::Timestamps : SpecialTag::NoTimestamps));
  if (!h.instruction.empty()) {
    const auto ins = vocab.tokenize(h.instruction);
    out.insert(out.end(), ins.begin(), ins.end());
    out.push_back(vocab.tag(SpecialTag::EndOfInstruction));
  }
  return out;
}

ParsedHeader parse_header(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::size_t pos = 0;
  auto fail = [&](std::string expected) -> Error {
    return Error(ErrorCode::MalformedHeader, std::move(expected), pos);
  };
  auto at = [&]() -> std::optional<TokenId> {
    if (pos >= tokens.size()) return std::nullopt;
    return tokens[pos];
  };

  ParsedHeader parsed;
  TaskHeader& h = parsed.header;

  auto kind = at() ? vocab.fixed_tag(*at()) : std::nullopt;
  if (kind == SpecialTag::StartOfTranscripts) {
    h.kind = TranscriptionKind::Transcripts;
  } else if (kind == SpecialTag::StartOfAnalysis) {
    h.kind = TranscriptionKind::Analysis;
  } else {
    throw fail("TranscriptionTag");
  }
  ++pos;

  if (!at() || !vocab.is_language(*at())) throw fail("AudioLanguageTag");
  h.audio_language.code = *vocab.language_code(*at());
  ++pos;

  auto task_token = at() ? vocab.fixed_tag(*at()) : std::nullopt;
  auto task = task_token ? task_kind(*task_token) : std::nullopt;
  if (!task) throw fail("TaskTag");
  h.task.kind = *task;
  ++pos;

  if (h.task.kind == TaskKind::QuestionAnswer) {
    const std::size_t start = pos;
    while (at() && vocab.is_text(*at())) ++pos;
    if (pos == start) throw fail("QuestionText");
    h.task.question = vocab.detokenize(tokens.subspan(start, pos - start));
  }

  if (!at() || !vocab.is_language(*at())) throw fail("TextLanguageTag");
  if (*at() == vocab.unknown_language()) throw fail("TextLanguageTag");
  h.text_language.code = *vocab.language_code(*at());
  ++pos;

  auto ts = at() ? vocab.fixed_tag(*at()) : std::nullopt;
  if (ts == SpecialTag::Timestamps) {
    h.timestamps = true;
  } else if (ts == SpecialTag::NoTimestamps) {
    h.timestamps = false;
  } else {
    throw fail("TimestampsTag");
  }
  ++pos;

  // Instruction: text tokens closed by <|endofinstruction|>. Without the
  // closing tag the instruction is empty and everything left is body.
  const TokenId end_instruction = vocab.tag(SpecialTag::EndOfInstruction);
  std::size_t scan = pos;
  while (scan < tokens.size() && vocab.is_text(tokens[scan])) ++scan;
  if (scan < tokens.size() && tokens[scan] == end_instruction) {
    if (scan == pos) throw fail("InstructionText");
    h.instruction = vocab.detokenize(tokens.subspan(pos, scan - pos));
    pos = scan + 1;
  }

  if (const auto violations = validate(h); !violations.empty()) {
    pos = 0;
    throw fail(std::string(to_string(violations.front())));
  }
  parsed.header_length = pos;
  parsed.remainder.assign(tokens.begin() + static_cast<std::ptrdiff_t>(pos), tokens.end());
  return parsed;
}

}  // namespace audiomt

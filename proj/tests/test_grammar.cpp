#include <gtest/gtest.h>

#include <fstream>

#include "audiomt/tag_grammar.hpp"
#include "audiomt/vocabulary.hpp"
#include "generators.hpp"
#include "test_util.hpp"

namespace audiomt {
namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = default_vocabulary(default_language_codes(), 256);
  return v;
}

TokenId tag(SpecialTag t) { return vocab().tag(t); }
TokenId lang(std::string_view code) { return *vocab().language(code); }

TokenSequence concat(TokenSequence a, const TokenSequence& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TaskHeader asr_header(bool timestamps) {
  TaskHeader h;
  h.kind = TranscriptionKind::Transcripts;
  h.audio_language = {"en"};
  h.task = {TaskKind::Transcribe, ""};
  h.text_language = {"en"};
  h.timestamps = timestamps;
  return h;
}

TEST(Vocabulary, DefaultSize) {
  // 256 bytes + 8 languages + unknown + 751 time tokens + the fixed tags.
  std::size_t fixed = 0;
  for ([[maybe_unused]] auto name : kFixedTagNames) ++fixed;
  EXPECT_EQ(fixed, 14u);
  EXPECT_EQ(vocab().size(), 256u + 8 + 1 + 751 + fixed);
}

TEST(Vocabulary, SingleLanguageHasTwoLanguageTokens) {
  const std::vector<std::string> codes = {"en"};
  const Vocabulary v = default_vocabulary(codes, 256);
  std::size_t n = 0;
  for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id) n += v.is_language(id);
  EXPECT_EQ(n, 2u);
}

TEST(Vocabulary, DuplicateLanguage) {
  const std::vector<std::string> codes = {"en", "en"};
  EXPECT_AUDIOMT_ERROR(default_vocabulary(codes, 256), ErrorCode::DuplicateLanguage);
}

TEST(Vocabulary, TextNeverProducesSpecialTokens) {
  const auto ids = vocab().tokenize("<|endoftext|> <|en|> <|0.00|>");
  for (TokenId id : ids) EXPECT_TRUE(vocab().is_text(id));
  EXPECT_EQ(vocab().detokenize(ids), "<|endoftext|> <|en|> <|0.00|>");
}

TEST(Vocabulary, StableOrderingAndFileRoundTrip) {
  const std::vector<std::string> corpus = {"ka lo mi", "ka lo", "even odd", "\xe4\xbd\xa0\xe5\xa5\xbd"};
  const auto merges = learn_merges(corpus, 20);
  EXPECT_EQ(merges, learn_merges(corpus, 20));
  const Vocabulary v = default_vocabulary(default_language_codes(), 256 + merges.size(), merges);
  testing::TempDir dir("vocab");
  v.save(dir.path() / "vocab.txt");
  EXPECT_TRUE(Vocabulary::load(dir.path() / "vocab.txt") == v);
  // Merged pieces shorten the encoding but never change the text.
  EXPECT_LT(v.tokenize("ka lo").size(), vocab().tokenize("ka lo").size());
  EXPECT_EQ(v.detokenize(v.tokenize("ka lo mi odd")), "ka lo mi odd");
}

TEST(Vocabulary, SpecialTagsWrittenLiterally) {
  testing::TempDir dir("vocab_literal");
  vocab().save(dir.path() / "v.txt");
  std::ifstream in(dir.path() / "v.txt");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), vocab().size());
  EXPECT_EQ(lines[tag(SpecialTag::StartOfTranscripts)], "<|startoftranscripts|>");
  EXPECT_EQ(lines[lang("en")], "<|en|>");
  EXPECT_EQ(lines[vocab().time_token(25)], "<|1.00|>");
}

TEST(BuildHeader, AsrWithTimestamps) {
  const TokenSequence expected = {tag(SpecialTag::StartOfTranscripts), lang("en"),
                                  tag(SpecialTag::Transcribe), lang("en"),
                                  tag(SpecialTag::Timestamps)};
  EXPECT_EQ(build_header(asr_header(true), vocab()), expected);
}

TEST(BuildHeader, CaptionWithInstruction) {
  TaskHeader h;
  h.kind = TranscriptionKind::Analysis;
  h.audio_language = LanguageTag::unknown();
  h.task = {TaskKind::Caption, ""};
  h.text_language = {"en"};
  h.instruction = "Describe the audio.";
  TokenSequence expected = {tag(SpecialTag::StartOfAnalysis), vocab().unknown_language(),
                            tag(SpecialTag::Caption), lang("en"), tag(SpecialTag::NoTimestamps)};
  expected = concat(expected, vocab().tokenize("Describe the audio."));
  expected.push_back(tag(SpecialTag::EndOfInstruction));
  EXPECT_EQ(build_header(h, vocab()), expected);
}

TEST(BuildHeader, TranscriptsWithCaptionRejected) {
  TaskHeader h = asr_header(false);
  h.task.kind = TaskKind::Caption;
  try {
    build_header(h, vocab());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidHeader);
    EXPECT_EQ(e.detail(), "TranscriptsRequireSpeechTask");
  }
}

TEST(BuildHeader, QuestionFollowsTaskTag) {
  TaskHeader h;
  h.kind = TranscriptionKind::Analysis;
  h.audio_language = LanguageTag::unknown();
  h.task = TaskCategory::question_answer("what is it");
  h.text_language = {"en"};
  const TokenSequence out = build_header(h, vocab());
  const auto q = vocab().tokenize("what is it");
  ASSERT_EQ(out.size(), 5 + q.size());
  EXPECT_EQ(out[2], tag(SpecialTag::QuestionAnswer));
  EXPECT_EQ(TokenSequence(out.begin() + 3, out.begin() + 3 + q.size()), q);
  EXPECT_EQ(out[3 + q.size()], lang("en"));
}

TEST(ParseHeader, RoundTripExampleOne) {
  const auto tokens = build_header(asr_header(true), vocab());
  const ParsedHeader p = parse_header(tokens, vocab());
  EXPECT_EQ(p.header, asr_header(true));
  EXPECT_TRUE(p.remainder.empty());
  EXPECT_EQ(p.header_length, tokens.size());
}

TEST(ParseHeader, MissingKindTag) {
  const TokenSequence tokens = {lang("en"), tag(SpecialTag::Transcribe), lang("en"),
                                tag(SpecialTag::NoTimestamps)};
  try {
    parse_header(tokens, vocab());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedHeader);
    EXPECT_EQ(e.position(), 0u);
    EXPECT_EQ(e.detail(), "TranscriptionTag");
  }
}

TEST(ParseHeader, KeepsBody) {
  const auto body = vocab().tokenize("hello");
  const ParsedHeader p = parse_header(concat(build_header(asr_header(false), vocab()), body), vocab());
  EXPECT_EQ(p.remainder, body);
}

TEST(ParseHeader, MisorderedTags) {
  auto tokens = build_header(asr_header(true), vocab());
  std::swap(tokens[2], tokens[3]);
  try {
    parse_header(tokens, vocab());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedHeader);
    EXPECT_EQ(e.position(), 2u);
  }
  EXPECT_AUDIOMT_ERROR(parse_header(TokenSequence{}, vocab()), ErrorCode::MalformedHeader);
}

TEST(Validate, Rules) {
  EXPECT_TRUE(validate(asr_header(true)).empty());
  TaskHeader caption;
  caption.kind = TranscriptionKind::Analysis;
  caption.audio_language = LanguageTag::unknown();
  caption.task = {TaskKind::Caption, ""};
  caption.text_language = {"en"};
  caption.timestamps = true;
  EXPECT_EQ(validate(caption), std::vector{HeaderViolation::TimestampsRequireTranscribe});
  TaskHeader unknown_out = asr_header(false);
  unknown_out.text_language = LanguageTag::unknown();
  EXPECT_EQ(validate(unknown_out), std::vector{HeaderViolation::OutputLanguageUnknown});
}

TEST(Properties, RoundTripRandomHeaders) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const TaskHeader h = testing::random_valid_header(rng, vocab());
    const TokenSequence body = testing::random_body(rng, vocab());
    const ParsedHeader p = parse_header(concat(build_header(h, vocab()), body), vocab());
    ASSERT_EQ(p.header, h);
    ASSERT_EQ(p.remainder, body);
  }
}

TEST(Properties, HeaderLength) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const TaskHeader h = testing::random_valid_header(rng, vocab());
    const std::size_t q = h.task.kind == TaskKind::QuestionAnswer ? vocab().tokenize(h.task.question).size() : 0;
    const std::size_t ins = h.instruction.empty() ? 0 : vocab().tokenize(h.instruction).size() + 1;
    EXPECT_EQ(build_header(h, vocab()).size(), 5 + q + ins);
  }
}

TEST(Properties, TaskChangeTouchesOnlyTaskTag) {
  TaskHeader a;
  a.kind = TranscriptionKind::Analysis;
  a.audio_language = {"de"};
  a.task = {TaskKind::Transcribe, ""};
  a.text_language = {"en"};
  TaskHeader b = a;
  b.task.kind = TaskKind::Translate;
  const auto ta = build_header(a, vocab());
  const auto tb = build_header(b, vocab());
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (i == 2) {
      EXPECT_NE(ta[i], tb[i]);
    } else {
      EXPECT_EQ(ta[i], tb[i]);
    }
  }
}

TEST(Properties, ValidateAgreesWithBuild) {
  Rng rng(5);
  const auto& codes = vocab().language_codes();
  for (int i = 0; i < 2000; ++i) {
    TaskHeader h;
    h.kind = static_cast<TranscriptionKind>(uniform_below(rng, 2));
    h.task.kind = static_cast<TaskKind>(uniform_below(rng, 5));
    if (uniform_below(rng, 2)) h.task.question = "q";
    h.audio_language = uniform_below(rng, 3) ? LanguageTag{codes[uniform_below(rng, codes.size())]} : LanguageTag::unknown();
    h.text_language = uniform_below(rng, 3) ? LanguageTag{codes[uniform_below(rng, codes.size())]} : LanguageTag::unknown();
    h.timestamps = uniform_below(rng, 2);
    bool built = true;
    try {
      build_header(h, vocab());
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidHeader);
      built = false;
    }
    EXPECT_EQ(validate(h).empty(), built);
  }
}

}  // namespace
}  // namespace audiomt

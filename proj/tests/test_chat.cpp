#include <gtest/gtest.h>

#include "audiomt/chat_format.hpp"
#include "generators.hpp"
#include "test_util.hpp"

namespace audiomt::chat {
namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = default_vocabulary(default_language_codes(), 256);
  return v;
}

ChatTurn user(std::vector<Segment> s) { return {Role::User, std::move(s)}; }
ChatTurn assistant(std::string text) {
  ChatTurn t{Role::Assistant, {}};
  if (!text.empty()) t.segments.push_back(Text{std::move(text)});
  return t;
}

// Two rounds: an audio question, then a text-only follow-up.
Dialogue two_round() {
  return make_dialogue({user({AudioRef{"clips/0007.wav"}, Text{"what is said here?"}}),
                        assistant("The speaker says \"good morning\"."),
                        user({Text{"How does the speaker feel?"}}),
                        assistant("The voice sounds calm.")});
}

TEST(Render, TwoRoundDialogueText) {
  const Rendered r = render(two_round(), vocab());
  const std::string expected =
      "<|im_start|>user\nAudio 1: <audio>clips/0007.wav</audio>what is said here?<|im_end|>"
      "<|im_start|>assistant\nThe speaker says \"good morning\".<|im_end|>"
      "<|im_start|>user\nHow does the speaker feel?<|im_end|>"
      "<|im_start|>assistant\nThe voice sounds calm.<|im_end|>";
  EXPECT_EQ(vocab().detokenize(r.tokens), expected);
  ASSERT_EQ(r.loss_mask.size(), r.tokens.size());
}

TEST(Render, MaskCoversOnlyAssistantContent) {
  const Rendered r = render(two_round(), vocab());
  const TokenId im_start = vocab().tag(SpecialTag::ImStart);
  const TokenId im_end = vocab().tag(SpecialTag::ImEnd);
  int turn = -1;
  bool in_role = false;
  for (std::size_t i = 0; i < r.tokens.size(); ++i) {
    if (r.tokens[i] == im_start) {
      ++turn;
      in_role = true;
      EXPECT_EQ(r.loss_mask[i], 0);
      continue;
    }
    const bool assistant_turn = turn % 2 == 1;
    if (in_role) {
      EXPECT_EQ(r.loss_mask[i], 0);
      if (vocab().detokenize(std::span(&r.tokens[i], 1)) == "\n") in_role = false;
      continue;
    }
    EXPECT_EQ(r.loss_mask[i], assistant_turn ? 1 : 0) << i;
    if (r.tokens[i] == im_end) EXPECT_EQ(r.loss_mask[i], assistant_turn ? 1 : 0);
  }
}

TEST(Render, EmptyAssistantMasksOnlyImEnd) {
  const Rendered r = render(make_dialogue({user({Text{"hi"}}), assistant("")}), vocab());
  std::size_t ones = 0;
  for (auto m : r.loss_mask) ones += m;
  EXPECT_EQ(ones, 1u);
  EXPECT_EQ(r.loss_mask.back(), 1);
  EXPECT_EQ(r.tokens.back(), vocab().tag(SpecialTag::ImEnd));
}

TEST(Render, TwoAudiosNumberedInOrder) {
  const Dialogue d = make_dialogue({user({AudioRef{"a.wav"}, AudioRef{"b.wav"}, Text{"compare"}})});
  EXPECT_EQ(d.audio_index, (std::map<int, std::string>{{1, "a.wav"}, {2, "b.wav"}}));
  const std::string text = vocab().detokenize(render(d, vocab()).tokens);
  EXPECT_NE(text.find("Audio 1: <audio>a.wav</audio>Audio 2: <audio>b.wav</audio>compare"),
            std::string::npos);
}

TEST(Render, RoleAlternation) {
  Dialogue d;
  d.turns = {assistant("x")};
  EXPECT_AUDIOMT_ERROR(render(d, vocab()), ErrorCode::InvalidDialogue);
  d = make_dialogue({user({Text{"a"}}), user({Text{"b"}})});
  EXPECT_AUDIOMT_ERROR(render(d, vocab()), ErrorCode::InvalidDialogue);
}

TEST(Parse, RoundTrip) {
  EXPECT_EQ(parse(render(two_round(), vocab()).tokens, vocab()), two_round());
}

TEST(Parse, StrayImEnd) {
  const TokenSequence tokens = {vocab().tag(SpecialTag::ImEnd)};
  try {
    parse(tokens, vocab());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedDialogue);
    EXPECT_EQ(e.position(), 0u);
  }
  TokenSequence open = render(two_round(), vocab()).tokens;
  open.pop_back();
  EXPECT_AUDIOMT_ERROR(parse(open, vocab()), ErrorCode::MalformedDialogue);
}

TEST(Parse, EmptyInput) { EXPECT_TRUE(parse(TokenSequence{}, vocab()).turns.empty()); }

TEST(Properties, RandomDialoguesRoundTrip) {
  Rng rng(31);
  for (int i = 0; i < 300; ++i) {
    std::vector<ChatTurn> turns;
    const auto rounds = 1 + uniform_below(rng, 3);
    for (std::uint64_t k = 0; k < rounds; ++k) {
      ChatTurn u{Role::User, {}};
      const auto audios = uniform_below(rng, 3);
      for (std::uint64_t a = 0; a < audios; ++a) u.segments.push_back(AudioRef{testing::random_word(rng) + ".wav"});
      u.segments.push_back(Text{testing::random_text(rng, 6)});
      turns.push_back(u);
      turns.push_back(assistant(uniform_below(rng, 4) ? testing::random_text(rng, 6) : ""));
    }
    const Dialogue d = make_dialogue(turns);
    const Rendered r = render(d, vocab());
    ASSERT_EQ(parse(r.tokens, vocab()), d);
    // Audio ids: 1..n in order of appearance.
    int expect = 1;
    for (const auto& [id, path] : d.audio_index) EXPECT_EQ(id, expect++);
  }
}

TEST(AttachAudio, Cases) {
  testing::TempDir dir("chat_audio");
  write_wav(dir.path() / "a.wav", testing::sine(440, 0.3, 16000));
  EXPECT_TRUE(attach_audio(make_dialogue({user({Text{"hi"}})}), dir.path()).empty());

  const Dialogue twice = make_dialogue({user({AudioRef{"a.wav"}, AudioRef{"a.wav"}, Text{"?"}})});
  const auto feats = attach_audio(twice, dir.path());
  ASSERT_EQ(feats.size(), 2u);
  EXPECT_EQ(feats[0].first, 1);
  EXPECT_EQ(feats[1].first, 2);
  EXPECT_TRUE(feats[0].second.values == feats[1].second.values);
  const MelSpectrogram joined = concat_features(feats);
  EXPECT_EQ(joined.frames(), 2 * feats[0].second.frames() + 1);
  EXPECT_TRUE(joined.values.row(feats[0].second.frames()).isZero());

  const Dialogue missing = make_dialogue({user({AudioRef{"nope.wav"}, Text{"?"}})});
  try {
    attach_audio(missing, dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AudioNotFound);
    EXPECT_EQ(e.position(), 1u);
    EXPECT_EQ(e.detail(), "nope.wav");
  }
}

TEST(Json, RoundTrip) {
  EXPECT_EQ(dialogue_from_json(to_json(two_round())), two_round());
}

}  // namespace
}  // namespace audiomt::chat

#include <gtest/gtest.h>

#include <cmath>

#include "audiomt/model.hpp"
#include "audiomt/tag_grammar.hpp"
#include "generators.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace audiomt {
namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = default_vocabulary(default_language_codes(), 256);
  return v;
}

ModelConfig tiny(int vocab_size = 40) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 1;
  c.ff_multiplier = 2;
  c.vocab_size = vocab_size;
  c.max_text_len = 64;
  c.seed = 5;
  return c;
}

MelSpectrogram random_mel(Eigen::Index frames, std::uint64_t seed) {
  Rng rng(seed);
  MelSpectrogram mel;
  mel.values.resize(frames, kMelChannels);
  for (Eigen::Index i = 0; i < mel.values.size(); ++i) mel.values.data()[i] = standard_normal(rng);
  return mel;
}

TrainingExample random_example(Eigen::Index frames, std::size_t len, int vocab_size, std::uint64_t seed) {
  Rng rng(seed);
  TrainingExample ex;
  ex.features = random_mel(frames, seed + 1);
  for (std::size_t i = 0; i < len; ++i) {
    ex.tokens.push_back(static_cast<TokenId>(uniform_below(rng, static_cast<std::uint64_t>(vocab_size))));
  }
  ex.loss_mask.assign(len, 1);
  ex.loss_mask[0] = 0;
  return ex;
}

TEST(Config, Validate) {
  ModelConfig c = tiny();
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_AUDIOMT_ERROR(c.validate(), ErrorCode::InvalidConfig);
  c = tiny(0);
  EXPECT_AUDIOMT_ERROR(c.validate(), ErrorCode::InvalidConfig);
}

TEST(Init, SeededAndShaped) {
  const auto a = init_parameters<double>(tiny());
  const auto b = init_parameters<double>(tiny());
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) EXPECT_TRUE(a.tensors[i].value == b.tensors[i].value);
  ModelConfig other = tiny();
  other.seed = 6;
  EXPECT_FALSE(init_parameters<double>(other).tensors[0].value == a.tensors[0].value);
  EXPECT_EQ(a.scalar_count(), a.scalar_count(ParamBlock::Encoder) + a.scalar_count(ParamBlock::Decoder));
  EXPECT_EQ(a.tensors[a.index_of("decoder.out.weight")].value.cols(), 40);
  EXPECT_AUDIOMT_ERROR(a.index_of("nope"), ErrorCode::InvalidConfig);
  const auto& gain = a.tensors[a.index_of("encoder.ln_post.gain")].value;
  EXPECT_TRUE((gain.array() == 1.0).all());
}

TEST(Encoder, ThirtySecondsGiveSevenFiftyFrames) {
  EXPECT_EQ(encoded_length(3000), 750);
  EXPECT_EQ(encoded_length(98), 25);
  const auto p = init_parameters<double>(tiny());
  EXPECT_EQ(encode(random_mel(98, 1), p).rows(), 25);
}

TEST(Encoder, GeometryMatchesFormulaForAllLengths) {
  ModelConfig c = tiny();
  c.d_model = 8;
  const auto p = init_parameters<float>(c);
  const MelSpectrogram mel = random_mel(1200, 2);
  for (Eigen::Index t = 1; t <= 1200; ++t) {
    MelSpectrogram part;
    part.values = mel.values.topRows(t);
    const auto out = encode(part, p);
    const Eigen::Index expect = static_cast<Eigen::Index>(std::ceil(std::ceil(t / 2.0) / 2.0));
    ASSERT_EQ(out.rows(), expect) << t;
    ASSERT_EQ(out.cols(), 8);
  }
}

TEST(Encoder, RejectsLongAudio) {
  const auto p = init_parameters<double>(tiny());
  EXPECT_AUDIOMT_ERROR(encode(random_mel(3001, 3), p), ErrorCode::AudioTooLong);
}

TEST(Encoder, SilenceGivesFiniteOutput) {
  const auto p = init_parameters<double>(tiny());
  MelSpectrogram mel;
  mel.values = FeatureMatrix::Zero(40, kMelChannels);
  EXPECT_TRUE(encode(mel, p).allFinite());
}

TEST(Loss, UniformLogitsGiveLogV) {
  auto p = init_parameters<double>(tiny());
  p.tensors[p.index_of("decoder.out.weight")].value.setZero();
  p.tensors[p.index_of("decoder.out.bias")].value.setZero();
  const auto ex = random_example(30, 10, 40, 4);
  EXPECT_NEAR(loss(ex, p), std::log(40.0), 1e-12);
}

TEST(Loss, MeanOverMaskedPositions) {
  const auto p = init_parameters<double>(tiny());
  auto ex = random_example(30, 8, 40, 5);
  const auto probs = next_token_probabilities(ex, p);
  ASSERT_EQ(probs.rows(), 7);
  ex.loss_mask.assign(8, 0);
  ex.loss_mask[5] = 1;
  EXPECT_NEAR(loss(ex, p), -std::log(probs(4, ex.tokens[5])), 1e-12);
  ex.loss_mask[7] = 1;
  EXPECT_NEAR(loss(ex, p),
              -(std::log(probs(4, ex.tokens[5])) + std::log(probs(6, ex.tokens[7]))) / 2, 1e-12);
}

TEST(Loss, RowsAreDistributions) {
  const auto p = init_parameters<double>(tiny());
  const auto probs = next_token_probabilities(random_example(50, 20, 40, 6), p);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    EXPECT_NEAR(probs.row(r).sum(), 1.0, 1e-6);
    EXPECT_TRUE((probs.row(r).array() >= 0).all());
  }
}

TEST(Loss, Errors) {
  const auto p = init_parameters<double>(tiny());
  auto ex = random_example(30, 8, 40, 7);
  ex.tokens[3] = 40;
  EXPECT_AUDIOMT_ERROR(loss(ex, p), ErrorCode::VocabMismatch);
  ex = random_example(30, 8, 40, 7);
  ex.loss_mask[0] = 1;
  EXPECT_AUDIOMT_ERROR(loss(ex, p), ErrorCode::InvalidExample);
  ex = random_example(30, 66, 40, 7);
  EXPECT_AUDIOMT_ERROR(loss(ex, p), ErrorCode::InvalidExample);
}

TEST(Loss, CausalDecoder) {
  const auto p = init_parameters<double>(tiny());
  auto ex = random_example(30, 10, 40, 8);
  const auto before = next_token_probabilities(ex, p);
  ex.tokens[9] = (ex.tokens[9] + 1) % 40;
  const auto after = next_token_probabilities(ex, p);
  EXPECT_TRUE(before.isApprox(after, 0.0));
  ex.tokens[4] = (ex.tokens[4] + 1) % 40;
  const auto changed = next_token_probabilities(ex, p);
  EXPECT_TRUE(changed.topRows(4) == before.topRows(4));
  EXPECT_FALSE(changed.row(4) == before.row(4));
}

TEST(Gradients, MatchFiniteDifferences) {
  auto p = init_parameters<double>(tiny());
  testing::perturb(p, 0.3, 9);
  const auto ex = random_example(13, 9, 40, 10);
  const auto r = testing::gradient_check(ex, p, 12, 1e-4, 1e-5, 11);
  EXPECT_LT(r.worst_relative, 1e-4) << r.worst_name;
  EXPECT_GT(r.checked, 100u);
}

TEST(Gradients, ScopeSkipsFrozenBlock) {
  const auto p = init_parameters<double>(tiny());
  const auto ex = random_example(13, 9, 40, 12);
  auto g = p.zeros_like();
  const LossSum s = accumulate_gradients(ex, p, 1.0, g, {false, true});
  EXPECT_EQ(s.count, 8u);
  EXPECT_NEAR(s.nll / 8, loss(ex, p), 1e-12);
  bool decoder_moved = false;
  for (const auto& t : g.tensors) {
    if (t.block == ParamBlock::Encoder) EXPECT_TRUE(t.value.isZero(0)) << t.name;
    else decoder_moved = decoder_moved || !t.value.isZero(0);
  }
  EXPECT_TRUE(decoder_moved);
}

TEST(Gradients, FloatTracksDouble) {
  auto pd = init_parameters<double>(tiny());
  const auto pf = pd.cast<float>();
  const auto ex = random_example(20, 9, 40, 13);
  EXPECT_NEAR(loss(ex, pf), loss(ex, pd), 1e-4);
}

TEST(Decode, HeaderOnlyAndDeterministic) {
  ModelConfig c = tiny(static_cast<int>(vocab().size()));
  const auto p = init_parameters<float>(c);
  Rng rng(14);
  const TaskHeader h = testing::random_valid_header(rng, vocab());
  const TokenSequence header = build_header(h, vocab());
  const MelSpectrogram mel = random_mel(40, 15);
  EXPECT_EQ(greedy_decode(mel, header, p, 0, vocab()), header);
  const auto a = greedy_decode(mel, header, p, 10, vocab());
  const auto b = greedy_decode(mel, header, p, 10, vocab());
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::equal(header.begin(), header.end(), a.begin()));
  EXPECT_LE(a.size(), header.size() + 10);
}

TEST(Decode, Errors) {
  ModelConfig c = tiny(static_cast<int>(vocab().size()));
  const auto p = init_parameters<float>(c);
  const MelSpectrogram mel = random_mel(40, 16);
  const TokenSequence bad = {vocab().tag(SpecialTag::EndOfText)};
  EXPECT_AUDIOMT_ERROR(greedy_decode(mel, bad, p, 5, vocab()), ErrorCode::MalformedHeader);
  const auto small = init_parameters<float>(tiny());
  Rng rng(17);
  const TokenSequence header =
      build_header(testing::random_valid_header(rng, vocab()), vocab());
  EXPECT_AUDIOMT_ERROR(greedy_decode(mel, header, small, 5, vocab()), ErrorCode::VocabMismatch);
  EXPECT_AUDIOMT_ERROR(greedy_decode(random_mel(3001, 1), header, p, 5, vocab()), ErrorCode::AudioTooLong);
}

}  // namespace
}  // namespace audiomt

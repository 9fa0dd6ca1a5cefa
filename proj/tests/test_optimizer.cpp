#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "audiomt/checkpoint.hpp"
#include "audiomt/optimizer.hpp"
#include "audiomt/random.hpp"
#include "test_util.hpp"

namespace audiomt {
namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 1;
  c.ff_multiplier = 2;
  c.vocab_size = 30;
  c.max_text_len = 32;
  c.seed = 2;
  return c;
}

std::vector<TrainingExample> batch(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingExample> out;
  for (int b = 0; b < 3; ++b) {
    TrainingExample ex;
    ex.features.values.resize(20 + b, kMelChannels);
    for (Eigen::Index i = 0; i < ex.features.values.size(); ++i) ex.features.values.data()[i] = standard_normal(rng);
    for (int i = 0; i < 6 + b; ++i) ex.tokens.push_back(static_cast<TokenId>(uniform_below(rng, 30)));
    ex.loss_mask.assign(ex.tokens.size(), 1);
    ex.loss_mask[0] = 0;
    out.push_back(std::move(ex));
  }
  return out;
}

bool same(const Parameters<double>& a, const Parameters<double>& b, ParamBlock block) {
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].block == block && !(a.tensors[i].value == b.tensors[i].value)) return false;
  }
  return true;
}

TEST(Schedule, WarmupThenCosine) {
  const LrSchedule s{3e-4, 3e-5, 200, 3000};
  EXPECT_DOUBLE_EQ(s.at(100), 1.5e-4);
  EXPECT_DOUBLE_EQ(s.at(200), 3e-4);
  EXPECT_DOUBLE_EQ(s.at(3000), 3e-5);
  EXPECT_DOUBLE_EQ(s.at(5000), 3e-5);
  const double mid = 3e-5 + 0.5 * (3e-4 - 3e-5) * (1 + std::cos(std::numbers::pi * 0.5));
  EXPECT_NEAR(s.at(1600), mid, 1e-15);
  for (std::int64_t t = 201; t < 3000; ++t) EXPECT_LE(s.at(t + 1), s.at(t));
}

TEST(Stage, ParseAndScope) {
  EXPECT_EQ(parse_stage("pretrain"), TrainStage::Pretrain);
  EXPECT_AUDIOMT_ERROR(parse_stage("warm"), ErrorCode::Usage);
  EXPECT_TRUE(scope_for(TrainStage::Pretrain).encoder);
  EXPECT_FALSE(scope_for(TrainStage::Pretrain).decoder);
  EXPECT_FALSE(scope_for(TrainStage::Finetune).encoder);
}

TEST(Step, StagesFreezeTheOtherBlock) {
  const auto init = init_parameters<double>(tiny());
  const auto data = batch(1);
  const LrSchedule s{1e-2, 1e-3, 1, 10};
  for (TrainStage stage : {TrainStage::Pretrain, TrainStage::Finetune, TrainStage::Joint}) {
    auto p = init;
    auto opt = OptimizerState<double>::init(p);
    train_step<double>(data, p, opt, stage, s);
    EXPECT_EQ(same(p, init, ParamBlock::Encoder), !trains(stage, ParamBlock::Encoder));
    EXPECT_EQ(same(p, init, ParamBlock::Decoder), !trains(stage, ParamBlock::Decoder));
  }
}

TEST(Step, ZeroGradientOnlyDecays) {
  const auto init = init_parameters<double>(tiny());
  auto p = init;
  auto grads = p.zeros_like();
  auto opt = OptimizerState<double>::init(p);
  apply_update(p, grads, opt, TrainStage::Joint, 0.01);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    EXPECT_TRUE(p.tensors[i].value.isApprox(init.tensors[i].value * (1 - 0.01 * 0.05), 1e-15));
  }
  EXPECT_EQ(opt.step, 1);
}

TEST(Step, FirstUpdateHasMagnitudeLr) {
  // With bias correction the first Adam step is lr * sign(g) up to eps.
  auto p = init_parameters<double>(tiny());
  auto grads = p.zeros_like();
  grads.tensors[0].value.setConstant(1e-3);
  AdamWConfig hp;
  hp.weight_decay = 0;
  auto opt = OptimizerState<double>::init(p, hp);
  const auto before = p.tensors[0].value;
  apply_update(p, grads, opt, TrainStage::Joint, 0.1);
  const double delta = (before - p.tensors[0].value).cwiseAbs().maxCoeff();
  EXPECT_NEAR(delta, 0.1 * 1e-3 / (1e-3 + 1e-6), 1e-9);
}

TEST(Step, ClipsGlobalNorm) {
  auto p = init_parameters<double>(tiny());
  auto grads = p.zeros_like();
  grads.tensors[0].value.setConstant(10.0);
  auto opt = OptimizerState<double>::init(p);
  const double norm = apply_update(p, grads, opt, TrainStage::Joint, 0.0);
  EXPECT_NEAR(norm, 10.0 * std::sqrt(static_cast<double>(grads.tensors[0].value.size())), 1e-9);
  EXPECT_NEAR(grads.tensors[0].value.norm(), 1.0, 1e-12);
}

TEST(Step, ReducesLossOnFixedBatch) {
  auto p = init_parameters<double>(tiny());
  auto opt = OptimizerState<double>::init(p);
  const auto data = batch(3);
  const LrSchedule s{3e-3, 3e-3, 0, 100};
  const double first = train_step<double>(data, p, opt, TrainStage::Joint, s).loss;
  double last = first;
  for (int i = 0; i < 30; ++i) last = train_step<double>(data, p, opt, TrainStage::Joint, s).loss;
  EXPECT_LT(last, first * 0.7);
}

TEST(Step, DivergenceLeavesStateUntouched) {
  auto p = init_parameters<double>(tiny());
  auto opt = OptimizerState<double>::init(p);
  auto data = batch(4);
  const LrSchedule s{1e-3, 1e-4, 1, 10};
  train_step<double>(data, p, opt, TrainStage::Joint, s);
  const auto p_before = p;
  const auto opt_before = opt;
  data[1].features.values(3, 5) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_AUDIOMT_ERROR(train_step<double>(data, p, opt, TrainStage::Joint, s), ErrorCode::DivergenceDetected);
  EXPECT_TRUE(same(p, p_before, ParamBlock::Encoder) && same(p, p_before, ParamBlock::Decoder));
  EXPECT_EQ(opt.step, opt_before.step);
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    EXPECT_TRUE(opt.m[i] == opt_before.m[i]);
    EXPECT_TRUE(opt.v[i] == opt_before.v[i]);
  }
}

TEST(Checkpoint, BitExactRoundTrip) {
  testing::TempDir dir("ckpt");
  auto p = init_parameters<double>(tiny());
  auto opt = OptimizerState<double>::init(p);
  train_step<double>(batch(5), p, opt, TrainStage::Joint, LrSchedule{1e-3, 1e-4, 1, 10});
  const auto path = dir.path() / "c.bin";
  save_checkpoint(path, p, &opt);
  const auto back = load_checkpoint<double>(path);
  EXPECT_EQ(back.params.config, p.config);
  ASSERT_EQ(back.params.tensors.size(), p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    EXPECT_EQ(back.params.tensors[i].name, p.tensors[i].name);
    EXPECT_EQ(back.params.tensors[i].block, p.tensors[i].block);
    EXPECT_TRUE(back.params.tensors[i].value == p.tensors[i].value);
  }
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(back.optimizer->step, 1);
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    EXPECT_TRUE(back.optimizer->m[i] == opt.m[i]);
    EXPECT_TRUE(back.optimizer->v[i] == opt.v[i]);
  }
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));

  save_checkpoint(path, p);
  EXPECT_FALSE(load_checkpoint<double>(path).optimizer.has_value());
}

TEST(Checkpoint, Errors) {
  testing::TempDir dir("ckpt_err");
  EXPECT_AUDIOMT_ERROR(load_checkpoint<double>(dir.path() / "missing.bin"), ErrorCode::CheckpointNotFound);
  const auto path = dir.path() / "c.bin";
  save_checkpoint(path, init_parameters<double>(tiny()));
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full / 2);
  EXPECT_AUDIOMT_ERROR(load_checkpoint<double>(path), ErrorCode::MalformedCheckpoint);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT and some bytes";
  }
  EXPECT_AUDIOMT_ERROR(load_checkpoint<double>(path), ErrorCode::MalformedCheckpoint);
}

TEST(Checkpoint, FloatRoundTripIsExact) {
  testing::TempDir dir("ckpt_float");
  const auto p = init_parameters<float>(tiny());
  save_checkpoint(dir.path() / "f.bin", p);
  const auto back = load_checkpoint<float>(dir.path() / "f.bin");
  for (std::size_t i = 0; i < p.tensors.size(); ++i) EXPECT_TRUE(back.params.tensors[i].value == p.tensors[i].value);
}

}  // namespace
}  // namespace audiomt

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "staa/scene.hpp"
#include "staa/trainer.hpp"

using namespace staa;

namespace {

UpscaleConfig tiny_config() {
  UpscaleConfig cfg;
  cfg.features = 4;
  cfg.rdb_blocks = 1;
  cfg.rdb_layers = 2;
  cfg.growth = 4;
  return cfg;
}

TrainConfig quick_config(std::size_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.lr0 = 2e-3;
  cfg.patch_t = 4;
  cfg.patch_h = 8;
  cfg.patch_w = 8;
  cfg.log_every = 1;
  cfg.val_count = 1;
  return cfg;
}

std::vector<VideoVolume> static_clips(std::size_t n) {
  std::vector<VideoVolume> out;
  for (std::size_t i = 0; i < n; ++i) {
    SceneSpec s;
    s.sprite = SpriteKind::Checkerboard;
    s.frames = 4;
    s.height = 12;
    s.width = 12;
    s.sprite_h = 6;
    s.sprite_w = 6;
    s.checker_cell = 2;
    s.seed = i;
    out.push_back(generate_scene(s));
  }
  return out;
}

}  // namespace

TEST(Schedule, StepDecay) {
  TrainConfig cfg;
  cfg.steps = 100;
  EXPECT_DOUBLE_EQ(lr_at(0, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at(49, cfg), 2e-4);
  EXPECT_NEAR(lr_at(50, cfg), 4e-5, 1e-18);
  EXPECT_NEAR(lr_at(79, cfg), 4e-5, 1e-18);
  EXPECT_NEAR(lr_at(80, cfg), 8e-6, 1e-18);
  EXPECT_NEAR(lr_at(99, cfg), 8e-6, 1e-18);
}

TEST(Schedule, Validation) {
  TrainConfig cfg;
  cfg.milestones = {0.8, 0.5};
  EXPECT_THROW(cfg.validate(), SpecError);
  cfg = {};
  cfg.lr0 = 0.0;
  EXPECT_THROW(cfg.validate(), SpecError);
  cfg = {};
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), SpecError);
}

TEST(Adam, FirstStepIsSignedLr) {
  Tensor<float> p = Tensor<float>::from({3}, {1.0f, -2.0f, 0.5f});
  std::map<std::string, Tensor<float>*> params{{"w", &p}};
  std::map<std::string, Tensor<float>> grads{{"w", Tensor<float>::from({3}, {0.3f, -4.0f, 0.0f})}};
  AdamState st;
  adam_step(params, grads, st, 0.01);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-6);
  EXPECT_NEAR(p[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-6);
  EXPECT_EQ(p[2], 0.5f);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor<float> p = Tensor<float>::from({2}, {1.0f, 2.0f});
  const auto before = p;
  std::map<std::string, Tensor<float>*> params{{"w", &p}};
  AdamState st;
  for (int i = 0; i < 5; ++i) adam_step(params, {{"w", Tensor<float>::zeros({2})}}, st, 0.1);
  EXPECT_EQ(p, before);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Tensor<float> p({2});
  std::map<std::string, Tensor<float>*> params{{"conv.w", &p}};
  AdamState st;
  try {
    adam_step(params, {{"conv.w", Tensor<float>::from({2}, {0.0f, std::nanf("")})}}, st, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("conv.w"), std::string::npos);
  }
  EXPECT_EQ(st.t, 0u);
  EXPECT_THROW(adam_step(params, {{"other", Tensor<float>({2})}}, st, 0.1), SpecError);
}

TEST(Train, DeterministicForSeed) {
  const auto clips = static_clips(3);
  auto a = train_joint(clips, tiny_config(), Constraint::Softmax, quick_config(3));
  auto b = train_joint(clips, tiny_config(), Constraint::Softmax, quick_config(3));
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].train_l1, b.curve[i].train_l1);
}

TEST(Train, CurveBookkeeping) {
  auto cfg = quick_config(8);
  cfg.log_every = 3;
  std::vector<LossRow> seen;
  const auto res = train_joint(static_clips(3), tiny_config(), Constraint::Softmax, cfg,
                               [&](const LossRow& r) { seen.push_back(r); });
  ASSERT_EQ(res.curve.size(), 4u);  // steps 0, 3, 6 and the last (7)
  EXPECT_EQ(res.curve[0].step, 0u);
  EXPECT_EQ(res.curve[1].step, 3u);
  EXPECT_EQ(seen.size(), res.curve.size());
  EXPECT_TRUE(std::isnan(res.curve[0].val_psnr));
  EXPECT_TRUE(std::isfinite(res.val_psnr));
  EXPECT_EQ(res.checkpoint.step, 8u);
}

TEST(Train, FilterWeightsMove) {
  const auto res = train_joint(static_clips(3), tiny_config(), Constraint::Softmax, quick_config(1));
  EXPECT_NE(res.model.filter.raw_weights, Tensor<float>::zeros({3, 3, 3}));
}

TEST(Train, BatchGradientReachesFilter) {
  auto cfg = quick_config(1);
  cfg.batch = 3;
  const auto res = train_joint(static_clips(4), tiny_config(), Constraint::Softmax, cfg);
  EXPECT_NE(res.model.filter.raw_weights, Tensor<float>::zeros({3, 3, 3}));
}

TEST(Train, StaticSceneImproves) {
  SceneSpec s;
  s.frames = 4;
  s.height = 16;
  s.width = 16;
  s.sprite_h = 8;
  s.sprite_w = 6;
  const auto clip = generate_scene(s);
  auto cfg = quick_config(40);
  cfg.log_every = 10;
  const auto res = train_joint({clip, clip}, tiny_config(), Constraint::Softmax, cfg);
  const double before = validation_psnr(Model::create(tiny_config(), Constraint::Softmax, cfg.seed), {clip});
  EXPECT_GT(res.val_psnr, before);
}

TEST(Train, QuantizedRunStaysFinite) {
  const auto res = train_joint(static_clips(3), tiny_config(), Constraint::SoftmaxQuantize, quick_config(10));
  for (const auto& row : res.curve) EXPECT_TRUE(std::isfinite(row.train_l1));
  for (float v : res.model.encode(static_clips(1)[0]).data.data()) EXPECT_EQ(v, std::round(v));
}

TEST(Train, UpsamplerOnlyKeepsBoxFixed) {
  auto ucfg = tiny_config();
  ucfg.s = 1;
  const auto res = train_upsampler_only(static_clips(3), ucfg, 2, quick_config(3));
  EXPECT_EQ(res.model.mode, DownsamplerMode::FixedClassical);
  EXPECT_EQ(res.model.fixed.box_length, 2u);
  const auto back = from_checkpoint(res.checkpoint);
  EXPECT_EQ(back.mode, DownsamplerMode::FixedClassical);
  EXPECT_EQ(back.fixed.kind, ClassicalKind::BoxTemporal);
}

TEST(Train, PatchLargerThanClipRejected) {
  auto cfg = quick_config(1);
  cfg.patch_h = 64;
  EXPECT_THROW(train_joint(static_clips(2), tiny_config(), Constraint::Softmax, cfg), DimensionError);
  EXPECT_THROW(train_joint({}, tiny_config(), Constraint::Softmax, cfg), EmptyInputError);
}

TEST(Train, NonIntegerFactorNeedsFixedFilter) {
  auto ucfg = tiny_config();
  ucfg.r = Rational(6, 5);
  EXPECT_THROW(Model::create(ucfg, Constraint::Softmax, 0), SpecError);
}

TEST(Train, ChannelMeanDrift) {
  const VideoVolume flat(Tensor<float>::full({3, 4, 8, 8}, 100.0f));
  const auto soft = Model::create(tiny_config(), Constraint::Softmax, 0);
  for (double d : channel_mean_drift(soft, {flat})) EXPECT_NEAR(d, 0.0, 1e-3);
  auto none = Model::create(tiny_config(), Constraint::None, 0);
  none.filter.raw_weights = Tensor<float>::full({3, 3, 3}, 2.0f / 27.0f);
  for (double d : channel_mean_drift(none, {flat})) EXPECT_NEAR(d, 100.0, 1e-3);
  EXPECT_THROW(channel_mean_drift(none, {}), EmptyInputError);
}

TEST(Checkpoint, TwoScalarLayout) {
  Checkpoint ck;
  ck.tensors["a"] = Tensor<float>::scalar(1.0f);
  ck.tensors["b"] = Tensor<float>::scalar(2.0f);
  EXPECT_EQ(encode_checkpoint(ck).size(), 36u);
}

TEST(Checkpoint, RoundTripAndErrors) {
  Checkpoint ck;
  std::mt19937_64 rng(1);
  ck.tensors["w"] = Tensor<float>::uniform({2, 3, 4}, -1.0f, 1.0f, rng);
  ck.tensors["x"] = Tensor<float>::scalar(5.0f);
  ck.step = 123456789012ull;
  const auto bytes = encode_checkpoint(ck);
  EXPECT_EQ(decode_checkpoint(bytes), ck);
  auto bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes + "z"), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), IoError);
}

TEST(Checkpoint, ModelRoundTrip) {
  auto m = Model::create(tiny_config(), Constraint::SoftmaxQuantize, 7);
  std::mt19937_64 rng(2);
  m.filter.raw_weights = Tensor<float>::uniform({3, 3, 3}, -1.0f, 1.0f, rng);
  const auto ck = to_checkpoint(m, 42);
  const auto back = from_checkpoint(decode_checkpoint(encode_checkpoint(ck)));
  EXPECT_EQ(to_checkpoint(back, 42), ck);
  EXPECT_EQ(back.filter.constraint, Constraint::SoftmaxQuantize);
  EXPECT_EQ(back.config.features, 4u);
  const auto clip = static_clips(1)[0];
  EXPECT_EQ(back.decode(back.encode(clip)).data, m.decode(m.encode(clip)).data);
  auto missing = ck;
  missing.tensors.erase("ds.raw");
  EXPECT_THROW(from_checkpoint(missing), FormatError);
  auto unknown = ck;
  unknown.tensors["cfg.ds.constraint"] = Tensor<float>::scalar(9.0f);
  EXPECT_THROW(from_checkpoint(unknown), FormatError);
}

TEST(LossCsv, Format) {
  std::ostringstream out;
  write_loss_csv({{0, 0.002, 0.5}, {10, 0.0004, 0.25, 30.5}}, out);
  EXPECT_EQ(out.str(), "step,lr,train_l1,val_psnr\n0,0.002,0.5,\n10,0.0004,0.25,30.5\n");
}

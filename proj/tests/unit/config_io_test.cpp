#include <gtest/gtest.h>

#include <string>

#include "tempodet/config_io.hpp"
#include "tempodet/errors.hpp"

namespace tempodet::config {
namespace {

using detector::ModelConfig;
using detector::Variant;

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ModelConfigFile, FormatParseRoundTrip) {
  for (auto v : {Variant::kBaseline, Variant::kTemporal, Variant::kTemporalCbam}) {
    auto c = ModelConfig::for_variant(v, 8, 3, 128, 4);
    c.anchors[1][2] = {33.25, 17.5};
    EXPECT_EQ(parse_model_config(format_model_config(c)), c);
  }
}

TEST(ModelConfigFile, VariantSetsFlagsAndOverridesApply) {
  const auto c = parse_model_config("variant: temporal_cbam\nwidth: 4\nimage_size: 64\nnum_classes: 2\n");
  EXPECT_EQ(c.variant, Variant::kTemporalCbam);
  EXPECT_TRUE(c.cbam_after_neck);
  EXPECT_TRUE(c.temporal());
  EXPECT_EQ(c.width, 4);
  EXPECT_EQ(c.anchors, detector::default_anchors(64));
}

TEST(ModelConfigFile, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of([] { parse_model_config("width: 8\ncolour: red\n", "m.yaml"); }).find("m.yaml:2:"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_model_config("width: 8\n\nimage_size: lots\n", "m.yaml"); }).find("m.yaml:3:"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_model_config("variant: yolo\n", "m.yaml"); }).find("m.yaml:1:"), std::string::npos);
  EXPECT_NE(error_of([] { parse_model_config("width: [1\n", "m.yaml"); }).find("m.yaml:"), std::string::npos);
  EXPECT_FALSE(error_of([] { parse_model_config("image_size: 100\n", "m.yaml"); }).empty());
}

TEST(TrainConfigFile, FormatParseRoundTrip) {
  detector::TrainConfig c;
  c.epochs = 7;
  c.lr = 0.0025;
  c.optimizer = detector::OptimizerKind::kAdamW;
  c.loss.box = 0.1;
  c.ciou = true;
  c.init_weights = "runs/base/best.ckpt";
  c.seed = 12345678901ULL;
  c.split = {0.5, 0.25, 0.25};
  c.augment.mosaic_p = 0.0;
  const auto text = format_train_config(c);
  const auto file = parse_train_file(text);
  EXPECT_TRUE(file.has_lr);
  EXPECT_TRUE(file.has_optimizer);
  EXPECT_EQ(format_train_config(file.config), text);
}

TEST(TrainConfigFile, VariantDefaultsFillUnsetKeys) {
  const auto file = parse_train_file("epochs: 2\n");
  const auto base = resolve_train_config(file, Variant::kBaseline);
  EXPECT_EQ(base.optimizer, detector::OptimizerKind::kSgdMomentum);
  EXPECT_DOUBLE_EQ(base.lr, 0.01);
  const auto temporal = resolve_train_config(file, Variant::kTemporal);
  EXPECT_EQ(temporal.optimizer, detector::OptimizerKind::kAdamW);
  EXPECT_DOUBLE_EQ(temporal.lr, 0.001);
  const auto adam_base = resolve_train_config(parse_train_file("optimizer: adamw\n"), Variant::kBaseline);
  EXPECT_DOUBLE_EQ(adam_base.lr, 0.001);
}

TEST(TrainConfigFile, NestedModelMapIsKept) {
  const auto file = parse_train_file("epochs: 1\nmodel:\n  variant: temporal\n  width: 4\n");
  const auto m = parse_model_config(file.model_yaml);
  EXPECT_EQ(m.variant, Variant::kTemporal);
  EXPECT_EQ(m.width, 4);
}

TEST(TrainConfigFile, InvalidValuesRejected) {
  EXPECT_FALSE(error_of([] { resolve_train_config(parse_train_file("lr: 0\n"), Variant::kBaseline).validate(); }).empty());
  EXPECT_NE(error_of([] { parse_train_file("epochs: 1\nloss:\n  box: 1\n  iou: 2\n", "t.yaml"); }).find("t.yaml:4:"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_train_file("optimizer: lbfgs\n", "t.yaml"); }).find("t.yaml:1:"), std::string::npos);
}

TEST(SynthConfigFile, RoundTrip) {
  SynthSettings s;
  s.seed = 9;
  s.synth.n_videos = 20;
  s.synth.motion = data::Motion::kGradual;
  s.synth.jump_prob = 0.125;
  const auto text = format_synth_config(s);
  const auto back = parse_synth_config(text);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.synth.n_videos, 20);
  EXPECT_EQ(back.synth.motion, data::Motion::kGradual);
  EXPECT_EQ(format_synth_config(back), text);
}

TEST(AugmentConfigFile, RoundTripAndRangeChecks) {
  auto a = augment::AugmentConfig::disabled();
  a.blur_sigma = {0.25, 1.5};
  EXPECT_EQ(format_augment_config(parse_augment_config(format_augment_config(a))), format_augment_config(a));
  EXPECT_FALSE(error_of([] { parse_augment_config("mosaic_p: 1.5\n"); }).empty());
}

}  // namespace
}  // namespace tempodet::config

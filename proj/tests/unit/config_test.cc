// config_test.cc

// Copyright 2026  The avsr-cmfe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>

#include <gtest/gtest.h>

#include "avsr/config.h"
#include "avsr/error.h"

namespace avsr {
namespace {

TEST(Config, PresetsValidate) {
  EXPECT_NO_THROW(PresetConfig("desk").Validate());
  EXPECT_NO_THROW(PresetConfig("paper-scale-validate").Validate());
  EXPECT_THROW(PresetConfig("huge"), ConfigError);
  const ExperimentConfig p = PresetConfig("paper-scale-validate");
  EXPECT_EQ(p.model.conformer.d_model, 512);
  EXPECT_EQ(p.model.conformer.n_head, 8);
  EXPECT_EQ(p.model.conformer.d_ffn, 2048);
  EXPECT_EQ(p.model.fusion.AudioBlocks(), 12);
}

TEST(Config, UnknownKeyIsError) {
  EXPECT_THROW(ConfigFromJson(R"({"corpus": {"num_unitz": 4}})", "desk"), ConfigError);
  EXPECT_THROW(ConfigFromJson(R"({"extra": 1})", "desk"), ConfigError);
}

TEST(Config, TypeMismatchIsError) {
  EXPECT_THROW(ConfigFromJson(R"({"corpus": {"num_units": "four"}})", "desk"), ConfigError);
  EXPECT_THROW(ConfigFromJson(R"({"model": {"fusion": 3}})", "desk"), ConfigError);
  EXPECT_THROW(ConfigFromJson("{not json", "desk"), ConfigError);
}

TEST(Config, MergeOverlaysOnlyGivenKeys) {
  const ExperimentConfig c =
      ConfigFromJson(R"({"corpus": {"num_units": 4}, "model": {"fusion": {"insert": "inner"}}})", "desk");
  EXPECT_EQ(c.corpus.num_units, 4);
  EXPECT_EQ(c.model.vocab, 4);
  EXPECT_EQ(c.model.num_senones, 12);
  EXPECT_EQ(c.model.fusion.insert, encoder::Insertion::kInner);
  EXPECT_EQ(c.model.conformer.d_model, PresetConfig("desk").model.conformer.d_model);
}

TEST(Config, JsonRoundTripKeepsHash) {
  const ExperimentConfig c = ConfigFromJson(R"({"seed": 9, "corpus": {"noise_std": 0.7}})", "desk");
  const ExperimentConfig r = ConfigFromJson(c.ToJson(), "desk");
  EXPECT_EQ(r.Hash(), c.Hash());
  EXPECT_EQ(c.Hash().size(), 16u);
  EXPECT_NE(c.Hash(), PresetConfig("desk").Hash());
  EXPECT_EQ(c.train_audio.seed, r.train_audio.seed);
}

TEST(Config, EnvironmentOverrides) {
  const ExperimentConfig base = PresetConfig("desk");
  const ExperimentConfig c = ApplyOverrides(base, {{"AVSR__corpus__noise_std", "0.75"},
                                                   {"AVSR__model__fusion__variant", "tm_ctc"},
                                                   {"AVSR__train__audio__epochs", "3"},
                                                   {"UNRELATED", "1"}});
  EXPECT_EQ(c.corpus.noise_std, 0.75);
  EXPECT_EQ(c.model.fusion.variant, encoder::FusionVariant::kTmCtc);
  EXPECT_EQ(c.train_audio.epochs, 3);
  EXPECT_EQ(c.train_video.epochs, base.train_video.epochs);
  EXPECT_THROW(ApplyOverrides(base, {{"AVSR__corpus__bogus", "1"}}), ConfigError);

  setenv("AVSR__decode__beam", "7", 1);
  const auto env = EnvOverrides();
  unsetenv("AVSR__decode__beam");
  ASSERT_TRUE(env.count("AVSR__decode__beam"));
  EXPECT_EQ(ApplyOverrides(base, env).decode.beam, 7);
}

TEST(Config, PaperScaleRejectsEarlyLayersOutsideOneToThree) {
  for (int n : {0, 4, 5}) {
    const std::string j = "{\"model\": {\"fusion\": {\"N\": " + std::to_string(n) +
                          ", \"M\": " + std::to_string(12 - n) + ", \"N_vblock\": " +
                          std::to_string(std::min(n, 2)) + "}}}";
    EXPECT_THROW(ConfigFromJson(j, "paper-scale-validate"), ConfigError) << "N=" << n;
  }
  for (int n : {1, 2, 3}) {
    const std::string j = "{\"model\": {\"fusion\": {\"N\": " + std::to_string(n) +
                          ", \"M\": " + std::to_string(12 - n) + ", \"N_vblock\": 1}}}";
    EXPECT_NO_THROW(ConfigFromJson(j, "paper-scale-validate")) << "N=" << n;
  }
  EXPECT_THROW(ConfigFromJson(R"({"model": {"fusion": {"N": 2, "M": 9}}})", "paper-scale-validate"),
               ConfigError);
  // The same totals are fine at desk scale.
  EXPECT_NO_THROW(ConfigFromJson(R"({"model": {"fusion": {"N": 4, "M": 1, "N_vblock": 2}}})", "desk"));
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_THROW(ConfigFromJson(R"({"train": {"audio": {"lambda_ctc": 1.5}}})", "desk"), ConfigError);
  EXPECT_THROW(ConfigFromJson(R"({"decode": {"beam": 0}})", "desk"), ConfigError);
  EXPECT_THROW(ConfigFromJson(R"({"model": {"n_head": 3}})", "desk"), ConfigError);
  EXPECT_THROW(ConfigFromJson(R"({"train": {"fusion_init": "video"}})", "desk"), ConfigError);
}

}  // namespace
}  // namespace avsr

// pipeline_test.cc

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

#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "avsr/error.h"
#include "avsr/pipeline.h"

namespace avsr::pipeline {
namespace {

namespace fs = std::filesystem;
using training::FusionInit;
using training::Stage;

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ExperimentConfig TinyConfig(uint64_t seed = 1) {
  ExperimentConfig c = ConfigFromJson(Slurp(AVSR_TEST_DATA_DIR "/tiny.json"), "desk");
  c.seed = seed;
  c.Resolve();
  return c;
}

fs::path Fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("avsr_pipeline_test_" + name);
  fs::remove_all(p);
  return p;
}

// One shared recipe run for the read-only tests below.
class RecipeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new ExperimentConfig(TinyConfig());
    run_ = new RunDir(Fresh("recipe"));
    result_ = new RecipeResult(RunRecipe(*cfg_, *run_));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete run_;
    delete cfg_;
  }
  static ExperimentConfig* cfg_;
  static RunDir* run_;
  static RecipeResult* result_;
};
ExperimentConfig* RecipeTest::cfg_ = nullptr;
RunDir* RecipeTest::run_ = nullptr;
RecipeResult* RecipeTest::result_ = nullptr;

TEST_F(RecipeTest, ProducesEveryArtifact) {
  for (const char* rel : {"config.json", "data/manifest.txt", "gmm/model.nac", "gmm/em.jsonl",
                          "align/train.ali", "align/test.ali", "align/report.json",
                          "audio/model.nac", "audio/model.json", "audio/metrics.jsonl",
                          "video/model.nac", "lm/model.nac", "fusion/both/model.nac",
                          "fusion/both/model.json", "decode/audio.hyp", "decode/fusion-both.hyp",
                          "eval/audio.json", "eval/fusion-both.json"})
    EXPECT_TRUE(fs::exists(run_->root() / rel)) << rel;
  EXPECT_GT(result_->audio.ref_tokens, 0);
  EXPECT_EQ(result_->audio.ref_tokens, result_->fusion.ref_tokens);
}

TEST_F(RecipeTest, ArtifactsCarryConfigHash) {
  const std::string h = cfg_->Hash();
  const auto meta = nlohmann::json::parse(Slurp(run_->root() / "fusion/both/model.json"));
  EXPECT_EQ(meta.at("config_hash"), h);
  EXPECT_EQ(meta.at("stage"), "finetune_fusion");
  const auto& map = meta.at("checkpoint_map");
  EXPECT_EQ(map.at("mapped_groups").size(), 4u);
  std::ifstream metrics(run_->root() / "audio/metrics.jsonl");
  std::string first;
  std::getline(metrics, first);
  EXPECT_EQ(nlohmann::json::parse(first).at("config_hash"), h);
  EXPECT_EQ(corpus::ReadHeaderHash((run_->root() / "decode/audio.hyp").string()), h);
  EXPECT_EQ(corpus::ReadHeaderHash((run_->root() / "align/train.ali").string()), h);
}

TEST_F(RecipeTest, EvalOfReferencesIsZero) {
  const corpus::Corpus c = corpus::ReadCorpus(run_->Data().string());
  std::vector<decoding::HypRecord> rows;
  for (const corpus::Utterance* u : c.Split("test")) rows.push_back({u->id, 0.0, u->transcript});
  const fs::path hyp = run_->root() / "refs.hyp";
  decoding::WriteHypFile(hyp.string(), rows, cfg_->Hash());
  const decoding::CerReport r = Eval(*cfg_, *run_, hyp, run_->root() / "refs.json", false);
  EXPECT_EQ(r.overall_cer, 0.0);
  EXPECT_EQ(nlohmann::json::parse(Slurp(run_->root() / "refs.json")).at("overall_cer"), 0.0);
}

TEST_F(RecipeTest, EvalRefusesForeignHashUnlessForced) {
  const fs::path hyp = run_->root() / "foreign.hyp";
  decoding::WriteHypFile(hyp.string(), {}, "ffffffffffffffff");
  EXPECT_THROW(Eval(*cfg_, *run_, hyp, "", false), ConfigError);
  const decoding::CerReport r = Eval(*cfg_, *run_, hyp, "", true);
  EXPECT_EQ(r.overall_cer, 1.0);
}

TEST_F(RecipeTest, RoverOfCopiesIsIdentity) {
  const fs::path a = run_->root() / "decode/audio.hyp", out = run_->root() / "rover.hyp";
  RoverFiles({a, a, a}, out);
  const auto in = decoding::ReadHypFile(a.string()), comb = decoding::ReadHypFile(out.string());
  ASSERT_EQ(in.size(), comb.size());
  for (size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(in[i].utt_id, comb[i].utt_id);
    EXPECT_EQ(in[i].tokens, comb[i].tokens);
  }
}

TEST_F(RecipeTest, InspectEmbeddingsIsByteDeterministic) {
  const fs::path p1 = InspectEmbeddings(*cfg_, *run_, "video", 4, run_->root() / "e1.png");
  const fs::path p2 = InspectEmbeddings(*cfg_, *run_, "video", 4, run_->root() / "e2.png");
  const std::string a = Slurp(p1), b = Slurp(p2);
  ASSERT_GT(a.size(), 8u);
  EXPECT_EQ(a.substr(1, 3), "PNG");
  EXPECT_EQ(a, b);
}

TEST_F(RecipeTest, ForeignConfigCannotReuseRunDir) {
  ExperimentConfig other = *cfg_;
  other.corpus.noise_std = 0.9;
  other.Resolve();
  EXPECT_THROW(InitRunDir(other, *run_), ConfigError);
}

TEST(Pipeline, StageOrderViolationsFailFast) {
  const ExperimentConfig c = TinyConfig();
  const RunDir run(Fresh("order"));
  InitRunDir(c, run);
  EXPECT_THROW(TrainGmm(c, run), IoError);
  MakeData(c, run);
  EXPECT_THROW(AlignCorpus(c, run), IoError);
  EXPECT_THROW(Train(c, run, Stage::kPretrainVideo, FusionInit::kBoth), IoError);
  EXPECT_THROW(Train(c, run, Stage::kFinetuneFusion, FusionInit::kBoth), IoError);
  EXPECT_THROW(Decode(c, run, "audio"), IoError);
  EXPECT_THROW(Decode(c, run, "video"), ConfigError);
}

TEST(Pipeline, RerunReproducesIdenticalOutputs) {
  const ExperimentConfig c = TinyConfig(4);
  const RunDir a(Fresh("rerun_a")), b(Fresh("rerun_b"));
  for (const RunDir* r : {&a, &b}) {
    InitRunDir(c, *r);
    MakeData(c, *r);
    TrainGmm(c, *r);
    AlignCorpus(c, *r);
    Train(c, *r, Stage::kPretrainAudio, FusionInit::kBoth);
    Train(c, *r, Stage::kTrainLm, FusionInit::kBoth);
    Decode(c, *r, "audio");
  }
  for (const char* rel : {"gmm/em.jsonl", "align/train.ali", "audio/metrics.jsonl",
                          "audio/model.nac", "lm/metrics.jsonl", "decode/audio.hyp"})
    EXPECT_EQ(Slurp(a.root() / rel), Slurp(b.root() / rel)) << rel;
}

}  // namespace
}  // namespace avsr::pipeline

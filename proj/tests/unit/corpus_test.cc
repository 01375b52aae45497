// corpus_test.cc

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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "avsr/error.h"
#include "avsr/corpus.h"
#include "test_util.h"

namespace avsr::corpus {
namespace {

namespace fs = std::filesystem;

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> DirBytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = Slurp(e.path());
  return out;
}

fs::path TempDir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("avsr_corpus_test_" + name);
  fs::remove_all(p);
  return p;
}

CorpusSpec SmallSpec() {
  CorpusSpec s;
  s.num_units = 4;
  s.seed = 7;
  s.num_utterances = 10;
  s.feature_dim = 16;
  s.video_height = s.video_width = 8;
  return s;
}

TEST(GenerateCorpus, IsByteIdenticalAcrossCalls) {
  const CorpusSpec s = SmallSpec();
  const Corpus a = GenerateCorpus(s), b = GenerateCorpus(s);
  ASSERT_EQ(a.utterances.size(), b.utterances.size());
  for (size_t i = 0; i < a.utterances.size(); ++i) {
    EXPECT_EQ(a.utterances[i].id, b.utterances[i].id);
    EXPECT_EQ(a.utterances[i].audio.frames.storage(), b.utterances[i].audio.frames.storage());
    EXPECT_EQ(a.utterances[i].video.frames.storage(), b.utterances[i].video.frames.storage());
    EXPECT_EQ(a.utterances[i].gold_states, b.utterances[i].gold_states);
  }
  const fs::path da = TempDir("a"), db = TempDir("b");
  WriteCorpus(a, da.string(), "0123456789abcdef");
  WriteCorpus(b, db.string(), "0123456789abcdef");
  EXPECT_EQ(DirBytes(da), DirBytes(db));
}

TEST(GenerateCorpus, DifferentSeedsDiffer) {
  CorpusSpec s = SmallSpec();
  const Corpus a = GenerateCorpus(s);
  s.seed = 8;
  const Corpus b = GenerateCorpus(s);
  EXPECT_NE(a.utterances[0].audio.frames.storage(), b.utterances[0].audio.frames.storage());
}

TEST(SynthesizeUtterance, ThreeUnitsGiveFortyEightAndTwelveFrames) {
  const CorpusSpec s = SmallSpec();
  nn::Rng rng(1);
  const Templates t = MakeTemplates(s, rng);
  const Utterance u = SynthesizeUtterance(s, t, {0, 1, 2}, {12, 16, 20}, rng);
  EXPECT_EQ(u.audio.num_frames(), 48);
  EXPECT_EQ(u.video.num_frames(), 12);
  EXPECT_EQ(u.gold_states.size(), 48u);
}

TEST(SynthesizeUtterance, RejectsBadDurations) {
  const CorpusSpec s = SmallSpec();
  nn::Rng rng(1);
  const Templates t = MakeTemplates(s, rng);
  EXPECT_THROW(SynthesizeUtterance(s, t, {0}, {10}, rng), ConfigError);
  EXPECT_THROW(SynthesizeUtterance(s, t, {0}, {13}, rng), ConfigError);
  EXPECT_THROW(SynthesizeUtterance(s, t, {9}, {12}, rng), ConfigError);
}

TEST(GenerateCorpus, NoiseFreeAudioEqualsTemplateConcatenation) {
  CorpusSpec s = SmallSpec();
  s.noise_std = 0.0;
  s.visual_informativeness = 0.0;
  const Corpus c = GenerateCorpus(s);
  for (const auto& u : c.utterances) {
    // Oracle: unit-level segmentation of gold states must reproduce the
    // transcript, and every frame is the template row of its state.
    std::vector<int> units;
    for (size_t t = 0; t < u.gold_states.size(); ++t) {
      const int unit = u.gold_states[t] / kStatesPerUnit, st = u.gold_states[t] % kStatesPerUnit;
      if (st == 0 && (t == 0 || u.gold_states[t - 1] != u.gold_states[t])) units.push_back(unit);
      for (int j = 0; j < s.feature_dim; ++j) {
        const double tpl = c.templates.audio[(static_cast<int64_t>(unit) * 3 + st) * s.feature_dim + j];
        ASSERT_EQ(u.audio.frames.at(static_cast<int64_t>(t), j), static_cast<double>(static_cast<float>(tpl)));
      }
    }
    EXPECT_EQ(units, u.transcript);
  }
}

TEST(GenerateCorpus, UtterancesRespectRateAndRanges) {
  const Corpus c = GenerateCorpus(SmallSpec());
  int train = 0;
  for (const auto& u : c.utterances) {
    EXPECT_FALSE(u.transcript.empty());
    EXPECT_EQ(u.audio.num_frames() / 4, u.video.num_frames());
    EXPECT_TRUE(u.audio.frames.AllFinite());
    for (double v : u.video.frames.span()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    // Monotone left-to-right states within each unit.
    for (size_t t = 1; t < u.gold_states.size(); ++t) {
      const int a = u.gold_states[t - 1], b = u.gold_states[t];
      if (a != b) {
        EXPECT_TRUE(b == a + 1 || (a % 3 == 2 && b % 3 == 0)) << a << " -> " << b;
      }
    }
    train += u.split == "train";
  }
  EXPECT_EQ(train, 8);
}

TEST(GenerateCorpus, VisualInformativenessSharesAudioTemplates) {
  CorpusSpec s = SmallSpec();
  s.num_units = 6;
  s.visual_informativeness = 0.5;
  nn::Rng rng(s.seed);
  const Templates t = MakeTemplates(s, rng);
  const int64_t da = 3 * s.feature_dim, dv = 3 * s.video_height * s.video_width;
  int shared_pairs = 0;
  for (int u = 0; u < s.num_units; ++u)
    for (int v = u + 1; v < s.num_units; ++v) {
      const bool same_audio = std::equal(t.audio.data() + u * da, t.audio.data() + (u + 1) * da,
                                         t.audio.data() + v * da);
      const bool same_visual = std::equal(t.visual.data() + u * dv, t.visual.data() + (u + 1) * dv,
                                          t.visual.data() + v * dv);
      EXPECT_FALSE(same_visual);
      shared_pairs += same_audio;
    }
  EXPECT_GE(shared_pairs, 1);
}

TEST(CorpusSpec, InvalidFieldsAreConfigErrors) {
  CorpusSpec s = SmallSpec();
  s.num_units = 1;
  EXPECT_THROW(GenerateCorpus(s), ConfigError);
  s = SmallSpec();
  s.min_duration = 8;
  EXPECT_THROW(GenerateCorpus(s), ConfigError);
  s = SmallSpec();
  s.audio_fps = 50;
  EXPECT_THROW(GenerateCorpus(s), ConfigError);
}

TEST(Normalize, ConstantInputGivesZeros) {
  const FeatureSequence f{nn::Tensor({5, 3}, 2.5)};
  const FeatureSequence n = NormalizeUtterance(f);
  for (double v : n.frames.span()) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, TwoFramesOneDim) {
  const FeatureSequence f{nn::Tensor::FromData({2, 1}, {0.0, 2.0})};
  const FeatureSequence n = NormalizeUtterance(f);
  EXPECT_NEAR(n.frames[0], -1.0, 1e-12);
  EXPECT_NEAR(n.frames[1], 1.0, 1e-12);
}

TEST(Normalize, RandomInputHasUnitStatistics) {
  nn::Rng rng(3);
  const FeatureSequence f{testing::RandomTensor({10, 80}, rng, 3.0)};
  const FeatureSequence n = NormalizeUtterance(f);
  for (int j = 0; j < 80; ++j) {
    double m = 0, v = 0;
    for (int t = 0; t < 10; ++t) m += n.frames.at(t, j);
    m /= 10;
    for (int t = 0; t < 10; ++t) v += (n.frames.at(t, j) - m) * (n.frames.at(t, j) - m);
    v /= 10;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_LT(std::abs(v - 1.0), 1e-6);
  }
  const FeatureSequence nn2 = NormalizeUtterance(n);
  EXPECT_LT(nn::MaxAbsDiff(n.frames, nn2.frames), 1e-6);
}

TEST(Normalize, SingleFrameIsDegenerate) {
  const FeatureSequence f{nn::Tensor({1, 4}, 1.0)};
  EXPECT_THROW(NormalizeUtterance(f), DegenerateInputError);
}

TEST(SpecAugment, NoMasksIsIdentity) {
  nn::Rng rng(4), r2(5);
  const FeatureSequence f{testing::RandomTensor({30, 80}, rng)};
  SpecAugmentPolicy p;
  p.num_freq_masks = p.num_time_masks = 0;
  EXPECT_EQ(SpecAugment(f, p, r2).frames.storage(), f.frames.storage());
}

TEST(SpecAugment, FullWidthFrequencyMaskZeroesEverything) {
  nn::Rng rng(4), r2(5);
  const FeatureSequence f{testing::RandomTensor({30, 80}, rng)};
  SpecAugmentPolicy p;
  p.num_freq_masks = 1;
  p.min_freq_width = p.max_freq_width = 80;
  p.num_time_masks = 0;
  const FeatureSequence x = SpecAugment(f, p, r2);
  for (double v : x.frames.span()) EXPECT_EQ(v, 0.0);
  p.min_freq_width = p.max_freq_width = 200;  // clipped, not an error
  const FeatureSequence y = SpecAugment(f, p, r2);
  for (double v : y.frames.span()) EXPECT_EQ(v, 0.0);
}

TEST(SpecAugment, FixedSeedFixedMasksAndShapePreserved) {
  nn::Rng rng(6);
  const FeatureSequence f{testing::RandomTensor({40, 20}, rng)};
  SpecAugmentPolicy p;
  p.max_time_ratio = 0.5;
  nn::Rng a(11), b(11);
  const FeatureSequence x = SpecAugment(f, p, a), y = SpecAugment(f, p, b);
  EXPECT_EQ(x.frames.storage(), y.frames.storage());
  EXPECT_EQ(x.frames.shape(), f.frames.shape());
  EXPECT_TRUE(x.frames.AllFinite());
  // Unmasked entries are untouched.
  for (int64_t i = 0; i < f.frames.size(); ++i)
    if (x.frames[i] != 0.0) {
      EXPECT_EQ(x.frames[i], f.frames[i]);
    }
}

TEST(Persistence, RoundTripsUtterancesAndAlignments) {
  const Corpus c = GenerateCorpus(SmallSpec());
  const fs::path d = TempDir("rt");
  WriteCorpus(c, d.string(), "00000000000000aa");
  const Corpus r = ReadCorpus(d.string());
  ASSERT_EQ(r.utterances.size(), c.utterances.size());
  for (size_t i = 0; i < c.utterances.size(); ++i) {
    EXPECT_EQ(r.utterances[i].id, c.utterances[i].id);
    EXPECT_EQ(r.utterances[i].split, c.utterances[i].split);
    EXPECT_EQ(r.utterances[i].transcript, c.utterances[i].transcript);
    EXPECT_EQ(r.utterances[i].gold_states, c.utterances[i].gold_states);
    EXPECT_EQ(r.utterances[i].audio.frames.storage(), c.utterances[i].audio.frames.storage());
    EXPECT_EQ(r.utterances[i].video.frames.storage(), c.utterances[i].video.frames.storage());
  }
  EXPECT_EQ(CorpusSpecToJson(r.spec), CorpusSpecToJson(c.spec));
  EXPECT_EQ(CorpusSpecToJson(CorpusSpecFromJson(CorpusSpecToJson(c.spec))), CorpusSpecToJson(c.spec));

  const fs::path ali = d / "x.ali";
  WriteAlignmentText(ali.string(), {{"u1", {0, 0, 1}}, {"u2", {5}}}, "00000000000000bb");
  std::string h;
  const auto rows = ReadAlignmentText(ali.string(), &h);
  EXPECT_EQ(h, "00000000000000bb");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].second, (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(ReadHeaderHash(ali.string()), "00000000000000bb");
  EXPECT_THROW(ReadCorpus((d / "missing").string()), IoError);
}

}  // namespace
}  // namespace avsr::corpus

// gmm_hmm_test.cc

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
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "avsr/error.h"
#include "avsr/gmm_hmm.h"
#include "test_util.h"

namespace avsr::gmmhmm {
namespace {

using nn::Tensor;

Tensor Column(std::vector<double> v) {
  const int64_t n = static_cast<int64_t>(v.size());
  return Tensor::FromData({n, 1}, std::move(v));
}

// Random model with `k` components per state and random transitions.
HmmModel RandomModel(int units, int64_t dim, int k, nn::Rng& rng) {
  HmmModel m;
  m.num_units = units;
  m.dim = dim;
  std::uniform_real_distribution<double> u(0.1, 0.9), var(0.3, 2.0);
  for (int s = 0; s < m.NumSenones(); ++s) {
    HmmState st;
    st.self_loop = u(rng);
    st.forward = 1.0 - st.self_loop;
    st.gmm.means = testing::RandomTensor({k, dim}, rng);
    st.gmm.vars = Tensor({k, dim});
    for (double& v : st.gmm.vars.span()) v = var(rng);
    double z = 0;
    for (int c = 0; c < k; ++c) z += st.gmm.weights.emplace_back(u(rng));
    for (double& w : st.gmm.weights) w /= z;
    m.states.push_back(std::move(st));
  }
  return m;
}

// Independent scoring of a label path: direct Gaussian densities and
// transition probabilities.
double OracleScore(const HmmModel& m, const Tensor& x, const std::vector<int>& labels) {
  double total = 0.0;
  for (size_t t = 0; t < labels.size(); ++t) {
    const Gmm& g = m.states[labels[t]].gmm;
    double p = 0.0;
    for (int c = 0; c < g.num_components(); ++c) {
      double logn = 0.0;
      for (int64_t j = 0; j < m.dim; ++j) {
        const double v = g.vars.at(c, j), d = x.at(static_cast<int64_t>(t), j) - g.means.at(c, j);
        logn += -0.5 * std::log(2 * M_PI * v) - 0.5 * d * d / v;
      }
      p += g.weights[c] * std::exp(logn);
    }
    total += std::log(p);
    if (t > 0) {
      const HmmState& prev = m.states[labels[t - 1]];
      total += std::log(labels[t] == labels[t - 1] ? prev.self_loop : prev.forward);
    }
  }
  return total;
}

// All left-to-right paths over `chain` covering T frames.
void EnumeratePaths(const std::vector<int>& chain, int t_count,
                    const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> idx;
  std::function<void(int)> rec = [&](int pos) {
    if (static_cast<int>(idx.size()) == t_count) {
      if (pos == static_cast<int>(chain.size()) - 1) {
        std::vector<int> labels;
        for (int i : idx) labels.push_back(chain[i]);
        f(labels);
      }
      return;
    }
    for (int next : {pos, pos + 1}) {
      if (next >= static_cast<int>(chain.size()) || (idx.empty() && next != 0)) continue;
      idx.push_back(next);
      rec(next);
      idx.pop_back();
    }
  };
  rec(0);
}

TEST(FlatStart, TwelveFramesSplitFourPerState) {
  const Tensor x = Column({0, 1, 2, 3, 10, 11, 12, 13, 20, 21, 22, 23});
  const HmmModel m = FlatStart({{"u", &x, {0}}}, 1);
  ASSERT_EQ(m.states.size(), 3u);
  for (int s = 0; s < 3; ++s) {
    EXPECT_NEAR(m.states[s].gmm.means[0], 10.0 * s + 1.5, 1e-12);
    EXPECT_NEAR(m.states[s].gmm.vars[0], 1.25, 1e-12);
    EXPECT_EQ(m.states[s].gmm.num_components(), 1);
    EXPECT_EQ(m.states[s].self_loop, 0.5);
    EXPECT_EQ(m.states[s].forward, 0.5);
  }
}

TEST(FlatStart, ZeroVarianceIsFloored) {
  const Tensor x = Column(std::vector<double>(12, 4.0));
  const HmmModel m = FlatStart({{"u", &x, {0}}}, 1);
  for (const auto& s : m.states) EXPECT_EQ(s.gmm.vars[0], 1e-3);
}

TEST(FlatStart, UnseenUnitIsTrainingError) {
  const Tensor x = Column(std::vector<double>(12, 4.0));
  try {
    FlatStart({{"u", &x, {0}}}, 2);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("unit 1"), std::string::npos) << e.what();
  }
}

TEST(EmTrain, SingleGaussianMle) {
  const Tensor x = Column({1.0, 3.0});
  const HmmModel init = FlatStart({{"u", &x, {0}}}, 1, 1);
  const EmResult r = EmTrain(init, {{"u", &x, {0}}}, 3, {1, 1, 1});
  EXPECT_NEAR(r.model.states[0].gmm.means[0], 2.0, 1e-12);
  EXPECT_NEAR(r.model.states[0].gmm.vars[0], 1.0, 1e-12);
}

corpus::CorpusSpec AlignSpec(double noise) {
  corpus::CorpusSpec s;
  s.num_units = 5;
  s.num_utterances = 40;
  s.noise_std = noise;
  s.feature_dim = 20;
  s.video_height = s.video_width = 4;
  s.seed = 3;
  return s;
}

TEST(EmTrain, ObjectiveIsMonotoneAtFixedMixtureCount) {
  const corpus::Corpus c = GenerateCorpus(AlignSpec(0.5));
  const auto items = TrainItems(c);
  const EmResult r = EmTrain(FlatStart(items, 5), items, 9, DefaultMixSchedule(9));
  ASSERT_EQ(r.objective.size(), 9u);
  EXPECT_EQ(r.components, (std::vector<int>{1, 1, 1, 2, 2, 2, 4, 4, 4}));
  for (size_t i = 1; i < r.objective.size(); ++i)
    if (r.components[i] == r.components[i - 1]) {
      EXPECT_GE(r.objective[i], r.objective[i - 1] - 1e-8) << "iteration " << i;
    }
  for (const auto& s : r.model.states) {
    double w = 0;
    for (double x : s.gmm.weights) w += x;
    EXPECT_NEAR(w, 1.0, 1e-12);
    EXPECT_NEAR(s.self_loop + s.forward, 1.0, 1e-12);
    for (double v : s.gmm.vars.span()) EXPECT_GE(v, 1e-3);
  }
}

TEST(EmTrain, NoiseFreeMeansEqualTemplates) {
  const corpus::Corpus c = GenerateCorpus(AlignSpec(0.0));
  const auto items = TrainItems(c);
  const EmResult r = EmTrain(FlatStart(items, 5), items, 5, {1, 1, 1, 1, 1});
  const int64_t d = c.spec.feature_dim;
  for (int s = 0; s < r.model.NumSenones(); ++s)
    for (int64_t j = 0; j < d; ++j)
      EXPECT_NEAR(r.model.states[s].gmm.means[j],
                  static_cast<float>(c.templates.audio[s * d + j]), 1e-6);
}

TEST(EmTrain, AlignmentBoundariesMatchGold) {
  const corpus::Corpus c = GenerateCorpus(AlignSpec(0.01));
  const auto items = TrainItems(c);
  const EmResult r = EmTrain(FlatStart(items, 5), items, 5, DefaultMixSchedule(5));
  BoundaryStats stats;
  for (const corpus::Utterance& u : c.utterances) {
    const AlignmentLabels a = ForcedAlign(r.model, u.audio.frames, u.transcript, u.id);
    ASSERT_EQ(a.labels.size(), u.gold_states.size());
    stats.Add(CompareBoundaries(u.gold_states, a.labels, 2));
  }
  EXPECT_GT(stats.total, 0);
  EXPECT_GE(stats.Fraction(), 0.9);
}

TEST(ForcedAlign, ThreeFramesForcePath) {
  nn::Rng rng(1);
  const HmmModel m = RandomModel(2, 2, 1, rng);
  const Tensor x = testing::RandomTensor({3, 2}, rng);
  EXPECT_EQ(ForcedAlign(m, x, std::vector<int>{1}).labels, (std::vector<int>{3, 4, 5}));
}

TEST(ForcedAlign, TooShortIsInfeasible) {
  nn::Rng rng(1);
  const HmmModel m = RandomModel(2, 2, 1, rng);
  const Tensor x = testing::RandomTensor({5, 2}, rng);
  EXPECT_THROW(ForcedAlign(m, x, std::vector<int>{0, 1}), InfeasibleError);
}

TEST(ForcedAlign, MatchesExhaustiveEnumeration) {
  nn::Rng rng(2);
  const std::vector<std::vector<int>> transcripts = {{0}, {1}, {0, 1}, {1, 0}, {1, 1}};
  int instances = 0;
  for (int trial = 0; trial < 4; ++trial) {
    const HmmModel m = RandomModel(2, 2, 2, rng);
    for (const auto& tr : transcripts)
      for (int t = 3 * static_cast<int>(tr.size()); t <= 10; ++t) {
        const Tensor x = testing::RandomTensor({t, 2}, rng, 1.5);
        const std::vector<int> chain = TranscriptChain(m, tr);
        double best = -std::numeric_limits<double>::infinity();
        std::vector<int> best_path;
        EnumeratePaths(chain, t, [&](const std::vector<int>& p) {
          const double s = OracleScore(m, x, p);
          if (s > best) best = s, best_path = p;
        });
        const AlignmentLabels a = ForcedAlign(m, x, tr);
        EXPECT_NEAR(a.score, best, 1e-9);
        EXPECT_EQ(a.labels, best_path);
        EXPECT_NEAR(PathLogProb(m, x, a.labels), OracleScore(m, x, a.labels), 1e-9);
        ++instances;
      }
  }
  EXPECT_GT(instances, 100);
}

TEST(ForcedAlign, ScoreRecomputesFromPath) {
  const corpus::Corpus c = GenerateCorpus(AlignSpec(0.3));
  const auto items = TrainItems(c);
  const HmmModel m = EmTrain(FlatStart(items, 5), items, 2, {1, 2}).model;
  for (int i = 0; i < 5; ++i) {
    const corpus::Utterance& u = c.utterances[i];
    const AlignmentLabels a = ForcedAlign(m, u.audio.frames, u.transcript);
    EXPECT_NEAR(a.score, PathLogProb(m, u.audio.frames, a.labels), 1e-6 * std::abs(a.score));
    EXPECT_NEAR(a.score, OracleScore(m, u.audio.frames, a.labels), 1e-6 * std::abs(a.score));
  }
}

TEST(ViterbiChain, InvariantToGlobalShift) {
  nn::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor e = testing::RandomTensor({12, 4}, rng, 3.0);
    std::vector<double> sl(4), fw(4);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int s = 0; s < 4; ++s) {
      const double p = u(rng);
      sl[s] = std::log(p);
      fw[s] = std::log(1 - p);
    }
    const ChainPath a = ViterbiChain(e, sl, fw);
    for (double& v : e.span()) v += 123.25;
    const ChainPath b = ViterbiChain(e, sl, fw);
    EXPECT_EQ(a.chain_states, b.chain_states);
  }
}

TEST(Inventory, RowMajorBijection) {
  nn::Rng rng(1);
  const HmmModel m = RandomModel(4, 1, 1, rng);
  const SenoneInventory inv = BuildInventory(m), again = BuildInventory(m);
  EXPECT_EQ(inv.size(), 12);
  EXPECT_EQ(inv.Id(2, 1), 7);
  for (int id = 0; id < inv.size(); ++id) {
    const auto [u, s] = inv.Pair(id);
    EXPECT_EQ(inv.Id(u, s), id);
    EXPECT_EQ(again.Pair(id), inv.Pair(id));
  }
}

TEST(Boundaries, PairsKthBoundaries) {
  const std::vector<int> gold = {0, 0, 0, 1, 1, 1, 2, 2};
  const std::vector<int> hyp = {0, 1, 1, 1, 1, 1, 1, 2};
  const BoundaryStats s = CompareBoundaries(gold, hyp, 1);
  EXPECT_EQ(s.total, 2);
  EXPECT_EQ(s.within, 1);
}

TEST(Store, RoundTripPreservesScores) {
  nn::Rng rng(7);
  const HmmModel m = RandomModel(2, 3, 2, rng);
  const HmmModel r = ModelFromStore(ModelToStore(m));
  const Tensor x = testing::RandomTensor({9, 3}, rng);
  const std::vector<int> tr = {1, 0};
  EXPECT_EQ(ForcedAlign(m, x, tr).labels, ForcedAlign(r, x, tr).labels);
  EXPECT_DOUBLE_EQ(ForcedAlign(m, x, tr).score, ForcedAlign(r, x, tr).score);
}

}  // namespace
}  // namespace avsr::gmmhmm

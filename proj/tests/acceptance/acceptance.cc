// acceptance.cc

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

// Runs the acceptance criteria of the framework and prints one PASS/FAIL
// line per criterion. Usage:
//
//   acceptance --work-dir DIR [--only 3,7,10]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avsr/config.h"
#include "avsr/decoder.h"
#include "avsr/decoding.h"
#include "avsr/encoder.h"
#include "avsr/error.h"
#include "avsr/frontend.h"
#include "avsr/gmm_hmm.h"
#include "avsr/layers.h"
#include "avsr/model.h"
#include "avsr/nn/ops.h"
#include "avsr/pipeline.h"
#include "avsr/training.h"
#include "test_util.h"

namespace fs = std::filesystem;

namespace avsr {
namespace {

using nn::Constant;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Var Probe(const Var& out, uint64_t seed = 17) {
  nn::Rng rng(seed);
  return nn::Sum(nn::Mul(out, Constant(testing::RandomTensor(out.shape(), rng))));
}

Tensor Rows(const Tensor& t, int64_t n) {
  return Tensor::FromData({n, t.cols()}, std::vector<double>(t.data(), t.data() + n * t.cols()));
}

Tensor Padded(const Tensor& x, int64_t extra, nn::Rng& rng) {
  Tensor p = testing::RandomTensor({x.rows() + extra, x.cols()}, rng, 4.0);
  std::copy(x.data(), x.data() + x.size(), p.data());
  return p;
}

// --- 1. CTC oracle ---------------------------------------------------------

Outcome CtcOracle(const fs::path&) {
  nn::Rng rng(1);
  int64_t instances = 0;
  double worst = 0.0;
  for (int t = 1; t <= 6; ++t)
    for (int v = 1; v <= 3; ++v)
      for (int draw = 0; draw < 2; ++draw) {
        const Tensor z = testing::RandomTensor({t, v + 1}, rng, 1.5);
        const auto p = testing::RowSoftmax(z);
        // Probability of every collapsed output from one enumeration.
        std::map<std::vector<int>, double> mass;
        testing::ForEachPath(t, v + 1, [&](const std::vector<int>& path) {
          double pr = 1.0;
          for (int k = 0; k < t; ++k) pr *= p[k][path[k]];
          mass[testing::CtcCollapse(path, v)] += pr;
        });
        // Every label sequence of length 1..T.
        std::vector<int> tg;
        std::function<void()> rec = [&]() {
          if (!tg.empty()) {
            ++instances;
            const auto it = mass.find(tg);
            if (t < nn::CtcMinFrames(tg)) {
              if (it != mass.end()) throw std::logic_error("enumeration found an infeasible target");
              try {
                nn::CtcLoss(Constant(z), tg, v);
                worst = std::numeric_limits<double>::infinity();
              } catch (const InfeasibleError&) {
              }
            } else {
              const double loss = nn::CtcLoss(Constant(z), tg, v).value()[0];
              worst = std::max(worst, std::abs(loss + std::log(it->second)));
            }
          }
          if (static_cast<int>(tg.size()) == t) return;
          for (int y = 0; y < v; ++y) {
            tg.push_back(y);
            rec();
            tg.pop_back();
          }
        };
        rec();
      }
  return {worst <= 1e-6, std::to_string(instances) + " instances, max |loss - brute force| " +
                             Fmt("%.2e", worst)};
}

// --- 2. Viterbi oracle -----------------------------------------------------

gmmhmm::HmmModel RandomHmm(int units, int64_t dim, int k, nn::Rng& rng) {
  gmmhmm::HmmModel m;
  m.num_units = units;
  m.dim = dim;
  std::uniform_real_distribution<double> u(0.1, 0.9), var(0.3, 2.0);
  for (int s = 0; s < m.NumSenones(); ++s) {
    gmmhmm::HmmState st;
    st.self_loop = u(rng);
    st.forward = 1.0 - st.self_loop;
    st.gmm.means = testing::RandomTensor({k, dim}, rng);
    st.gmm.vars = Tensor({k, dim});
    for (double& x : st.gmm.vars.span()) x = var(rng);
    double z = 0;
    for (int c = 0; c < k; ++c) z += st.gmm.weights.emplace_back(u(rng));
    for (double& w : st.gmm.weights) w /= z;
    m.states.push_back(std::move(st));
  }
  return m;
}

Outcome ViterbiOracle(const fs::path&) {
  nn::Rng rng(2);
  const std::vector<std::vector<int>> transcripts = {{0}, {1}, {0, 0}, {0, 1}, {1, 0}, {1, 1}};
  int instances = 0, mismatches = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const gmmhmm::HmmModel m = RandomHmm(2, 3, 2, rng);
    for (const auto& tr : transcripts)
      for (int t = 3 * static_cast<int>(tr.size()); t <= 10; ++t) {
        const Tensor x = testing::RandomTensor({t, 3}, rng, 1.5);
        const std::vector<int> chain = gmmhmm::TranscriptChain(m, tr);
        const int n = static_cast<int>(chain.size());
        // Exhaustive search over monotone chain positions.
        double best = -std::numeric_limits<double>::infinity();
        std::vector<int> best_labels, idx;
        std::function<void(int)> rec = [&](int pos) {
          if (static_cast<int>(idx.size()) == t) {
            if (pos != n - 1) return;
            std::vector<int> labels;
            for (int i : idx) labels.push_back(chain[i]);
            const double s = gmmhmm::PathLogProb(m, x, labels);
            if (s > best) best = s, best_labels = labels;
            return;
          }
          for (int next : {pos, pos + 1}) {
            if (next >= n || (idx.empty() && next != 0)) continue;
            idx.push_back(next);
            rec(next);
            idx.pop_back();
          }
        };
        rec(0);
        const gmmhmm::AlignmentLabels a = gmmhmm::ForcedAlign(m, x, tr);
        ++instances;
        if (a.labels != best_labels || std::abs(a.score - best) > 1e-9) ++mismatches;
      }
  }
  return {mismatches == 0,
          std::to_string(instances) + " instances, " + std::to_string(mismatches) + " mismatches"};
}

// --- 3. EM monotonicity ----------------------------------------------------

Outcome EmMonotonicity(const fs::path&) {
  corpus::CorpusSpec s = PresetConfig("desk").corpus;
  s.num_units = 4;
  s.noise_std = 0.3;
  const corpus::Corpus c = corpus::GenerateCorpus(s);
  const auto items = gmmhmm::TrainItems(c);
  int pairs = 0, violations = 0;
  double worst_drop = 0.0;
  for (const std::vector<int>& schedule :
       {std::vector<int>(10, 1), gmmhmm::DefaultMixSchedule(10)}) {
    const gmmhmm::EmResult r = gmmhmm::EmTrain(gmmhmm::FlatStart(items, 4), items, 10, schedule);
    for (size_t i = 1; i < r.objective.size(); ++i) {
      if (r.components[i] != r.components[i - 1]) continue;
      ++pairs;
      const double drop = r.objective[i - 1] - r.objective[i];
      worst_drop = std::max(worst_drop, drop);
      if (drop > 1e-8) ++violations;
    }
  }
  return {violations == 0, std::to_string(pairs) + " adjacent pairs at fixed mixture count, " +
                               std::to_string(violations) + " decreases, worst " +
                               Fmt("%.2e", worst_drop)};
}

// --- 4. Alignment quality --------------------------------------------------

Outcome AlignmentQuality(const fs::path&) {
  corpus::CorpusSpec s = PresetConfig("desk").corpus;
  s.noise_std = 0.01;
  const corpus::Corpus c = corpus::GenerateCorpus(s);
  const auto items = gmmhmm::TrainItems(c);
  const gmmhmm::EmResult r =
      gmmhmm::EmTrain(gmmhmm::FlatStart(items, s.num_units), items, 5, gmmhmm::DefaultMixSchedule(5));
  gmmhmm::BoundaryStats stats;
  for (const corpus::Utterance& u : c.utterances) {
    const auto a = gmmhmm::ForcedAlign(r.model, u.audio.frames, u.transcript, u.id);
    stats.Add(gmmhmm::CompareBoundaries(u.gold_states, a.labels, 2));
  }
  return {stats.total > 0 && stats.Fraction() >= 0.9,
          std::to_string(stats.within) + "/" + std::to_string(stats.total) +
              " boundaries within 2 frames (" + Fmt("%.4f", stats.Fraction()) + ")"};
}

// --- 5. Gradient checks ----------------------------------------------------

encoder::ConformerConfig TinyConformer() {
  encoder::ConformerConfig c;
  c.d_model = 16;
  c.n_head = 2;
  c.d_ffn = 32;
  c.conv_kernel = 3;
  return c;
}

model::ModelConfig TinyModel() {
  model::ModelConfig m;
  m.conformer = TinyConformer();
  m.audio_frontend = {6, 4, 16};
  m.visual_frontend.height = m.visual_frontend.width = 8;
  m.visual_frontend.stem_channels = 3;
  m.visual_frontend.block_channels = {3, 4};
  m.visual_frontend.d_model = 16;
  m.fusion.n_early = 2;
  m.fusion.m_late = 1;
  m.fusion.n_vblock = 1;
  m.video_pretrain_blocks = 1;
  m.decoder_layers = 1;
  m.lm_layers = 1;
  m.vocab = 3;
  m.num_senones = 9;
  return m;
}

Outcome GradientChecks(const fs::path&) {
  std::map<std::string, double> err;
  auto check = [&](const std::string& what, ParamStore& ps, const std::function<Var(Graph&)>& f,
                   int samples) {
    nn::Rng rng(99);
    testing::RandomizeParams(ps, rng, 0.5);
    err[what] = testing::GradCheck(ps, ps.Names(), f, rng, samples).max_rel_err;
  };
  nn::Rng rng(5);
  {
    frontend::VisualFrontendConfig c = TinyModel().visual_frontend;
    ParamStore ps;
    frontend::InitVisualFrontend(ps, c, rng);
    Tensor video({3, 8, 8});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& x : video.span()) x = u(rng);
    check("visual frontend", ps,
          [&](Graph& g) { return Probe(frontend::VisualForward(g, c, Constant(video), 3)); }, 4);
  }
  {
    ParamStore ps;
    frontend::InitUpsampler(ps, 4, rng);
    const Tensor e = testing::RandomTensor({3, 4}, rng);
    check("upsampler", ps, [&](Graph& g) { return Probe(frontend::Upsample4x(g, Constant(e), 3)); }, 8);
  }
  {
    const auto c = TinyConformer();
    ParamStore ps;
    encoder::InitConformerBlock(ps, "b", c, rng);
    const Tensor x = testing::RandomTensor({6, 16}, rng);
    check("conformer block", ps,
          [&](Graph& g) { return Probe(encoder::ConformerBlockFwd(g, "b", c, Constant(x), 5)); }, 3);
  }
  {
    ParamStore ps;
    layers::InitAttention(ps, "x", 16, rng, true);
    const Tensor q = testing::RandomTensor({4, 16}, rng), kv = testing::RandomTensor({6, 16}, rng);
    check("cross_attention", ps, [&](Graph& g) {
      return Probe(layers::CrossAttentionFwd(g, "x", 2, Constant(q), Constant(kv), 5));
    }, 6);
  }
  const model::ModelConfig m = TinyModel();
  {
    ParamStore ps;
    model::InitFusionModel(ps, m, rng);
    const Tensor feats = testing::RandomTensor({6, 6}, rng);
    Tensor video({2, 8, 8});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& x : video.span()) x = u(rng);
    const std::vector<int> target = {2, 0};
    check("CMFE end-to-end", ps, [&](Graph& g) {
      const model::AsrForward f = model::EncodeFusion(g, m, feats, 6, video, 2);
      return training::JointLoss(nn::CtcLoss(f.ctc_logits, target, m.vocab),
                                 decoder::AttentionNll(g, model::kDecoderPrefix, m.Decoder(), target,
                                                       f.memories, 0.1),
                                 0.3);
    }, 2);
  }
  {
    ParamStore ps;
    decoder::InitDecoder(ps, "decoder", m.Decoder(), 1, rng);
    ps.Add("memory", testing::RandomTensor({5, 16}, rng));
    const std::vector<int> target = {1, 2, 0};
    check("attention decoder", ps, [&](Graph& g) {
      return decoder::AttentionNll(g, "decoder", m.Decoder(), target, {{g.Param("memory"), 4}}, 0.1);
    }, 3);
  }
  {
    ParamStore ps;
    decoder::InitDecoder(ps, "lm", m.Lm(), 0, rng);
    const std::vector<int> target = {1, 1, 2, 0};
    check("LM", ps, [&](Graph& g) {
      return decoder::AttentionNll(g, "lm", m.Lm(), target, {}, 0.0);
    }, 3);
  }
  bool ok = true;
  std::string detail;
  for (const auto& [k, v] : err) {
    ok = ok && v < 1e-4;
    detail += (detail.empty() ? "" : ", ") + k + " " + Fmt("%.1e", v);
  }
  return {ok, "max rel err: " + detail};
}

// --- 6. Shape and contract suite ------------------------------------------

Outcome ShapeContracts(const fs::path&) {
  std::vector<std::string> failures;
  nn::Rng rng(6);
  {
    ParamStore ps;
    frontend::InitUpsampler(ps, 8, rng);
    Graph g(ps, false);
    for (int64_t t = 1; t <= 256; ++t)
      if (frontend::Upsample4x(g, Constant(testing::RandomTensor({t, 8}, rng)), t).rows() != 4 * t)
        failures.push_back("upsample T_v=" + std::to_string(t));
  }
  for (int n = 1; n <= 3; ++n) {
    ParamStore ps;
    encoder::InitVisualMemory(ps, "m", n, 512, rng);
    Graph g(ps, false);
    std::vector<Var> mem(n, Constant(Tensor({3, 512})));
    if (ps.Get("m.w").dim(0) != n * 512 || encoder::BuildVisualMemory(g, "m", mem).cols() != 512)
      failures.push_back("memory width N=" + std::to_string(n));
  }
  for (int n = 0; n <= 12; ++n) {
    encoder::FusionConfig f;
    f.n_early = n;
    f.m_late = 12 - n;
    f.n_vblock = std::max(1, std::min(n, 2));
    bool rejected = false;
    try {
      ExperimentConfig c = PresetConfig("paper-scale-validate");
      c.model.fusion = f;
      c.Validate();
    } catch (const ConfigError&) {
      rejected = true;
    }
    if (rejected != (n < 1 || n > 3)) failures.push_back("paper-scale N=" + std::to_string(n));
  }
  double row_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor q = testing::RandomTensor({5, 8}, rng, 3.0), k = testing::RandomTensor({7, 8}, rng, 3.0);
    const nn::AttentionSpec spec{2, 1 + trial % 7, trial % 2 == 0};
    const Tensor w = nn::AttentionWeights(q, k, spec);
    for (int64_t r = 0; r < 2 * 5; ++r) {
      double s = 0.0;
      for (int64_t j = 0; j < 7; ++j) s += w[r * 7 + j];
      // Causal rows with every visible key masked are defined as all-zero.
      if (s != 0.0) row_err = std::max(row_err, std::abs(s - 1.0));
    }
  }
  if (row_err > 1e-6) failures.push_back("attention rows off by " + Fmt("%.2e", row_err));
  double pad_err = 0.0;
  const encoder::ConformerConfig c = PresetConfig("desk").model.conformer;
  for (auto v : {encoder::FusionVariant::kBaseline, encoder::FusionVariant::kTmCtc,
                 encoder::FusionVariant::kTmSeq, encoder::FusionVariant::kCmfe}) {
    encoder::FusionConfig f = PresetConfig("desk").model.fusion;
    f.variant = v;
    ParamStore ps;
    encoder::InitFusionEncoder(ps, c, f, rng);
    testing::RandomizeParams(ps, rng, 0.2);
    const Tensor a = testing::RandomTensor({9, c.d_model}, rng);
    const Tensor vv = testing::RandomTensor({8, c.d_model}, rng);
    Graph g(ps, false);
    const auto x = encoder::FusionEncoderFwd(g, c, f, Constant(a), 9, Constant(vv), 8);
    const auto y = encoder::FusionEncoderFwd(g, c, f, Constant(Padded(a, 5, rng)), 9,
                                             Constant(Padded(vv, 3, rng)), 8);
    double e = nn::MaxAbsDiff(x.audio.value(), Rows(y.audio.value(), 9));
    if (x.video.defined()) e = std::max(e, nn::MaxAbsDiff(x.video.value(), Rows(y.video.value(), 8)));
    pad_err = std::max(pad_err, e);
    if (e > 1e-6) failures.push_back(std::string("padding ") + encoder::VariantName(v));
  }
  std::string detail = failures.empty() ? "all contracts hold" : "violations:";
  for (const auto& f : failures) detail += " " + f;
  detail += "; max padding diff " + Fmt("%.1e", pad_err) + ", max row-sum err " + Fmt("%.1e", row_err);
  return {failures.empty(), detail};
}

// --- 7. Degenerate equivalence ---------------------------------------------

Outcome DegenerateEquivalence(const fs::path&) {
  const ExperimentConfig desk = PresetConfig("desk");
  const encoder::ConformerConfig c = desk.model.conformer;
  double worst = 0.0;
  for (auto ins : {encoder::Insertion::kOuter, encoder::Insertion::kInner}) {
    encoder::FusionConfig f = desk.model.fusion;
    f.insert = ins;
    ParamStore ps;
    nn::Rng rng(7);
    encoder::InitFusionEncoder(ps, c, f, rng);
    testing::RandomizeParams(ps, rng, 0.2);
    for (auto& [name, t] : ps.mutable_items())
      if (name.rfind("fusion.xattn.", 0) == 0 &&
          (name.ends_with(".o.w") || name.ends_with(".o.b")))
        t.SetZero();
    const Tensor a = testing::RandomTensor({12, c.d_model}, rng);
    const Tensor v = testing::RandomTensor({12, c.d_model}, rng);
    Graph g(ps, false);
    const Tensor fused = encoder::FusionEncoderFwd(g, c, f, Constant(a), 12, Constant(v), 12).audio.value();
    const Tensor audio = encoder::AudioEncoderFwd(g, c, f.AudioBlocks(), Constant(a), 12).audio.value();
    worst = std::max(worst, nn::MaxAbsDiff(fused, audio));
  }
  return {worst <= 1e-6, "max |CMFE - audio-only| " + Fmt("%.2e", worst) + " (outer and inner)"};
}

// --- 8. Loss arithmetic ----------------------------------------------------

Outcome LossArithmetic(const fs::path&) {
  std::vector<std::string> bad;
  nn::Rng rng(8);
  std::uniform_real_distribution<double> u(-100.0, -0.01);
  for (int i = 0; i < 1000; ++i) {
    const double c = u(rng), a = u(rng);
    const double l0 = training::JointLoss(c, a, 0.0), l1 = training::JointLoss(c, a, 1.0);
    if (training::JointLoss(c, a, 0.5) != 0.5 * (l0 + l1) || l0 != -a || l1 != -c) {
      bad.push_back("joint loss linearity");
      break;
    }
  }
  if (training::JointLoss(-10.0, -20.0, 0.3) != 17.0) bad.push_back("joint loss 17");
  const double uniform_ce =
      training::VisualPretrainLoss(Constant(Tensor({100, 12})), std::vector<int>(100, 3)).value()[0];
  if (std::abs(uniform_ce - 100.0 * std::log(12.0)) > 1e-8) bad.push_back("uniform CE " + Fmt("%.12f", uniform_ce));
  training::TrainConfig t;
  if (training::LrAt(3000, t) != 3e-4) bad.push_back("lr 3000");
  if (training::LrAt(6000, t) != 6e-4) bad.push_back("lr 6000");
  if (training::LrAt(24000, t) != 3e-4) bad.push_back("lr 24000");
  std::string detail = bad.empty() ? "linearity exact, uniform CE = T ln S, lr {3e-4, 6e-4, 3e-4}" : "failed:";
  for (const auto& b : bad) detail += " " + b;
  return {bad.empty(), detail};
}

// --- 9. Decoding oracle ----------------------------------------------------

struct TinyDecoderSystem {
  decoder::DecoderConfig cfg;
  ParamStore ps;
  Tensor memory, ctc_z;
  decoding::SearchScorers scorers;

  TinyDecoderSystem(int vocab, int frames, uint64_t seed) {
    cfg.vocab = vocab;
    cfg.d_model = 8;
    cfg.n_head = 2;
    cfg.d_ffn = 16;
    cfg.num_layers = 1;
    nn::Rng rng(seed);
    decoder::InitDecoder(ps, "decoder", cfg, 1, rng);
    decoder::InitDecoder(ps, "lm", cfg, 0, rng);
    testing::RandomizeParams(ps, rng, 0.8);
    memory = testing::RandomTensor({frames, 8}, rng);
    ctc_z = testing::RandomTensor({frames, vocab + 1}, rng, 2.0);
    scorers.vocab = vocab;
    scorers.ctc_logprobs = nn::LogSoftmax(Constant(ctc_z)).value();
    scorers.att = [this](std::span<const int> p) {
      Graph g(ps, false);
      return decoder::NextLogProbs(g, "decoder", cfg, p, {{Constant(memory), memory.rows()}});
    };
    scorers.lm = [this](std::span<const int> p) {
      Graph g(ps, false);
      return decoder::NextLogProbs(g, "lm", cfg, p, {});
    };
  }
  TinyDecoderSystem(const TinyDecoderSystem&) = delete;

  double TeacherForced(const std::string& prefix, const std::vector<int>& seq, bool mem) const {
    Graph g(ps, false);
    std::vector<decoder::Memory> m;
    if (mem) m.push_back({Constant(memory), memory.rows()});
    const Tensor lp =
        nn::LogSoftmax(decoder::DecoderLogits(g, prefix, cfg, decoder::WithSos(cfg, seq), m)).value();
    const auto out = decoder::WithEos(cfg, seq);
    double s = 0;
    for (size_t t = 0; t < out.size(); ++t) s += lp.at(static_cast<int64_t>(t), out[t]);
    return s;
  }
};

Outcome DecodingOracle(const fs::path&) {
  int exact = 0, total = 0;
  for (int vocab = 2; vocab <= 4; ++vocab)
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      TinyDecoderSystem sys(vocab, 4, seed * 10 + vocab);
      decoding::DecodeOptions opt;
      opt.max_len = 3;
      opt.ctc_weight = 0.3;
      opt.lm_weight = 0.2;
      double best = -std::numeric_limits<double>::infinity();
      std::vector<int> best_seq, cur;
      int count = 0;
      std::function<void()> rec = [&]() {
        ++count;
        const double pc = testing::BruteForceCtcProb(sys.ctc_z, cur, vocab);
        const double ctc = pc > 0 ? std::log(pc) : -std::numeric_limits<double>::infinity();
        const double s = decoding::CombineScores(sys.TeacherForced("decoder", cur, true), ctc,
                                                 sys.TeacherForced("lm", cur, false), opt);
        if (s > best) best = s, best_seq = cur;
        if (cur.size() == 3) return;
        for (int y = 0; y < vocab; ++y) {
          cur.push_back(y);
          rec();
          cur.pop_back();
        }
      };
      rec();
      opt.beam = count;
      const auto hyps = decoding::BeamSearch(sys.scorers, opt);
      ++total;
      if (!hyps.empty() && hyps[0].tokens == best_seq && std::abs(hyps[0].combined - best) < 1e-9) ++exact;
    }
  int monotone = 0;
  for (uint64_t seed = 100; seed < 120; ++seed) {
    TinyDecoderSystem sys(3, 5, seed);
    double prev = -std::numeric_limits<double>::infinity();
    bool ok = true;
    for (int beam : {1, 2, 4, 8}) {
      decoding::DecodeOptions opt;
      opt.beam = beam;
      const double b = decoding::BeamSearch(sys.scorers, opt)[0].combined;
      ok = ok && b >= prev;
      prev = b;
    }
    monotone += ok;
  }
  return {exact == total && monotone == 20,
          "exhaustive beam = brute force on " + std::to_string(exact) + "/" + std::to_string(total) +
              " tiny models; beam-monotone on " + std::to_string(monotone) + "/20 instances"};
}

// --- 10. End-to-end trend ---------------------------------------------------

ExperimentConfig TrendConfig(uint64_t seed) {
  ExperimentConfig c = PresetConfig("desk");
  c.seed = seed;
  c.corpus.visual_informativeness = 0.5;
  c.corpus.noise_std = 1.0;
  c.corpus.video_noise_std = 0.1;
  c.corpus.num_utterances = 150;
  c.Resolve();
  c.Validate();
  return c;
}

double Median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

Outcome EndToEndTrend(const fs::path& work) {
  using training::FusionInit;
  using training::Stage;
  std::map<std::string, std::vector<double>> cer;
  std::string per_seed;
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const ExperimentConfig cfg = TrendConfig(seed);
    const pipeline::RunDir run(work / ("trend_seed" + std::to_string(seed)));
    fs::remove_all(run.root());
    pipeline::InitRunDir(cfg, run);
    pipeline::MakeData(cfg, run);
    pipeline::TrainGmm(cfg, run);
    pipeline::AlignCorpus(cfg, run);
    pipeline::Train(cfg, run, Stage::kPretrainAudio, FusionInit::kBoth);
    pipeline::Train(cfg, run, Stage::kPretrainVideo, FusionInit::kBoth);
    pipeline::Train(cfg, run, Stage::kTrainLm, FusionInit::kBoth);
    for (FusionInit init : {FusionInit::kBoth, FusionInit::kAudio, FusionInit::kNone})
      pipeline::Train(cfg, run, Stage::kFinetuneFusion, init);
    per_seed += " seed" + std::to_string(seed) + "{";
    for (const std::string sys : {"audio", "fusion/both", "fusion/audio", "fusion/none"}) {
      const fs::path hyp = pipeline::Decode(cfg, run, sys);
      const double v = pipeline::Eval(cfg, run, hyp, "", false).overall_cer;
      cer[sys].push_back(v);
      per_seed += " " + sys + "=" + Fmt("%.3f", v);
    }
    per_seed += " }";
  }
  const double both = Median3(cer["fusion/both"]), audio_init = Median3(cer["fusion/audio"]);
  const double scratch = Median3(cer["fusion/none"]), audio_only = Median3(cer["audio"]);
  const bool ok = both <= audio_init && audio_init <= scratch && both < audio_only;
  return {ok, "median CER both " + Fmt("%.3f", both) + ", audio-init " + Fmt("%.3f", audio_init) +
                  ", scratch " + Fmt("%.3f", scratch) + ", audio-only " + Fmt("%.3f", audio_only) +
                  ";" + per_seed};
}

// --- 11. ROVER --------------------------------------------------------------

Outcome RoverCriterion(const fs::path& work) {
  // a=0 b=1 c=2 x=3 d=4
  const auto hand = decoding::Rover({{0, 1, 2}, {0, 3, 2}, {0, 1, 4}});
  fs::create_directories(work);
  const fs::path in = work / "rover_in.hyp", out = work / "rover_out.hyp";
  nn::Rng rng(11);
  std::uniform_int_distribution<int> len(0, 8), tok(0, 7);
  std::vector<decoding::HypRecord> rows;
  for (int i = 0; i < 25; ++i) {
    decoding::HypRecord r{"utt" + std::to_string(i), -1.0 * i, {}};
    r.tokens.resize(len(rng));
    for (int& t : r.tokens) t = tok(rng);
    rows.push_back(r);
  }
  decoding::WriteHypFile(in.string(), rows, "0000000000000000");
  pipeline::RoverFiles({in, in, in}, out);
  const auto back = decoding::ReadHypFile(out.string());
  bool identity = back.size() == rows.size();
  for (size_t i = 0; identity && i < rows.size(); ++i)
    identity = back[i].utt_id == rows[i].utt_id && back[i].tokens == rows[i].tokens;
  const bool ok = hand == std::vector<int>{0, 1, 2} && identity;
  return {ok, std::string("hand example -> ") + (hand == std::vector<int>{0, 1, 2} ? "a b c" : "mismatch") +
                  ", three copies " + (identity ? "identity" : "NOT identity")};
}

// --- 12. Determinism --------------------------------------------------------

Outcome Determinism(const fs::path& work) {
  const ExperimentConfig cfg = PresetConfig("desk");
  std::vector<fs::path> roots;
  for (const char* name : {"determinism_a", "determinism_b"}) {
    const pipeline::RunDir run(work / name);
    fs::remove_all(run.root());
    pipeline::RunRecipe(cfg, run);
    roots.push_back(run.root());
  }
  int compared = 0;
  std::vector<std::string> differ;
  for (const auto& e : fs::recursive_directory_iterator(roots[0])) {
    if (!e.is_regular_file() || e.path().extension() != ".jsonl") continue;
    const fs::path rel = fs::relative(e.path(), roots[0]);
    ++compared;
    if (Slurp(e.path()) != Slurp(roots[1] / rel)) differ.push_back(rel.string());
  }
  std::string detail = std::to_string(compared) + " metrics logs compared";
  for (const auto& d : differ) detail += ", differs: " + d;
  return {compared >= 5 && differ.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // <= 0: no runtime bound
  std::function<Outcome(const fs::path&)> run;
};

int Main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "avsr_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--work-dir DIR] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(work);
  const std::vector<Criterion> criteria = {
      {1, "CTC oracle", 10, CtcOracle},
      {2, "Viterbi oracle", 10, ViterbiOracle},
      {3, "EM monotonicity", 60, EmMonotonicity},
      {4, "alignment quality", 120, AlignmentQuality},
      {5, "gradient checks", 120, GradientChecks},
      {6, "shape/contract suite", 0, ShapeContracts},
      {7, "degenerate equivalence", 0, DegenerateEquivalence},
      {8, "loss arithmetic", 0, LossArithmetic},
      {9, "decoding oracle", 0, DecodingOracle},
      {10, "end-to-end trend", 1800, EndToEndTrend},
      {11, "ROVER", 0, RoverCriterion},
      {12, "determinism", 0, Determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(work);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    std::string timing = Fmt("%.1f s", secs);
    if (c.budget_s > 0) {
      timing += Fmt(", budget %.0f s", c.budget_s);
      if (secs >= c.budget_s) {
        pass = false;
        timing += ", OVER BUDGET";
      }
    }
    std::printf("%s criterion %2d (%s): %s [%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failed += !pass;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace avsr

int main(int argc, char** argv) { return avsr::Main(argc, argv); }

// encoder.cc

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

#include "avsr/encoder.h"

#include <algorithm>

#include "avsr/error.h"
#include "avsr/layers.h"
#include "avsr/nn/ops.h"

namespace avsr::encoder {
namespace {

const char kAudioEnc[] = "audio.enc";
const char kVisualEnc[] = "visual.enc";

std::string Block(const char* stack, int i) { return std::string(stack) + "." + std::to_string(i); }
std::string XAttn(int i) { return "fusion.xattn." + std::to_string(i); }

void CheckWidth(const nn::Var& x, const ConformerConfig& cfg, const char* what) {
  if (x.value().ndim() != 2 || x.cols() != cfg.d_model)
    throw ConfigError(std::string(what) + ": expected [T, " + std::to_string(cfg.d_model) +
                      "], got " + x.value().ShapeString());
}

}  // namespace

void ConformerConfig::Validate() const {
  if (d_model < 1 || n_head < 1 || d_ffn < 1) throw ConfigError("conformer: sizes must be positive");
  if (d_model % n_head != 0)
    throw ConfigError("conformer: d_model " + std::to_string(d_model) +
                      " not divisible by n_head " + std::to_string(n_head));
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw ConfigError("conformer: conv_kernel must be odd, got " + std::to_string(conv_kernel));
}

const char* VariantName(FusionVariant v) {
  switch (v) {
    case FusionVariant::kBaseline: return "baseline";
    case FusionVariant::kTmCtc: return "tm_ctc";
    case FusionVariant::kTmSeq: return "tm_seq";
    case FusionVariant::kCmfe: return "cmfe";
  }
  return "?";
}

FusionVariant ParseVariant(const std::string& s) {
  for (auto v : {FusionVariant::kBaseline, FusionVariant::kTmCtc, FusionVariant::kTmSeq,
                 FusionVariant::kCmfe})
    if (s == VariantName(v)) return v;
  throw ConfigError("unknown fusion variant '" + s + "' (baseline, tm_ctc, tm_seq, cmfe)");
}

const char* InsertionName(Insertion i) { return i == Insertion::kInner ? "inner" : "outer"; }

Insertion ParseInsertion(const std::string& s) {
  if (s == "inner") return Insertion::kInner;
  if (s == "outer") return Insertion::kOuter;
  throw ConfigError("unknown insertion '" + s + "' (inner, outer)");
}

void FusionConfig::Validate(bool paper_scale) const {
  if (n_early < 0 || m_late < 0 || AudioBlocks() < 1)
    throw ConfigError("fusion: N and M must be non-negative with N + M >= 1");
  if (n_vblock < 1) throw ConfigError("fusion: N_vblock must be >= 1");
  if (variant == FusionVariant::kCmfe) {
    if (n_early < 1) throw ConfigError("fusion: cmfe needs N >= 1 early layers");
    if (n_vblock > n_early)
      throw ConfigError("fusion: N_vblock " + std::to_string(n_vblock) + " exceeds N " +
                        std::to_string(n_early));
  }
  if (paper_scale) {
    if (AudioBlocks() != 12)
      throw ConfigError("fusion: paper-scale preset needs N + M = 12, got " +
                        std::to_string(AudioBlocks()));
    if (n_early < 1 || n_early > 3)
      throw ConfigError("fusion: paper-scale preset needs N in [1, 3], got " +
                        std::to_string(n_early));
  }
}

void InitConformerBlock(nn::ParamStore& ps, const std::string& prefix, const ConformerConfig& cfg,
                        nn::Rng& rng) {
  cfg.Validate();
  const int d = cfg.d_model;
  layers::InitFeedForward(ps, prefix + ".ff1", d, cfg.d_ffn, rng);
  layers::InitAttention(ps, prefix + ".mhsa", d, rng, false);
  layers::InitLayerNorm(ps, prefix + ".conv.ln", d);
  layers::InitLinear(ps, prefix + ".conv.pw1", d, 2 * d, rng);
  ps.Add(prefix + ".conv.dw.w", nn::FanInUniform({cfg.conv_kernel, d}, cfg.conv_kernel, rng));
  ps.Add(prefix + ".conv.dw.b", nn::Tensor({d}));
  // LayerNorm stands in for the usual BatchNorm so batch composition never
  // leaks into a single utterance's output.
  layers::InitLayerNorm(ps, prefix + ".conv.norm", d);
  layers::InitLinear(ps, prefix + ".conv.pw2", d, d, rng);
  layers::InitFeedForward(ps, prefix + ".ff2", d, cfg.d_ffn, rng);
  layers::InitLayerNorm(ps, prefix + ".ln_out", d);
}

nn::Var ConformerBlockFwd(nn::Graph& g, const std::string& prefix, const ConformerConfig& cfg,
                          const nn::Var& x_in, int64_t valid, const InnerHook& inner) {
  CheckWidth(x_in, cfg, "conformer block");
  nn::Var x = nn::Add(x_in, nn::Scale(layers::FeedForwardFwd(g, prefix + ".ff1", x_in, true), 0.5));
  x = nn::Add(x, layers::SelfAttentionFwd(g, prefix + ".mhsa", cfg.n_head, x, valid, false));
  if (inner) {
    nn::Var extra = inner(x);
    if (extra.defined()) x = nn::Add(x, extra);
  }
  nn::Var c = layers::LinearFwd(g, prefix + ".conv.pw1", layers::LayerNormFwd(g, prefix + ".conv.ln", x));
  c = nn::MaskRows(nn::Glu(c), valid);
  c = nn::DepthwiseConv1d(c, g.Param(prefix + ".conv.dw.w"), g.Param(prefix + ".conv.dw.b"));
  c = nn::Swish(layers::LayerNormFwd(g, prefix + ".conv.norm", c));
  x = nn::Add(x, layers::LinearFwd(g, prefix + ".conv.pw2", c));
  x = nn::Add(x, nn::Scale(layers::FeedForwardFwd(g, prefix + ".ff2", x, true), 0.5));
  return layers::LayerNormFwd(g, prefix + ".ln_out", x);
}

void InitConformerStack(nn::ParamStore& ps, const std::string& prefix, const ConformerConfig& cfg,
                        int num_blocks, nn::Rng& rng) {
  for (int i = 0; i < num_blocks; ++i)
    InitConformerBlock(ps, prefix + "." + std::to_string(i), cfg, rng);
}

nn::Var ConformerStackFwd(nn::Graph& g, const std::string& prefix, const ConformerConfig& cfg,
                          int num_blocks, const nn::Var& x_in, int64_t valid) {
  nn::Var x = x_in;
  for (int i = 0; i < num_blocks; ++i)
    x = ConformerBlockFwd(g, prefix + "." + std::to_string(i), cfg, x, valid);
  return x;
}

nn::Var AddPositions(const nn::Var& x) {
  return nn::AddConstant(x, nn::SinusoidalPositions(x.rows(), x.cols()));
}

nn::Var AlignTo(const nn::Var& x, int64_t valid, int64_t length) {
  const int64_t keep = std::min({x.rows(), valid, length});
  return nn::PadRows(nn::SliceRows(nn::MaskRows(x, keep), 0, keep), length);
}

void InitVisualMemory(nn::ParamStore& ps, const std::string& prefix, int num_memories, int d_model,
                      nn::Rng& rng) {
  layers::InitLinear(ps, prefix, static_cast<int64_t>(num_memories) * d_model, d_model, rng);
}

nn::Var BuildVisualMemory(nn::Graph& g, const std::string& prefix,
                          const std::vector<nn::Var>& memories) {
  if (memories.empty()) throw ConfigError("visual memory: no early-layer embeddings");
  for (const auto& m : memories)
    if (m.rows() != memories[0].rows())
      throw ConfigError("visual memory: ragged lengths " + std::to_string(memories[0].rows()) +
                        " vs " + std::to_string(m.rows()));
  return layers::LinearFwd(g, prefix, nn::ConcatCols(memories));
}

void InitAudioEncoder(nn::ParamStore& ps, const ConformerConfig& cfg, int num_blocks,
                      nn::Rng& rng) {
  InitConformerStack(ps, kAudioEnc, cfg, num_blocks, rng);
}

EncoderOutput AudioEncoderFwd(nn::Graph& g, const ConformerConfig& cfg, int num_blocks,
                              const nn::Var& audio_emb, int64_t audio_valid) {
  CheckWidth(audio_emb, cfg, "audio encoder");
  EncoderOutput out;
  out.audio_valid = audio_valid;
  out.audio = ConformerStackFwd(g, kAudioEnc, cfg, num_blocks, AddPositions(audio_emb), audio_valid);
  return out;
}

void InitFusionEncoder(nn::ParamStore& ps, const ConformerConfig& cfg, const FusionConfig& fusion,
                       nn::Rng& rng) {
  cfg.Validate();
  fusion.Validate(false);
  const int d = cfg.d_model;
  InitConformerStack(ps, kAudioEnc, cfg, fusion.AudioBlocks(), rng);
  InitConformerStack(ps, kVisualEnc, cfg, fusion.n_vblock, rng);
  switch (fusion.variant) {
    case FusionVariant::kCmfe:
      for (int i = 0; i < fusion.AudioBlocks(); ++i) layers::InitAttention(ps, XAttn(i), d, rng, true);
      InitVisualMemory(ps, "fusion.memory", fusion.n_early, d, rng);
      break;
    case FusionVariant::kBaseline:
      layers::InitAttention(ps, "fusion.v2a", d, rng, true);
      layers::InitAttention(ps, "fusion.a2v", d, rng, true);
      break;
    case FusionVariant::kTmCtc:
      layers::InitLinear(ps, "fusion.vproj", d, d, rng, false);
      break;
    case FusionVariant::kTmSeq:
      break;
  }
}

EncoderOutput CmfeFwd(nn::Graph& g, const ConformerConfig& cfg, const FusionConfig& fusion,
                      const nn::Var& audio_emb, int64_t audio_valid, const nn::Var& video_emb,
                      int64_t video_valid) {
  fusion.Validate(false);
  CheckWidth(audio_emb, cfg, "cmfe audio input");
  CheckWidth(video_emb, cfg, "cmfe video input");
  const int64_t ta = audio_emb.rows();
  EncoderOutput out;
  out.audio_valid = audio_valid;
  nn::Var xa = AddPositions(audio_emb);
  nn::Var xv = AddPositions(video_emb);

  auto insert = [&](int layer, const nn::Var& xa_now, const nn::Var& q_video) -> nn::Var {
    if (layer < fusion.n_early) {
      // Early fusion: video queries the audio stream; the result follows the
      // video timeline and is added frame by frame onto the audio stream.
      nn::Var ca = layers::CrossAttentionFwd(g, XAttn(layer), cfg.n_head, q_video, xa_now, audio_valid);
      return AlignTo(ca, video_valid, ta);
    }
    return layers::CrossAttentionFwd(g, XAttn(layer), cfg.n_head, xa_now, out.visual_memory,
                                     video_valid);
  };

  for (int n = 0; n < fusion.AudioBlocks(); ++n) {
    if (n < fusion.n_early) {
      if (n < fusion.n_vblock) xv = ConformerBlockFwd(g, Block(kVisualEnc, n), cfg, xv, video_valid);
      out.visual_layers.push_back(xv);
      if (n + 1 == fusion.n_early)
        out.visual_memory = BuildVisualMemory(g, "fusion.memory", out.visual_layers);
    }
    const nn::Var q_video = xv;
    if (fusion.insert == Insertion::kOuter) {
      xa = nn::Add(xa, insert(n, xa, q_video));
      xa = ConformerBlockFwd(g, Block(kAudioEnc, n), cfg, xa, audio_valid);
    } else {
      xa = ConformerBlockFwd(g, Block(kAudioEnc, n), cfg, xa, audio_valid,
                             [&](const nn::Var& h) { return insert(n, h, q_video); });
    }
  }
  out.audio = xa;
  return out;
}

EncoderOutput BaselineFwd(nn::Graph& g, const ConformerConfig& cfg, const FusionConfig& fusion,
                          const nn::Var& audio_emb, int64_t audio_valid, const nn::Var& video_emb,
                          int64_t video_valid) {
  CheckWidth(audio_emb, cfg, "baseline audio input");
  CheckWidth(video_emb, cfg, "baseline video input");
  EncoderOutput out;
  out.audio_valid = audio_valid;
  nn::Var xa = ConformerStackFwd(g, kAudioEnc, cfg, fusion.AudioBlocks(), AddPositions(audio_emb),
                                 audio_valid);
  nn::Var xv = ConformerStackFwd(g, kVisualEnc, cfg, fusion.n_vblock, AddPositions(video_emb),
                                 video_valid);
  xv = nn::Add(xv, layers::CrossAttentionFwd(g, "fusion.v2a", cfg.n_head, xv, xa, audio_valid));
  out.audio =
      nn::Add(xa, layers::CrossAttentionFwd(g, "fusion.a2v", cfg.n_head, xa, xv, video_valid));
  return out;
}

EncoderOutput TmCtcFwd(nn::Graph& g, const ConformerConfig& cfg, const FusionConfig& fusion,
                       const nn::Var& audio_emb, int64_t audio_valid, const nn::Var& video_emb,
                       int64_t video_valid) {
  CheckWidth(audio_emb, cfg, "tm_ctc audio input");
  CheckWidth(video_emb, cfg, "tm_ctc video input");
  EncoderOutput out;
  out.audio_valid = audio_valid;
  nn::Var xa = ConformerStackFwd(g, kAudioEnc, cfg, fusion.AudioBlocks(), AddPositions(audio_emb),
                                 audio_valid);
  nn::Var xv = ConformerStackFwd(g, kVisualEnc, cfg, fusion.n_vblock, AddPositions(video_emb),
                                 video_valid);
  nn::Var v = layers::LinearFwd(g, "fusion.vproj", xv, false);
  out.audio = nn::Add(xa, AlignTo(v, video_valid, xa.rows()));
  return out;
}

EncoderOutput TmSeqFwd(nn::Graph& g, const ConformerConfig& cfg, const FusionConfig& fusion,
                       const nn::Var& audio_emb, int64_t audio_valid, const nn::Var& video_emb,
                       int64_t video_valid) {
  CheckWidth(audio_emb, cfg, "tm_seq audio input");
  CheckWidth(video_emb, cfg, "tm_seq video input");
  EncoderOutput out;
  out.audio_valid = audio_valid;
  out.video_valid = video_valid;
  out.audio = ConformerStackFwd(g, kAudioEnc, cfg, fusion.AudioBlocks(), AddPositions(audio_emb),
                                audio_valid);
  out.video = ConformerStackFwd(g, kVisualEnc, cfg, fusion.n_vblock, AddPositions(video_emb),
                                video_valid);
  return out;
}

EncoderOutput FusionEncoderFwd(nn::Graph& g, const ConformerConfig& cfg,
                               const FusionConfig& fusion, const nn::Var& audio_emb,
                               int64_t audio_valid, const nn::Var& video_emb, int64_t video_valid) {
  switch (fusion.variant) {
    case FusionVariant::kCmfe:
      return CmfeFwd(g, cfg, fusion, audio_emb, audio_valid, video_emb, video_valid);
    case FusionVariant::kBaseline:
      return BaselineFwd(g, cfg, fusion, audio_emb, audio_valid, video_emb, video_valid);
    case FusionVariant::kTmCtc:
      return TmCtcFwd(g, cfg, fusion, audio_emb, audio_valid, video_emb, video_valid);
    case FusionVariant::kTmSeq:
      return TmSeqFwd(g, cfg, fusion, audio_emb, audio_valid, video_emb, video_valid);
  }
  throw ConfigError("unknown fusion variant");
}

}  // namespace avsr::encoder

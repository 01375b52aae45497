// model.cc

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

#include "avsr/model.h"

#include "avsr/error.h"
#include "avsr/layers.h"
#include "avsr/nn/ops.h"

namespace avsr::model {
namespace {

decoder::DecoderConfig MakeDecoderConfig(const ModelConfig& cfg, int layers) {
  decoder::DecoderConfig d;
  d.vocab = cfg.vocab;
  d.d_model = cfg.conformer.d_model;
  d.n_head = cfg.conformer.n_head;
  d.d_ffn = cfg.conformer.d_ffn;
  d.num_layers = layers;
  return d;
}

void InitAsrHeads(nn::ParamStore& ps, const ModelConfig& cfg, int memories, nn::Rng& rng) {
  layers::InitLinear(ps, "ctc", cfg.conformer.d_model, cfg.vocab + 1, rng);
  decoder::InitDecoder(ps, kDecoderPrefix, cfg.Decoder(), memories, rng);
}

nn::Var AudioFrontend(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& features,
                      int64_t valid, int64_t* out_valid) {
  *out_valid = frontend::AudioOutputLength(valid);
  return frontend::AudioForward(g, cfg.audio_frontend, nn::Constant(features), valid);
}

}  // namespace

const char* ModelKindName(ModelKind k) {
  switch (k) {
    case ModelKind::kAudioOnly: return "audio_only";
    case ModelKind::kVideoPretrain: return "video_pretrain";
    case ModelKind::kFusion: return "fusion";
  }
  return "?";
}

decoder::DecoderConfig ModelConfig::Decoder() const { return MakeDecoderConfig(*this, decoder_layers); }
decoder::DecoderConfig ModelConfig::Lm() const { return MakeDecoderConfig(*this, lm_layers); }

void ModelConfig::Validate(bool paper_scale) const {
  audio_frontend.Validate();
  visual_frontend.Validate();
  conformer.Validate();
  fusion.Validate(paper_scale);
  if (audio_frontend.d_model != conformer.d_model || visual_frontend.d_model != conformer.d_model)
    throw ConfigError("model: frontend d_model must equal conformer d_model " +
                      std::to_string(conformer.d_model));
  if (video_pretrain_blocks < 1) throw ConfigError("model: video_pretrain_blocks must be >= 1");
  if (fusion.n_vblock > video_pretrain_blocks)
    throw ConfigError("model: N_vblock " + std::to_string(fusion.n_vblock) +
                      " exceeds the pre-trained visual depth " +
                      std::to_string(video_pretrain_blocks));
  if (num_senones < 1) throw ConfigError("model: num_senones must be >= 1");
  Decoder().Validate();
  Lm().Validate();
}

void InitAudioOnlyModel(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng) {
  frontend::InitAudioFrontend(ps, cfg.audio_frontend, rng);
  encoder::InitAudioEncoder(ps, cfg.conformer, cfg.fusion.AudioBlocks(), rng);
  InitAsrHeads(ps, cfg, 1, rng);
}

void InitVideoPretrainModel(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng) {
  frontend::InitVisualFrontend(ps, cfg.visual_frontend, rng);
  frontend::InitUpsampler(ps, cfg.conformer.d_model, rng);
  encoder::InitConformerStack(ps, "visual.enc", cfg.conformer, cfg.video_pretrain_blocks, rng);
  layers::InitLinear(ps, "senone", cfg.conformer.d_model, cfg.num_senones, rng);
}

void InitFusionModel(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng) {
  frontend::InitAudioFrontend(ps, cfg.audio_frontend, rng);
  frontend::InitVisualFrontend(ps, cfg.visual_frontend, rng);
  encoder::InitFusionEncoder(ps, cfg.conformer, cfg.fusion, rng);
  InitAsrHeads(ps, cfg, cfg.fusion.variant == encoder::FusionVariant::kTmSeq ? 2 : 1, rng);
}

void InitLanguageModel(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng) {
  decoder::InitDecoder(ps, kLmPrefix, cfg.Lm(), 0, rng);
}

AsrForward EncodeAudioOnly(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& features,
                           int64_t valid) {
  int64_t a_valid = 0;
  nn::Var a = AudioFrontend(g, cfg, features, valid, &a_valid);
  AsrForward out;
  out.enc = encoder::AudioEncoderFwd(g, cfg.conformer, cfg.fusion.AudioBlocks(), a, a_valid);
  out.ctc_logits = layers::LinearFwd(g, "ctc", out.enc.audio);
  out.memories = {{out.enc.audio, a_valid}};
  return out;
}

AsrForward EncodeFusion(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& features,
                        int64_t feat_valid, const nn::Tensor& video, int64_t video_valid) {
  int64_t a_valid = 0;
  nn::Var a = AudioFrontend(g, cfg, features, feat_valid, &a_valid);
  nn::Var v = frontend::VisualForward(g, cfg.visual_frontend, nn::Constant(video), video_valid);
  AsrForward out;
  out.enc = encoder::FusionEncoderFwd(g, cfg.conformer, cfg.fusion, a, a_valid, v, video_valid);
  out.ctc_logits = layers::LinearFwd(g, "ctc", out.enc.audio);
  out.memories = {{out.enc.audio, a_valid}};
  if (out.enc.video.defined()) out.memories.push_back({out.enc.video, out.enc.video_valid});
  return out;
}

nn::Var VideoEmbeddings(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& video,
                        int64_t valid) {
  return frontend::VisualForward(g, cfg.visual_frontend, nn::Constant(video), valid);
}

nn::Var VideoFrameLogits(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& video,
                         int64_t valid) {
  nn::Var x = frontend::Upsample4x(g, VideoEmbeddings(g, cfg, video, valid), valid);
  const int64_t up_valid = 4 * valid;
  x = encoder::ConformerStackFwd(g, "visual.enc", cfg.conformer, cfg.video_pretrain_blocks,
                                 encoder::AddPositions(x), up_valid);
  return layers::LinearFwd(g, "senone", x);
}

}  // namespace avsr::model

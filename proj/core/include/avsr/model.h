// avsr/model.h

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

#ifndef AVSR_MODEL_H_
#define AVSR_MODEL_H_

#include <string>
#include <vector>

#include "avsr/decoder.h"
#include "avsr/encoder.h"
#include "avsr/frontend.h"
#include "avsr/nn/autograd.h"

// Whole networks assembled from frontends, encoders and heads: the audio-only
// hybrid CTC/attention model, the video-only senone classifier used for
// visual pre-training, and the audio-visual fusion model.

namespace avsr::model {

enum class ModelKind { kAudioOnly, kVideoPretrain, kFusion };
const char* ModelKindName(ModelKind k);

struct ModelConfig {
  frontend::AudioFrontendConfig audio_frontend;
  frontend::VisualFrontendConfig visual_frontend;
  encoder::ConformerConfig conformer;
  encoder::FusionConfig fusion;
  int video_pretrain_blocks = 3;
  int decoder_layers = 2;
  int lm_layers = 2;
  int vocab = 8;         // token inventory (corpus units)
  int num_senones = 24;  // pre-training classes

  decoder::DecoderConfig Decoder() const;
  decoder::DecoderConfig Lm() const;
  /// Also checks that frontend output widths agree with d_model and that the
  /// fusion model can inherit its visual blocks from pre-training.
  void Validate(bool paper_scale) const;
};

void InitAudioOnlyModel(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng);
void InitVideoPretrainModel(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng);
void InitFusionModel(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng);
void InitLanguageModel(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng);

/// Encoder-side result of an ASR model: CTC logits [T_a, vocab + 1] (blank
/// is index vocab) and the memories the attention decoder reads.
struct AsrForward {
  encoder::EncoderOutput enc;
  nn::Var ctc_logits;
  std::vector<decoder::Memory> memories;
};

AsrForward EncodeAudioOnly(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& features,
                           int64_t valid);
AsrForward EncodeFusion(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& features,
                        int64_t feat_valid, const nn::Tensor& video, int64_t video_valid);

/// Visual frontend embeddings [T_v, d_model] of the pre-training model.
nn::Var VideoEmbeddings(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& video,
                        int64_t valid);
/// Frame-level senone logits [4 T_v, num_senones].
nn::Var VideoFrameLogits(nn::Graph& g, const ModelConfig& cfg, const nn::Tensor& video,
                         int64_t valid);

inline constexpr char kDecoderPrefix[] = "decoder";
inline constexpr char kLmPrefix[] = "lm";

}  // namespace avsr::model

#endif  // AVSR_MODEL_H_

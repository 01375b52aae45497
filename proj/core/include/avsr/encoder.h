// avsr/encoder.h

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

#ifndef AVSR_ENCODER_H_
#define AVSR_ENCODER_H_

#include <functional>
#include <string>
#include <vector>

#include "avsr/nn/autograd.h"

namespace avsr::encoder {

struct ConformerConfig {
  int d_model = 64;
  int n_head = 4;
  int d_ffn = 256;
  int conv_kernel = 5;

  void Validate() const;
};

enum class FusionVariant { kBaseline, kTmCtc, kTmSeq, kCmfe };
enum class Insertion { kInner, kOuter };

const char* VariantName(FusionVariant v);
FusionVariant ParseVariant(const std::string& s);
const char* InsertionName(Insertion i);
Insertion ParseInsertion(const std::string& s);

/// Layout of the fused encoder. The audio branch always has N + M conformer
/// blocks. For cmfe the first N are early fusion layers, of which the first
/// n_vblock also run a visual conformer block; the remaining M late layers
/// attend to the projected visual memory. For the other variants
/// n_vblock is the depth of the independent visual conformer stack.
struct FusionConfig {
  FusionVariant variant = FusionVariant::kCmfe;
  int n_early = 2;
  int m_late = 2;
  Insertion insert = Insertion::kOuter;
  int n_vblock = 2;

  int AudioBlocks() const { return n_early + m_late; }
  /// paper_scale additionally requires N + M = 12 and N in [1, 3].
  void Validate(bool paper_scale) const;
};

/// Called between the self-attention and convolution modules of a block
/// with the current stream; a defined return value is added residually.
using InnerHook = std::function<nn::Var(const nn::Var&)>;

void InitConformerBlock(nn::ParamStore& ps, const std::string& prefix, const ConformerConfig& cfg,
                        nn::Rng& rng);
/// x [T, d_model]; rows at index >= valid are padding and never influence
/// rows below valid.
nn::Var ConformerBlockFwd(nn::Graph& g, const std::string& prefix, const ConformerConfig& cfg,
                          const nn::Var& x, int64_t valid, const InnerHook& inner = nullptr);

/// Blocks `<prefix>.0` .. `<prefix>.<n-1>`.
void InitConformerStack(nn::ParamStore& ps, const std::string& prefix, const ConformerConfig& cfg,
                        int num_blocks, nn::Rng& rng);
nn::Var ConformerStackFwd(nn::Graph& g, const std::string& prefix, const ConformerConfig& cfg,
                          int num_blocks, const nn::Var& x, int64_t valid);

/// x + sinusoidal absolute positions.
nn::Var AddPositions(const nn::Var& x);

/// Rows of x below `valid` copied to a sequence of `length` rows; the rest
/// are zero. Used to add a video-rate stream onto the audio stream.
nn::Var AlignTo(const nn::Var& x, int64_t valid, int64_t length);

/// Visual memory: concat over channels, then one linear projection to d_model.
/// Ragged lengths throw ConfigError.
void InitVisualMemory(nn::ParamStore& ps, const std::string& prefix, int num_memories, int d_model,
                      nn::Rng& rng);
nn::Var BuildVisualMemory(nn::Graph& g, const std::string& prefix,
                          const std::vector<nn::Var>& memories);

struct EncoderOutput {
  nn::Var audio;  // [T_a, d_model], the fused sequence for all but tm_seq
  int64_t audio_valid = 0;
  nn::Var video;  // tm_seq: visual memory for the decoder; otherwise undefined
  int64_t video_valid = 0;
  std::vector<nn::Var> visual_layers;  // cmfe: X_V^1 .. X_V^N
  nn::Var visual_memory;               // cmfe: X_V^O
};

/// Audio-only conformer stack under "audio.enc".
void InitAudioEncoder(nn::ParamStore& ps, const ConformerConfig& cfg, int num_blocks, nn::Rng& rng);
EncoderOutput AudioEncoderFwd(nn::Graph& g, const ConformerConfig& cfg, int num_blocks,
                              const nn::Var& audio_emb, int64_t audio_valid);

/// Fusion encoder parameters: "audio.enc.*", "visual.enc.*" and "fusion.*".
void InitFusionEncoder(nn::ParamStore& ps, const ConformerConfig& cfg, const FusionConfig& fusion,
                       nn::Rng& rng);
/// Dispatches on fusion.variant. Inputs are frontend outputs at 25 frames/s.
EncoderOutput FusionEncoderFwd(nn::Graph& g, const ConformerConfig& cfg,
                               const FusionConfig& fusion, const nn::Var& audio_emb,
                               int64_t audio_valid, const nn::Var& video_emb, int64_t video_valid);

EncoderOutput CmfeFwd(nn::Graph& g, const ConformerConfig& cfg, const FusionConfig& fusion,
                      const nn::Var& audio_emb, int64_t audio_valid, const nn::Var& video_emb,
                      int64_t video_valid);
EncoderOutput BaselineFwd(nn::Graph& g, const ConformerConfig& cfg, const FusionConfig& fusion,
                          const nn::Var& audio_emb, int64_t audio_valid, const nn::Var& video_emb,
                          int64_t video_valid);
EncoderOutput TmCtcFwd(nn::Graph& g, const ConformerConfig& cfg, const FusionConfig& fusion,
                       const nn::Var& audio_emb, int64_t audio_valid, const nn::Var& video_emb,
                       int64_t video_valid);
EncoderOutput TmSeqFwd(nn::Graph& g, const ConformerConfig& cfg, const FusionConfig& fusion,
                       const nn::Var& audio_emb, int64_t audio_valid, const nn::Var& video_emb,
                       int64_t video_valid);

}  // namespace avsr::encoder

#endif  // AVSR_ENCODER_H_

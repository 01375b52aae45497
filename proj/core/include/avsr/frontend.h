// avsr/frontend.h

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

#ifndef AVSR_FRONTEND_H_
#define AVSR_FRONTEND_H_

#include <string>
#include <vector>

#include "avsr/nn/autograd.h"

namespace avsr::frontend {

/// 3-D conv stem followed by a small residual 2-D conv stack, spatial
/// global pooling and a linear map to d_model.
struct VisualFrontendConfig {
  int height = 32;
  int width = 32;
  int stem_channels = 8;
  int stem_kt = 3;     // temporal kernel, stride 1, same padding
  int stem_k = 5;      // spatial kernel, stride 2
  std::vector<int> block_channels = {8, 16};  // a change of width strides by 2
  int d_model = 64;

  void Validate() const;
};

/// Two stride-2 temporal convs (kernel 3, padding 1) and a linear map.
struct AudioFrontendConfig {
  int feature_dim = 80;
  int channels = 64;
  int d_model = 64;

  void Validate() const;
};

void InitVisualFrontend(nn::ParamStore& ps, const VisualFrontendConfig& cfg, nn::Rng& rng,
                        const std::string& prefix = "visual");
/// video [T_v, H, W] -> [T_v, d_model]. Frames at index >= valid are
/// treated as padding.
nn::Var VisualForward(nn::Graph& g, const VisualFrontendConfig& cfg, const nn::Var& video,
                      int64_t valid, const std::string& prefix = "visual");

/// Two transposed temporal convs (kernel 4, stride 2, padding 1).
void InitUpsampler(nn::ParamStore& ps, int d_model, nn::Rng& rng,
                   const std::string& prefix = "upsampler");
/// [T_v, d] -> [4 T_v, d].
nn::Var Upsample4x(nn::Graph& g, const nn::Var& emb, int64_t valid,
                   const std::string& prefix = "upsampler");

void InitAudioFrontend(nn::ParamStore& ps, const AudioFrontendConfig& cfg, nn::Rng& rng,
                       const std::string& prefix = "audio");
/// features [T, D] -> [AudioOutputLength(T), d_model].
nn::Var AudioForward(nn::Graph& g, const AudioFrontendConfig& cfg, const nn::Var& features,
                     int64_t valid, const std::string& prefix = "audio");

/// ceil(ceil(T / 2) / 2): frame count after the two stride-2 convs.
int64_t AudioOutputLength(int64_t frames);

}  // namespace avsr::frontend

#endif  // AVSR_FRONTEND_H_

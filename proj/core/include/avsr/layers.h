// avsr/layers.h

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

#ifndef AVSR_LAYERS_H_
#define AVSR_LAYERS_H_

#include <string>

#include "avsr/nn/autograd.h"
#include "avsr/nn/ops.h"

// Parameterised building blocks shared by the encoders, the attention
// decoder and the language model. Each block owns the parameters under
// `prefix` in a ParamStore.

namespace avsr::layers {

void InitLinear(nn::ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                nn::Rng& rng, bool bias = true);
nn::Var LinearFwd(nn::Graph& g, const std::string& prefix, const nn::Var& x, bool bias = true);

void InitLayerNorm(nn::ParamStore& ps, const std::string& prefix, int64_t dim);
nn::Var LayerNormFwd(nn::Graph& g, const std::string& prefix, const nn::Var& x);

/// LN -> Linear(d, ffn) -> activation -> Linear(ffn, d); no residual.
void InitFeedForward(nn::ParamStore& ps, const std::string& prefix, int64_t d, int64_t ffn,
                     nn::Rng& rng);
nn::Var FeedForwardFwd(nn::Graph& g, const std::string& prefix, const nn::Var& x, bool swish);

/// Multi-head attention with q/k/v/o projections and pre-normalisation of
/// the query stream (and of the key/value stream when cross-attending).
void InitAttention(nn::ParamStore& ps, const std::string& prefix, int64_t d, nn::Rng& rng,
                   bool cross);
nn::Var SelfAttentionFwd(nn::Graph& g, const std::string& prefix, int n_head, const nn::Var& x,
                         int64_t valid, bool causal);
/// Output is aligned with `q`; keys at index >= kv_valid are ignored.
nn::Var CrossAttentionFwd(nn::Graph& g, const std::string& prefix, int n_head, const nn::Var& q,
                          const nn::Var& kv, int64_t kv_valid);

}  // namespace avsr::layers

#endif  // AVSR_LAYERS_H_

// layers.cc

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

#include "avsr/layers.h"

namespace avsr::layers {

void InitLinear(nn::ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                nn::Rng& rng, bool bias) {
  ps.Add(prefix + ".w", nn::FanInUniform({in, out}, in, rng));
  if (bias) ps.Add(prefix + ".b", nn::Tensor({out}));
}

nn::Var LinearFwd(nn::Graph& g, const std::string& prefix, const nn::Var& x, bool bias) {
  return nn::Linear(x, g.Param(prefix + ".w"), bias ? g.Param(prefix + ".b") : nn::Var());
}

void InitLayerNorm(nn::ParamStore& ps, const std::string& prefix, int64_t dim) {
  ps.Add(prefix + ".g", nn::Tensor({dim}, 1.0));
  ps.Add(prefix + ".b", nn::Tensor({dim}));
}

nn::Var LayerNormFwd(nn::Graph& g, const std::string& prefix, const nn::Var& x) {
  return nn::LayerNorm(x, g.Param(prefix + ".g"), g.Param(prefix + ".b"));
}

void InitFeedForward(nn::ParamStore& ps, const std::string& prefix, int64_t d, int64_t ffn,
                     nn::Rng& rng) {
  InitLayerNorm(ps, prefix + ".ln", d);
  InitLinear(ps, prefix + ".l1", d, ffn, rng);
  InitLinear(ps, prefix + ".l2", ffn, d, rng);
}

nn::Var FeedForwardFwd(nn::Graph& g, const std::string& prefix, const nn::Var& x, bool swish) {
  nn::Var h = LinearFwd(g, prefix + ".l1", LayerNormFwd(g, prefix + ".ln", x));
  h = swish ? nn::Swish(h) : nn::Relu(h);
  return LinearFwd(g, prefix + ".l2", h);
}

void InitAttention(nn::ParamStore& ps, const std::string& prefix, int64_t d, nn::Rng& rng,
                   bool cross) {
  InitLayerNorm(ps, prefix + ".ln_q", d);
  if (cross) InitLayerNorm(ps, prefix + ".ln_kv", d);
  InitLinear(ps, prefix + ".q", d, d, rng);
  InitLinear(ps, prefix + ".k", d, d, rng);
  InitLinear(ps, prefix + ".v", d, d, rng);
  InitLinear(ps, prefix + ".o", d, d, rng);
}

nn::Var SelfAttentionFwd(nn::Graph& g, const std::string& prefix, int n_head, const nn::Var& x,
                         int64_t valid, bool causal) {
  nn::Var h = LayerNormFwd(g, prefix + ".ln_q", x);
  nn::Var q = LinearFwd(g, prefix + ".q", h);
  nn::Var k = LinearFwd(g, prefix + ".k", h);
  nn::Var v = LinearFwd(g, prefix + ".v", h);
  nn::Var a = nn::MultiHeadAttention(q, k, v, {n_head, valid, causal});
  return LinearFwd(g, prefix + ".o", a);
}

nn::Var CrossAttentionFwd(nn::Graph& g, const std::string& prefix, int n_head, const nn::Var& q_in,
                          const nn::Var& kv_in, int64_t kv_valid) {
  nn::Var hq = LayerNormFwd(g, prefix + ".ln_q", q_in);
  nn::Var hkv = LayerNormFwd(g, prefix + ".ln_kv", kv_in);
  nn::Var q = LinearFwd(g, prefix + ".q", hq);
  nn::Var k = LinearFwd(g, prefix + ".k", hkv);
  nn::Var v = LinearFwd(g, prefix + ".v", hkv);
  nn::Var a = nn::MultiHeadAttention(q, k, v, {n_head, kv_valid, false});
  return LinearFwd(g, prefix + ".o", a);
}

}  // namespace avsr::layers

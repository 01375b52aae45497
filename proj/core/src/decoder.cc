// decoder.cc

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

#include "avsr/decoder.h"

#include <cmath>

#include "avsr/encoder.h"
#include "avsr/error.h"
#include "avsr/layers.h"
#include "avsr/nn/ops.h"

namespace avsr::decoder {
namespace {

std::string Layer(const std::string& prefix, int i) { return prefix + ".layer" + std::to_string(i); }
std::string XAttn(const std::string& layer, int m) {
  return layer + (m == 0 ? ".xattn" : ".xattn" + std::to_string(m));
}

}  // namespace

void DecoderConfig::Validate() const {
  if (vocab < 1) throw ConfigError("decoder: vocab must be >= 1");
  if (d_model < 1 || n_head < 1 || d_model % n_head != 0)
    throw ConfigError("decoder: d_model must be a positive multiple of n_head");
  if (d_ffn < 1 || num_layers < 1) throw ConfigError("decoder: d_ffn and num_layers must be >= 1");
}

void InitDecoder(nn::ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg,
                 int memories, nn::Rng& rng) {
  cfg.Validate();
  const int d = cfg.d_model;
  ps.Add(prefix + ".embed", nn::FanInUniform({cfg.Classes(), d}, d, rng));
  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string l = Layer(prefix, i);
    layers::InitAttention(ps, l + ".self", d, rng, false);
    for (int m = 0; m < memories; ++m) layers::InitAttention(ps, XAttn(l, m), d, rng, true);
    layers::InitFeedForward(ps, l + ".ff", d, cfg.d_ffn, rng);
  }
  layers::InitLayerNorm(ps, prefix + ".ln_out", d);
  layers::InitLinear(ps, prefix + ".out", d, cfg.Classes(), rng);
}

nn::Var DecoderLogits(nn::Graph& g, const std::string& prefix, const DecoderConfig& cfg,
                      std::span<const int> tokens, const std::vector<Memory>& memories) {
  if (tokens.empty()) throw DegenerateInputError("decoder: empty input sequence");
  for (int t : tokens)
    if (t < 0 || t >= cfg.Classes())
      throw ConfigError("decoder: token " + std::to_string(t) + " outside [0, " +
                        std::to_string(cfg.Classes()) + ")");
  nn::Var x = nn::Scale(nn::GatherRows(g.Param(prefix + ".embed"), tokens),
                        std::sqrt(static_cast<double>(cfg.d_model)));
  x = encoder::AddPositions(x);
  const int64_t len = x.rows();
  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string l = Layer(prefix, i);
    x = nn::Add(x, layers::SelfAttentionFwd(g, l + ".self", cfg.n_head, x, len, true));
    for (size_t m = 0; m < memories.size(); ++m)
      x = nn::Add(x, layers::CrossAttentionFwd(g, XAttn(l, static_cast<int>(m)), cfg.n_head, x,
                                               memories[m].seq, memories[m].valid));
    x = nn::Add(x, layers::FeedForwardFwd(g, l + ".ff", x, false));
  }
  return layers::LinearFwd(g, prefix + ".out", layers::LayerNormFwd(g, prefix + ".ln_out", x));
}

std::vector<int> WithSos(const DecoderConfig& cfg, std::span<const int> target) {
  std::vector<int> v{cfg.Sos()};
  v.insert(v.end(), target.begin(), target.end());
  return v;
}

std::vector<int> WithEos(const DecoderConfig& cfg, std::span<const int> target) {
  std::vector<int> v(target.begin(), target.end());
  v.push_back(cfg.Eos());
  return v;
}

nn::Var AttentionNll(nn::Graph& g, const std::string& prefix, const DecoderConfig& cfg,
                     std::span<const int> target, const std::vector<Memory>& memories,
                     double smoothing) {
  if (target.empty()) throw DegenerateInputError("attention loss: empty target");
  const std::vector<int> in = WithSos(cfg, target);
  const std::vector<int> out = WithEos(cfg, target);
  return nn::CrossEntropy(DecoderLogits(g, prefix, cfg, in, memories), out, smoothing);
}

std::vector<double> NextLogProbs(nn::Graph& g, const std::string& prefix_name,
                                 const DecoderConfig& cfg, std::span<const int> prefix,
                                 const std::vector<Memory>& memories) {
  const std::vector<int> in = WithSos(cfg, prefix);
  nn::Var logp = nn::LogSoftmax(DecoderLogits(g, prefix_name, cfg, in, memories));
  const int64_t last = logp.rows() - 1;
  std::vector<double> out(cfg.Classes());
  for (int c = 0; c < cfg.Classes(); ++c) out[c] = logp.value().at(last, c);
  return out;
}

double LmScore(const nn::ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg,
               std::span<const int> tokens) {
  if (tokens.empty()) throw DegenerateInputError("lm_score: empty token sequence");
  nn::Graph g(ps, false);
  const std::vector<int> in = WithSos(cfg, tokens);
  const std::vector<int> out = WithEos(cfg, tokens);
  return -nn::CrossEntropy(DecoderLogits(g, prefix, cfg, in, {}), out, 0.0).value()[0];
}

}  // namespace avsr::decoder

// frontend.cc

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

#include "avsr/frontend.h"

#include "avsr/error.h"
#include "avsr/layers.h"
#include "avsr/nn/ops.h"

namespace avsr::frontend {
namespace {

int64_t Halve(int64_t n) { return (n + 1) / 2; }

nn::Conv3dSpec Conv2dSpec(int stride, int kernel) {
  nn::Conv3dSpec s;
  s.kt = 1;
  s.kh = s.kw = kernel;
  s.sh = s.sw = stride;
  s.pt = 0;
  s.ph = s.pw = kernel / 2;
  return s;
}

void InitConv(nn::ParamStore& ps, const std::string& prefix, int64_t patch, int64_t cout,
              nn::Rng& rng) {
  ps.Add(prefix + ".w", nn::FanInUniform({patch, cout}, patch, rng));
  ps.Add(prefix + ".b", nn::Tensor({cout}));
}

}  // namespace

void VisualFrontendConfig::Validate() const {
  if (height < 4 || width < 4) throw ConfigError("visual frontend: frame size too small");
  if (stem_channels < 1 || block_channels.empty()) throw ConfigError("visual frontend: no channels");
  if (stem_kt % 2 == 0 || stem_k % 2 == 0) throw ConfigError("visual frontend: kernels must be odd");
  if (d_model < 1) throw ConfigError("visual frontend: d_model must be positive");
}

void AudioFrontendConfig::Validate() const {
  if (feature_dim < 1 || channels < 1 || d_model < 1)
    throw ConfigError("audio frontend: dimensions must be positive");
}

int64_t AudioOutputLength(int64_t frames) { return Halve(Halve(frames)); }

void InitVisualFrontend(nn::ParamStore& ps, const VisualFrontendConfig& cfg, nn::Rng& rng,
                        const std::string& prefix) {
  cfg.Validate();
  InitConv(ps, prefix + ".stem", static_cast<int64_t>(cfg.stem_kt) * cfg.stem_k * cfg.stem_k,
           cfg.stem_channels, rng);
  int cin = cfg.stem_channels;
  for (size_t b = 0; b < cfg.block_channels.size(); ++b) {
    const int cout = cfg.block_channels[b];
    const std::string p = prefix + ".block" + std::to_string(b);
    InitConv(ps, p + ".conv1", 9LL * cin, cout, rng);
    InitConv(ps, p + ".conv2", 9LL * cout, cout, rng);
    if (cout != cin) InitConv(ps, p + ".skip", cin, cout, rng);
    cin = cout;
  }
  layers::InitLinear(ps, prefix + ".proj", cin, cfg.d_model, rng);
}

nn::Var VisualForward(nn::Graph& g, const VisualFrontendConfig& cfg, const nn::Var& video,
                      int64_t valid, const std::string& prefix) {
  const auto& shape = video.shape();
  if (shape.size() != 3 || shape[1] != cfg.height || shape[2] != cfg.width)
    throw ConfigError("visual frontend expects [T, " + std::to_string(cfg.height) + ", " +
                      std::to_string(cfg.width) + "] video, got " + video.value().ShapeString());
  const int64_t t = shape[0];
  nn::Var x = nn::MaskRows(nn::Reshape(video, {t, shape[1], shape[2], 1}), valid);

  nn::Conv3dSpec stem;
  stem.kt = cfg.stem_kt;
  stem.kh = stem.kw = cfg.stem_k;
  stem.st = 1;
  stem.sh = stem.sw = 2;
  stem.pt = cfg.stem_kt / 2;
  stem.ph = stem.pw = cfg.stem_k / 2;
  x = nn::Relu(nn::Conv3d(x, g.Param(prefix + ".stem.w"), g.Param(prefix + ".stem.b"), stem));

  int cin = cfg.stem_channels;
  for (size_t b = 0; b < cfg.block_channels.size(); ++b) {
    const int cout = cfg.block_channels[b];
    const int stride = cout != cin ? 2 : 1;
    const std::string p = prefix + ".block" + std::to_string(b);
    nn::Var h = nn::Relu(nn::Conv3d(x, g.Param(p + ".conv1.w"), g.Param(p + ".conv1.b"),
                                    Conv2dSpec(stride, 3)));
    h = nn::Conv3d(h, g.Param(p + ".conv2.w"), g.Param(p + ".conv2.b"), Conv2dSpec(1, 3));
    nn::Var skip = x;
    if (cout != cin) {
      nn::Conv3dSpec s = Conv2dSpec(stride, 1);
      s.ph = s.pw = 0;
      skip = nn::Conv3d(x, g.Param(p + ".skip.w"), g.Param(p + ".skip.b"), s);
    }
    x = nn::Relu(nn::Add(h, skip));
    cin = cout;
  }
  return layers::LinearFwd(g, prefix + ".proj", nn::GlobalAvgPool2d(x));
}

void InitUpsampler(nn::ParamStore& ps, int d_model, nn::Rng& rng, const std::string& prefix) {
  for (const char* l : {".l1", ".l2"}) {
    ps.Add(prefix + l + ".w", nn::FanInUniform({d_model, 4LL * d_model}, 2LL * d_model, rng));
    ps.Add(prefix + l + ".b", nn::Tensor({d_model}));
  }
}

nn::Var Upsample4x(nn::Graph& g, const nn::Var& emb, int64_t valid, const std::string& prefix) {
  if (emb.value().ndim() != 2 || emb.rows() < 1)
    throw ConfigError("upsampler expects a non-empty [T, d] sequence");
  nn::Var x = nn::MaskRows(emb, valid);
  x = nn::ConvTranspose1d(x, g.Param(prefix + ".l1.w"), g.Param(prefix + ".l1.b"), 4, 2, 1);
  x = nn::MaskRows(nn::Relu(x), 2 * valid);
  return nn::ConvTranspose1d(x, g.Param(prefix + ".l2.w"), g.Param(prefix + ".l2.b"), 4, 2, 1);
}

void InitAudioFrontend(nn::ParamStore& ps, const AudioFrontendConfig& cfg, nn::Rng& rng,
                       const std::string& prefix) {
  cfg.Validate();
  InitConv(ps, prefix + ".conv1", 3LL * cfg.feature_dim, cfg.channels, rng);
  InitConv(ps, prefix + ".conv2", 3LL * cfg.channels, cfg.channels, rng);
  layers::InitLinear(ps, prefix + ".proj", cfg.channels, cfg.d_model, rng);
}

nn::Var AudioForward(nn::Graph& g, const AudioFrontendConfig& cfg, const nn::Var& features,
                     int64_t valid, const std::string& prefix) {
  if (features.value().ndim() != 2 || features.cols() != cfg.feature_dim)
    throw ConfigError("audio frontend expects [T, " + std::to_string(cfg.feature_dim) +
                      "] features, got " + features.value().ShapeString());
  nn::Var x = nn::MaskRows(features, valid);
  x = nn::Relu(nn::Conv1d(x, g.Param(prefix + ".conv1.w"), g.Param(prefix + ".conv1.b"), 3, 2, 1));
  x = nn::MaskRows(x, Halve(valid));
  x = nn::Relu(nn::Conv1d(x, g.Param(prefix + ".conv2.w"), g.Param(prefix + ".conv2.b"), 3, 2, 1));
  x = nn::MaskRows(x, AudioOutputLength(valid));
  return layers::LinearFwd(g, prefix + ".proj", x);
}

}  // namespace avsr::frontend

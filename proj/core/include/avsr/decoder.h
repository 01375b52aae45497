// avsr/decoder.h

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

#ifndef AVSR_DECODER_H_
#define AVSR_DECODER_H_

#include <span>
#include <string>
#include <vector>

#include "avsr/nn/autograd.h"

// Autoregressive transformer decoder (attention branch of the hybrid model)
// and the transformer language model. Both predict vocab + 1 classes where
// the extra class `vocab` is used as sos on input and eos on output.

namespace avsr::decoder {

struct DecoderConfig {
  int vocab = 8;
  int d_model = 64;
  int n_head = 4;
  int d_ffn = 256;
  int num_layers = 2;

  int Sos() const { return vocab; }
  int Eos() const { return vocab; }
  int Classes() const { return vocab + 1; }
  void Validate() const;
};

/// `memories` is the number of encoder sequences each layer attends to in
/// turn (2 for the tm_seq variant, else 1). memories = 0 builds an LM.
void InitDecoder(nn::ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg,
                 int memories, nn::Rng& rng);

struct Memory {
  nn::Var seq;
  int64_t valid = 0;
};

/// Teacher-forced logits [tokens.size(), Classes()] for the input tokens
/// (which normally start with sos). Position t only sees inputs <= t.
nn::Var DecoderLogits(nn::Graph& g, const std::string& prefix, const DecoderConfig& cfg,
                      std::span<const int> tokens, const std::vector<Memory>& memories);

/// [sos] + target.
std::vector<int> WithSos(const DecoderConfig& cfg, std::span<const int> target);
/// target + [eos].
std::vector<int> WithEos(const DecoderConfig& cfg, std::span<const int> target);

/// Teacher-forced negative log-likelihood of target + eos, summed over
/// steps, with label smoothing. Empty target throws DegenerateInputError.
nn::Var AttentionNll(nn::Graph& g, const std::string& prefix, const DecoderConfig& cfg,
                     std::span<const int> target, const std::vector<Memory>& memories,
                     double smoothing);

/// Log-probabilities over Classes() for the token after `prefix`
/// (prefix excludes sos).
std::vector<double> NextLogProbs(nn::Graph& g, const std::string& prefix_name,
                                 const DecoderConfig& cfg, std::span<const int> prefix,
                                 const std::vector<Memory>& memories);

/// Language-model log P(tokens + eos). Empty tokens throw.
double LmScore(const nn::ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg,
               std::span<const int> tokens);

}  // namespace avsr::decoder

#endif  // AVSR_DECODER_H_

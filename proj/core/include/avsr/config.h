// avsr/config.h

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

#ifndef AVSR_CONFIG_H_
#define AVSR_CONFIG_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avsr/corpus.h"
#include "avsr/decoding.h"
#include "avsr/model.h"
#include "avsr/training.h"

namespace avsr {

struct GmmConfig {
  int iters = 10;
  std::vector<int> mix_schedule;  // empty: 1 -> 2 -> 4 over thirds
  double var_floor = 1e-3;
};

/// Everything one run directory is built from. Serialised as a single JSON
/// document with sections corpus, gmm, model, train, decode.
struct ExperimentConfig {
  std::string preset = "desk";
  uint64_t seed = 1;
  corpus::CorpusSpec corpus;
  GmmConfig gmm;
  model::ModelConfig model;
  training::TrainConfig train_audio, train_video, train_fusion, train_lm;
  training::FusionInit fusion_init = training::FusionInit::kBoth;
  decoding::DecodeOptions decode;
  bool decode_use_lm = true;

  bool PaperScale() const { return preset == "paper-scale-validate"; }
  /// Copies corpus-derived sizes (vocab, senones, feature/frame dims) and
  /// the seed into the model and train sections.
  void Resolve();
  void Validate() const;
  std::string ToJson() const;
  /// FNV-1a 64 of the canonical JSON, as 16 hex digits.
  std::string Hash() const;
  const training::TrainConfig& Train(training::Stage s) const;
};

/// "desk" or "paper-scale-validate".
ExperimentConfig PresetConfig(const std::string& preset);

/// Overlays `json_text` on the preset. Keys not present in the preset's
/// JSON form are errors, as are type mismatches.
ExperimentConfig ConfigFromJson(const std::string& json_text, const std::string& preset);

/// Applies overrides of the form AVSR__<section>__<key>=<value>, where
/// nested keys continue with "__" and the value is parsed as JSON when
/// possible, else taken as a string.
ExperimentConfig ApplyOverrides(const ExperimentConfig& cfg,
                                const std::map<std::string, std::string>& env);
/// AVSR__* variables from the process environment.
std::map<std::string, std::string> EnvOverrides();

inline constexpr char kEnvPrefix[] = "AVSR__";

}  // namespace avsr

#endif  // AVSR_CONFIG_H_

// avsr/corpus.h

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

#ifndef AVSR_CORPUS_H_
#define AVSR_CORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "avsr/nn/autograd.h"
#include "avsr/nn/tensor.h"

namespace avsr::corpus {

inline constexpr int kStatesPerUnit = 3;
inline constexpr int kAudioFps = 100;
inline constexpr int kVideoFps = 25;
inline constexpr int kRateRatio = kAudioFps / kVideoFps;

/// Parameters of the synthetic audio-visual corpus.
struct CorpusSpec {
  int num_units = 8;
  int feature_dim = 80;
  int video_height = 32;
  int video_width = 32;
  int audio_fps = kAudioFps;
  int video_fps = kVideoFps;
  int num_utterances = 100;
  double test_fraction = 0.2;
  int min_units = 2;         // utterance length range, in units
  int max_units = 5;
  int min_duration = 12;     // audio frames per unit, multiples of 4
  int max_duration = 20;
  double noise_std = 0.1;
  double video_noise_std = -1.0;  // < 0 means "same as noise_std"
  /// Fraction of units whose audio template is shared with a partner unit,
  /// so only the visual template tells them apart.
  double visual_informativeness = 0.0;
  uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void Validate() const;
  double EffectiveVideoNoise() const {
    return video_noise_std < 0 ? noise_std : video_noise_std;
  }
  int NumSenones() const { return num_units * kStatesPerUnit; }
};

/// T x D acoustic frames at 100 frames/sec.
struct FeatureSequence {
  nn::Tensor frames;
  int64_t num_frames() const { return frames.ndim() ? frames.dim(0) : 0; }
  int64_t dim() const { return frames.ndim() ? frames.dim(1) : 0; }
};

/// T_v x H x W grey-scale frames in [0,1] at 25 frames/sec.
struct VideoSequence {
  nn::Tensor frames;
  int64_t num_frames() const { return frames.ndim() ? frames.dim(0) : 0; }
};

struct Utterance {
  std::string id;
  std::string split;  // "train" or "test"
  FeatureSequence audio;
  VideoSequence video;
  std::vector<int> transcript;
  /// Ground-truth senone (unit * 3 + state) per audio frame.
  std::vector<int> gold_states;
};

/// Per-(unit, state) generator patterns.
struct Templates {
  nn::Tensor audio;   // [U, 3, D]
  nn::Tensor visual;  // [U, 3, H, W]
  /// audio_source[u] is the unit whose audio template u reuses (u itself
  /// unless the unit belongs to a visually disambiguated pair).
  std::vector<int> audio_source;
};

struct Corpus {
  CorpusSpec spec;
  Templates templates;
  std::vector<Utterance> utterances;

  std::vector<const Utterance*> Split(const std::string& name) const;
  const Utterance& Find(const std::string& id) const;
};

Templates MakeTemplates(const CorpusSpec& spec, nn::Rng& rng);

/// Renders one utterance from explicit unit ids and per-unit durations.
Utterance SynthesizeUtterance(const CorpusSpec& spec, const Templates& templates,
                              const std::vector<int>& units,
                              const std::vector<int>& durations, nn::Rng& rng);

/// Pure function of `spec`: identical specs give byte-identical corpora.
Corpus GenerateCorpus(const CorpusSpec& spec);

/// Per-dimension zero mean / unit variance over the utterance.
/// Throws DegenerateInputError for fewer than two frames.
FeatureSequence NormalizeUtterance(const FeatureSequence& f, double var_floor = 1e-8);

struct SpecAugmentPolicy {
  int num_freq_masks = 2;
  int min_freq_width = 0;
  int max_freq_width = 10;
  int num_time_masks = 2;
  double max_time_ratio = 0.05;  // time mask width <= ratio * T
};

/// Zeroes random frequency bands and time spans; widths wider than the
/// axis are clipped. Shape is preserved.
FeatureSequence SpecAugment(const FeatureSequence& f, const SpecAugmentPolicy& policy,
                            nn::Rng& rng);

// --- persistence -----------------------------------------------------------

/// Writes manifest.txt, gold_align.txt, templates.nac and utts/<id>.nac
/// under `dir`.
void WriteCorpus(const Corpus& corpus, const std::string& dir, const std::string& config_hash);
Corpus ReadCorpus(const std::string& dir);

std::string CorpusSpecToJson(const CorpusSpec& spec);
CorpusSpec CorpusSpecFromJson(const std::string& json);

/// `<utt-id> <state-id>*T` lines; '#' lines carry metadata.
void WriteAlignmentText(const std::string& path,
                        const std::vector<std::pair<std::string, std::vector<int>>>& rows,
                        const std::string& config_hash);
std::vector<std::pair<std::string, std::vector<int>>> ReadAlignmentText(
    const std::string& path, std::string* config_hash = nullptr);

/// Reads `config_hash=<hex>` from the first header line of a text artifact.
std::string ReadHeaderHash(const std::string& path);

}  // namespace avsr::corpus

#endif  // AVSR_CORPUS_H_

// avsr/pipeline.h

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

#ifndef AVSR_PIPELINE_H_
#define AVSR_PIPELINE_H_

#include <filesystem>
#include <string>
#include <vector>

#include "avsr/config.h"
#include "avsr/decoding.h"
#include "avsr/gmm_hmm.h"
#include "avsr/training.h"

// Recipe stages over a run directory:
//
//   <run>/config.json          resolved experiment config
//   <run>/data/                corpus (manifest.txt, gold_align.txt, utts/)
//   <run>/gmm/                 model.nac, em.jsonl
//   <run>/align/               train.ali, test.ali, report.json
//   <run>/audio/ video/ lm/    model.nac, model.json, metrics.jsonl
//   <run>/fusion/<init>/       same, one directory per initialisation mode
//   <run>/decode/<system>.hyp
//   <run>/eval/<system>.json
//   <run>/plots/
//
// Every artifact records the config hash; stages refuse inputs produced by
// a different config.

namespace avsr::pipeline {

class RunDir {
 public:
  explicit RunDir(std::filesystem::path root) : root_(std::move(root)) {}
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path operator/(const std::string& rel) const { return root_ / rel; }
  std::filesystem::path Data() const { return root_ / "data"; }
  std::filesystem::path Gmm() const { return root_ / "gmm"; }
  std::filesystem::path Align() const { return root_ / "align"; }
  /// Directory of a trained network: "audio", "video", "lm" or
  /// "fusion/<init>".
  std::filesystem::path Model(const std::string& name) const { return root_ / name; }

 private:
  std::filesystem::path root_;
};

/// Creates the run directory and writes config.json, or checks that an
/// existing one carries the same config hash.
void InitRunDir(const ExperimentConfig& cfg, const RunDir& run);

void MakeData(const ExperimentConfig& cfg, const RunDir& run);

struct GmmSummary {
  std::vector<double> objective;
  std::vector<int> components;
};
GmmSummary TrainGmm(const ExperimentConfig& cfg, const RunDir& run);

struct AlignSummary {
  gmmhmm::BoundaryStats boundaries;  // against gold, tolerance 2 frames
  int utterances = 0;
};
AlignSummary AlignCorpus(const ExperimentConfig& cfg, const RunDir& run);

/// "audio", "video" or "lm".
std::string StageDir(training::Stage s, training::FusionInit init);

/// Trains one stage and writes its checkpoint and metrics log.
training::StageResult Train(const ExperimentConfig& cfg, const RunDir& run, training::Stage stage,
                            training::FusionInit init);

/// Decodes the test split with a trained ASR model. `system` is "audio" or
/// "fusion/<init>". Returns the hypothesis file path.
std::filesystem::path Decode(const ExperimentConfig& cfg, const RunDir& run,
                             const std::string& system);

/// Combines hypothesis files utterance by utterance.
void RoverFiles(const std::vector<std::filesystem::path>& inputs,
                const std::filesystem::path& output);

/// Scores a hypothesis file against the test references. A hash mismatch
/// throws unless `force`. Writes the JSON report to `report_path` when not
/// empty.
decoding::CerReport Eval(const ExperimentConfig& cfg, const RunDir& run,
                         const std::filesystem::path& hyp_path,
                         const std::filesystem::path& report_path, bool force);

/// PCA scatter of visual frontend embeddings (one point per video frame,
/// coloured by the gold senone at the frame centre). `model` names the
/// checkpoint directory ("video" or "fusion/<init>").
std::filesystem::path InspectEmbeddings(const ExperimentConfig& cfg, const RunDir& run,
                                        const std::string& model, int max_utterances,
                                        const std::filesystem::path& output);

struct RecipeResult {
  decoding::CerReport audio;
  decoding::CerReport fusion;
};
/// make-data through eval for the audio-only and the configured fusion model.
RecipeResult RunRecipe(const ExperimentConfig& cfg, const RunDir& run);

/// "<system>" with '/' replaced by '-', used for decode/eval file names.
std::string SystemFileStem(const std::string& system);

}  // namespace avsr::pipeline

#endif  // AVSR_PIPELINE_H_

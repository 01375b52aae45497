// avsr/training.h

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

#ifndef AVSR_TRAINING_H_
#define AVSR_TRAINING_H_

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "avsr/corpus.h"
#include "avsr/model.h"
#include "avsr/nn/autograd.h"

namespace avsr::training {

struct TrainConfig {
  double lambda_ctc = 0.3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double peak_lr = 6e-4;
  int warmup_steps = 6000;
  int epochs = 10;
  int batch_size = 8;
  uint64_t seed = 1;
  double grad_clip = 5.0;
  double label_smoothing = 0.1;
  bool spec_augment = true;
  corpus::SpecAugmentPolicy spec_augment_policy;

  void Validate() const;
};

// --- losses --------------------------------------------------------------

/// Negated hybrid objective: -(lambda log P_ctc + (1 - lambda) log P_att).
double JointLoss(double logp_ctc, double logp_att, double lambda);
/// Same on negative log-likelihood graph values.
nn::Var JointLoss(const nn::Var& ctc_nll, const nn::Var& att_nll, double lambda);

/// Frame-level senone cross entropy, summed over frames. The logit and
/// label lengths must agree.
nn::Var VisualPretrainLoss(const nn::Var& frame_logits, std::span<const int> labels);

// --- optimisation --------------------------------------------------------

/// Linear warm-up to peak_lr at warmup_steps, then inverse square-root decay.
/// step must be >= 1.
double LrAt(int64_t step, const TrainConfig& cfg);

/// Rescales all gradients so that their global L2 norm is at most max_norm;
/// returns the norm before clipping.
double ClipGradNorm(nn::GradientMap& grads, double max_norm);

class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  /// Updates every parameter that has a gradient. Parameters are visited in
  /// name order.
  void Step(nn::ParamStore& params, const nn::GradientMap& grads, double lr);
  int64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, nn::Tensor> m_, v_;
};

// --- pre-trained initialisation ------------------------------------------

enum class FusionInit { kBoth, kAudio, kNone };
const char* FusionInitName(FusionInit m);
FusionInit ParseFusionInit(const std::string& s);

struct CheckpointAudit {
  struct Entry {
    std::string target;
    std::string source;       // parameter name in the source checkpoint
    std::string source_model; // "audio_only" or "video_pretrain"
  };
  std::vector<Entry> mapped;
  std::vector<std::string> fresh;

  /// Block-level summary: distinct groups (e.g. "audio frontend") of mapped
  /// parameters.
  std::vector<std::string> MappedGroups() const;
  std::vector<std::string> FreshGroups() const;
};

/// Human-readable group of a fusion-model parameter name.
std::string ParamGroup(const std::string& name);

/// Copies pre-trained parameters into a freshly initialised fusion model.
/// Audio frontend and audio conformer stack come from `audio`; visual
/// frontend and the first N_vblock visual conformer blocks from `video`.
/// Everything else stays at its random initialisation and is listed as
/// fresh. Missing or mis-shaped source tensors throw TrainingError listing
/// every unmapped name.
CheckpointAudit ApplyFusionInit(nn::ParamStore& fusion, const model::ModelConfig& cfg,
                                FusionInit mode, const nn::ParamStore* audio,
                                const nn::ParamStore* video);

// --- stage runner ---------------------------------------------------------

enum class Stage { kPretrainAudio, kPretrainVideo, kFinetuneFusion, kTrainLm };
const char* StageName(Stage s);

struct MetricsRecord {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::map<std::string, double> components;
};

std::string MetricsToJsonLine(const MetricsRecord& r);

struct StageInputs {
  Stage stage = Stage::kPretrainAudio;
  model::ModelConfig model;
  TrainConfig train;
  std::vector<const corpus::Utterance*> data;
  /// pretrain_video: frame labels per utterance id (forced alignment).
  const std::map<std::string, std::vector<int>>* labels = nullptr;
  /// Starting parameters; when empty the stage initialises its own model
  /// from train.seed.
  nn::ParamStore init;
};

struct StageResult {
  nn::ParamStore params;
  std::vector<MetricsRecord> metrics;
  int64_t steps = 0;
};

/// Deterministic given inputs: fixed batch order from train.seed, fixed
/// reduction order of per-utterance gradients.
/// `on_step` (optional) sees each record as it is produced.
StageResult RunStage(const StageInputs& in,
                     const std::function<void(const MetricsRecord&)>& on_step = nullptr);

/// Fresh parameters for a stage's model.
nn::ParamStore InitStageModel(Stage stage, const model::ModelConfig& cfg, uint64_t seed);

/// Per-utterance loss graph for one stage; `rng` drives augmentation.
struct ItemLoss {
  nn::Var loss;
  std::map<std::string, double> components;
};
ItemLoss ComputeItemLoss(nn::Graph& g, const StageInputs& in, const corpus::Utterance& utt,
                         nn::Rng* augment_rng);

/// Normalised (and optionally augmented) features of an utterance.
nn::Tensor PrepareFeatures(const corpus::Utterance& utt, const TrainConfig* train,
                           nn::Rng* augment_rng);

// --- checkpoints ----------------------------------------------------------

struct CheckpointMeta {
  std::string stage;
  int64_t step = 0;
  std::string config_hash;
  std::string model_kind;
  CheckpointAudit audit;
};

/// Writes `<path>.nac` and `<path>.json`.
void SaveCheckpoint(const std::string& path, const nn::ParamStore& params,
                    const CheckpointMeta& meta);
/// Reads `<path>.nac`; throws IoError when absent.
nn::ParamStore LoadCheckpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace avsr::training

#endif  // AVSR_TRAINING_H_

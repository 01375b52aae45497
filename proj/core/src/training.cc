// training.cc

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

#include "avsr/training.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <glog/logging.h>
#include <nlohmann/json.hpp>

#include "avsr/array_store.h"
#include "avsr/error.h"
#include "avsr/nn/ops.h"

namespace avsr::training {
namespace {

using ojson = nlohmann::ordered_json;

bool StartsWith(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

// Index of the block in names like "visual.enc.<i>.<rest>", or -1.
int BlockIndex(const std::string& name, const std::string& stack) {
  if (!StartsWith(name, stack)) return -1;
  const size_t end = name.find('.', stack.size());
  return std::stoi(name.substr(stack.size(), end - stack.size()));
}

uint64_t StageSalt(Stage s) { return 0x9E3779B97F4A7C15ULL * (static_cast<uint64_t>(s) + 1); }

}  // namespace

void TrainConfig::Validate() const {
  if (lambda_ctc < 0.0 || lambda_ctc > 1.0)
    throw ConfigError("train: lambda_ctc must lie in [0, 1], got " + std::to_string(lambda_ctc));
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("train: adam betas must lie in [0, 1)");
  if (peak_lr <= 0.0) throw ConfigError("train: peak_lr must be positive");
  if (warmup_steps < 1) throw ConfigError("train: warmup_steps must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (grad_clip <= 0.0) throw ConfigError("train: grad_clip must be positive");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ConfigError("train: label_smoothing must lie in [0, 1)");
}

double JointLoss(double logp_ctc, double logp_att, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("joint loss: lambda outside [0, 1]");
  return -(lambda * logp_ctc + (1.0 - lambda) * logp_att);
}

nn::Var JointLoss(const nn::Var& ctc_nll, const nn::Var& att_nll, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("joint loss: lambda outside [0, 1]");
  return nn::Add(nn::Scale(ctc_nll, lambda), nn::Scale(att_nll, 1.0 - lambda));
}

nn::Var VisualPretrainLoss(const nn::Var& frame_logits, std::span<const int> labels) {
  if (frame_logits.rows() != static_cast<int64_t>(labels.size()))
    throw ConfigError("visual pre-training loss: " + std::to_string(frame_logits.rows()) +
                      " upsampled frames vs " + std::to_string(labels.size()) +
                      " alignment labels");
  return nn::CrossEntropy(frame_logits, labels, 0.0);
}

double LrAt(int64_t step, const TrainConfig& cfg) {
  if (step < 1) throw ConfigError("lr_at: step must be >= 1, got " + std::to_string(step));
  const double s = static_cast<double>(step), w = static_cast<double>(cfg.warmup_steps);
  if (step <= cfg.warmup_steps) return cfg.peak_lr * s / w;
  return cfg.peak_lr * std::sqrt(w / s);
}

double ClipGradNorm(nn::GradientMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.span()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& v : g.span()) v *= scale;
  }
  return norm;
}

void Adam::Step(nn::ParamStore& params, const nn::GradientMap& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    nn::Tensor& p = params.Mutable(name);
    auto [mit, m_new] = m_.try_emplace(name, g.shape());
    auto [vit, v_new] = v_.try_emplace(name, g.shape());
    double* m = mit->second.data();
    double* v = vit->second.data();
    double* w = p.data();
    const double* gd = g.data();
    for (int64_t i = 0; i < g.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gd[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gd[i] * gd[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

const char* FusionInitName(FusionInit m) {
  switch (m) {
    case FusionInit::kBoth: return "both";
    case FusionInit::kAudio: return "audio";
    case FusionInit::kNone: return "none";
  }
  return "?";
}

FusionInit ParseFusionInit(const std::string& s) {
  for (auto m : {FusionInit::kBoth, FusionInit::kAudio, FusionInit::kNone})
    if (s == FusionInitName(m)) return m;
  throw ConfigError("unknown fusion init '" + s + "' (both, audio, none)");
}

std::string ParamGroup(const std::string& name) {
  static const std::vector<std::pair<std::string, std::string>> kGroups = {
      {"audio.enc.", "audio conformer stack"},
      {"audio.", "audio frontend"},
      {"visual.enc.", "visual conformer blocks"},
      {"visual.", "visual frontend"},
      {"upsampler.", "upsampler"},
      {"fusion.xattn.", "cross-attention"},
      {"fusion.v2a.", "cross-attention"},
      {"fusion.a2v.", "cross-attention"},
      {"fusion.memory.", "visual memory projection"},
      {"fusion.vproj.", "visual projection"},
      {"ctc.", "ctc head"},
      {"decoder.", "attention decoder"},
      {"senone.", "senone head"},
      {"lm.", "language model"},
  };
  for (const auto& [p, g] : kGroups)
    if (StartsWith(name, p)) return g;
  return "other";
}

namespace {
std::vector<std::string> Groups(const std::vector<std::string>& names) {
  std::set<std::string> s;
  for (const auto& n : names) s.insert(ParamGroup(n));
  return {s.begin(), s.end()};
}
}  // namespace

std::vector<std::string> CheckpointAudit::MappedGroups() const {
  std::vector<std::string> names;
  for (const auto& e : mapped) names.push_back(e.target);
  return Groups(names);
}

std::vector<std::string> CheckpointAudit::FreshGroups() const { return Groups(fresh); }

CheckpointAudit ApplyFusionInit(nn::ParamStore& fusion, const model::ModelConfig& cfg,
                                FusionInit mode, const nn::ParamStore* audio,
                                const nn::ParamStore* video) {
  const bool use_audio = mode != FusionInit::kNone;
  const bool use_video = mode == FusionInit::kBoth;
  if (use_audio && audio == nullptr)
    throw TrainingError("fusion init '" + std::string(FusionInitName(mode)) +
                        "' needs the audio-only checkpoint (run pretrain-audio first)");
  if (use_video && video == nullptr)
    throw TrainingError("fusion init 'both' needs the video pre-training checkpoint "
                        "(run pretrain-video first)");
  CheckpointAudit audit;
  std::vector<std::string> gaps;
  for (auto& [name, value] : fusion.mutable_items()) {
    const nn::ParamStore* src = nullptr;
    const char* src_model = "";
    if (use_audio && StartsWith(name, "audio.")) {
      src = audio;
      src_model = model::ModelKindName(model::ModelKind::kAudioOnly);
    } else if (use_video && StartsWith(name, "visual.")) {
      const int block = BlockIndex(name, "visual.enc.");
      if (block < cfg.fusion.n_vblock) {
        src = video;
        src_model = model::ModelKindName(model::ModelKind::kVideoPretrain);
      }
    }
    if (src == nullptr) {
      audit.fresh.push_back(name);
      continue;
    }
    if (!src->Contains(name) || !nn::SameShape(src->Get(name), value)) {
      gaps.push_back(name);
      continue;
    }
    value = src->Get(name);
    audit.mapped.push_back({name, name, src_model});
  }
  if (!gaps.empty()) {
    std::string msg = "fusion init: " + std::to_string(gaps.size()) +
                      " parameters have no matching pre-trained tensor:";
    for (const auto& n : gaps) msg += " " + n;
    throw TrainingError(msg);
  }
  return audit;
}

const char* StageName(Stage s) {
  switch (s) {
    case Stage::kPretrainAudio: return "pretrain_audio";
    case Stage::kPretrainVideo: return "pretrain_video";
    case Stage::kFinetuneFusion: return "finetune_fusion";
    case Stage::kTrainLm: return "train_lm";
  }
  return "?";
}

std::string MetricsToJsonLine(const MetricsRecord& r) {
  ojson j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["loss"] = r.loss;
  j["components"] = ojson::object();
  for (const auto& [k, v] : r.components) j["components"][k] = v;
  return j.dump();
}

nn::ParamStore InitStageModel(Stage stage, const model::ModelConfig& cfg, uint64_t seed) {
  nn::ParamStore ps;
  nn::Rng rng(seed ^ StageSalt(stage));
  switch (stage) {
    case Stage::kPretrainAudio: model::InitAudioOnlyModel(ps, cfg, rng); break;
    case Stage::kPretrainVideo: model::InitVideoPretrainModel(ps, cfg, rng); break;
    case Stage::kFinetuneFusion: model::InitFusionModel(ps, cfg, rng); break;
    case Stage::kTrainLm: model::InitLanguageModel(ps, cfg, rng); break;
  }
  return ps;
}

nn::Tensor PrepareFeatures(const corpus::Utterance& utt, const TrainConfig* train,
                           nn::Rng* augment_rng) {
  corpus::FeatureSequence f = corpus::NormalizeUtterance(utt.audio);
  if (train != nullptr && train->spec_augment && augment_rng != nullptr)
    f = corpus::SpecAugment(f, train->spec_augment_policy, *augment_rng);
  return std::move(f.frames);
}

ItemLoss ComputeItemLoss(nn::Graph& g, const StageInputs& in, const corpus::Utterance& utt,
                         nn::Rng* augment_rng) {
  const model::ModelConfig& mc = in.model;
  ItemLoss out;
  switch (in.stage) {
    case Stage::kPretrainAudio:
    case Stage::kFinetuneFusion: {
      const nn::Tensor feats = PrepareFeatures(utt, &in.train, augment_rng);
      const int64_t t = feats.dim(0);
      model::AsrForward f =
          in.stage == Stage::kPretrainAudio
              ? model::EncodeAudioOnly(g, mc, feats, t)
              : model::EncodeFusion(g, mc, feats, t, utt.video.frames, utt.video.num_frames());
      nn::Var ctc = nn::CtcLoss(f.ctc_logits, utt.transcript, mc.vocab);
      nn::Var att = decoder::AttentionNll(g, model::kDecoderPrefix, mc.Decoder(), utt.transcript,
                                          f.memories, in.train.label_smoothing);
      out.loss = JointLoss(ctc, att, in.train.lambda_ctc);
      out.components["ctc"] = ctc.value()[0];
      out.components["att"] = att.value()[0];
      break;
    }
    case Stage::kPretrainVideo: {
      if (in.labels == nullptr) throw TrainingError("pretrain_video: no alignment labels given");
      auto it = in.labels->find(utt.id);
      if (it == in.labels->end())
        throw TrainingError("pretrain_video: no alignment for utterance " + utt.id);
      nn::Var logits = model::VideoFrameLogits(g, mc, utt.video.frames, utt.video.num_frames());
      out.loss = VisualPretrainLoss(logits, it->second);
      out.components["ce"] = out.loss.value()[0];
      break;
    }
    case Stage::kTrainLm: {
      out.loss = decoder::AttentionNll(g, model::kLmPrefix, mc.Lm(), utt.transcript, {},
                                       in.train.label_smoothing);
      out.components["nll"] = out.loss.value()[0];
      break;
    }
  }
  return out;
}

StageResult RunStage(const StageInputs& in,
                     const std::function<void(const MetricsRecord&)>& on_step) {
  in.train.Validate();
  in.model.Validate(false);
  StageResult res;
  res.params = in.init.size() ? in.init : InitStageModel(in.stage, in.model, in.train.seed);
  if (in.data.empty()) throw TrainingError(std::string(StageName(in.stage)) + ": no training data");

  // Length-sorted buckets of batch_size items; bucket order is shuffled
  // each epoch.
  std::vector<const corpus::Utterance*> sorted = in.data;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    if (a->audio.num_frames() != b->audio.num_frames())
      return a->audio.num_frames() < b->audio.num_frames();
    return a->id < b->id;
  });
  std::vector<std::vector<const corpus::Utterance*>> batches;
  for (size_t i = 0; i < sorted.size(); i += in.train.batch_size)
    batches.emplace_back(sorted.begin() + i,
                         sorted.begin() + std::min(sorted.size(), i + in.train.batch_size));

  nn::Rng order_rng(in.train.seed ^ StageSalt(in.stage) ^ 0xA5A5A5A5ULL);
  nn::Rng augment_rng(in.train.seed ^ StageSalt(in.stage) ^ 0x5A5A5A5AULL);
  Adam adam(in.train.beta1, in.train.beta2, in.train.adam_eps);

  for (int epoch = 0; epoch < in.train.epochs; ++epoch) {
    std::vector<size_t> order(batches.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);
    for (size_t b : order) {
      const auto& batch = batches[b];
      const double scale = 1.0 / static_cast<double>(batch.size());
      nn::GradientMap grads;
      MetricsRecord rec;
      for (const corpus::Utterance* utt : batch) {
        nn::Graph g(res.params, true);
        ItemLoss il = ComputeItemLoss(g, in, *utt, &augment_rng);
        if (!std::isfinite(il.loss.value()[0]))
          throw TrainingError(std::string(StageName(in.stage)) + ": non-finite loss on " + utt->id);
        nn::Backward(il.loss);
        g.AccumulateGradients(grads, scale);
        rec.loss += scale * il.loss.value()[0];
        for (const auto& [k, v] : il.components) rec.components[k] += scale * v;
      }
      rec.components["grad_norm"] = ClipGradNorm(grads, in.train.grad_clip);
      rec.step = ++res.steps;
      rec.lr = LrAt(rec.step, in.train);
      adam.Step(res.params, grads, rec.lr);
      if (on_step) on_step(rec);
      res.metrics.push_back(std::move(rec));
    }
    VLOG(1) << StageName(in.stage) << " epoch " << epoch + 1 << " done, step " << res.steps;
  }
  return res;
}

void SaveCheckpoint(const std::string& path, const nn::ParamStore& params,
                    const CheckpointMeta& meta) {
  ArrayStore store = ParamsToStore(params);
  store.PutString("meta.stage", meta.stage);
  store.PutString("meta.config_hash", meta.config_hash);
  store.PutString("meta.model_kind", meta.model_kind);
  store.Save(path + ".nac");

  ojson j;
  j["stage"] = meta.stage;
  j["step"] = meta.step;
  j["config_hash"] = meta.config_hash;
  j["model_kind"] = meta.model_kind;
  j["num_parameters"] = params.NumParameters();
  ojson audit;
  audit["mapped_groups"] = meta.audit.MappedGroups();
  audit["fresh_groups"] = meta.audit.FreshGroups();
  audit["mapped"] = ojson::array();
  for (const auto& e : meta.audit.mapped)
    audit["mapped"].push_back({{"target", e.target}, {"source", e.source},
                               {"source_model", e.source_model}});
  audit["fresh"] = meta.audit.fresh;
  j["checkpoint_map"] = audit;
  std::ofstream os(path + ".json");
  if (!os) throw IoError("cannot write " + path + ".json");
  os << j.dump(2) << "\n";
}

nn::ParamStore LoadCheckpoint(const std::string& path, CheckpointMeta* meta) {
  if (!std::filesystem::exists(path + ".nac"))
    throw IoError("missing checkpoint " + path + ".nac");
  ArrayStore store = ArrayStore::Load(path + ".nac");
  if (meta != nullptr) {
    meta->stage = store.Contains("meta.stage") ? store.GetString("meta.stage") : "";
    meta->config_hash =
        store.Contains("meta.config_hash") ? store.GetString("meta.config_hash") : "";
    meta->model_kind = store.Contains("meta.model_kind") ? store.GetString("meta.model_kind") : "";
    std::ifstream is(path + ".json");
    if (is) {
      ojson j = ojson::parse(is, nullptr, false);
      if (!j.is_discarded() && j.contains("step")) meta->step = j["step"].get<int64_t>();
    }
  }
  return StoreToParams(store);
}

}  // namespace avsr::training

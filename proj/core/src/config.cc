// config.cc

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

#include "avsr/config.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <nlohmann/json.hpp>

#include "avsr/error.h"

extern char** environ;

namespace avsr {
namespace {

using json = nlohmann::json;

json TrainToJson(const training::TrainConfig& t) {
  const corpus::SpecAugmentPolicy& p = t.spec_augment_policy;
  return json{{"lambda_ctc", t.lambda_ctc},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"adam_eps", t.adam_eps},
              {"peak_lr", t.peak_lr},
              {"warmup_steps", t.warmup_steps},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"grad_clip", t.grad_clip},
              {"label_smoothing", t.label_smoothing},
              {"spec_augment", t.spec_augment},
              {"spec_augment_policy",
               {{"num_freq_masks", p.num_freq_masks},
                {"min_freq_width", p.min_freq_width},
                {"max_freq_width", p.max_freq_width},
                {"num_time_masks", p.num_time_masks},
                {"max_time_ratio", p.max_time_ratio}}}};
}

training::TrainConfig TrainFromJson(const json& j) {
  training::TrainConfig t;
  t.lambda_ctc = j.at("lambda_ctc");
  t.beta1 = j.at("beta1");
  t.beta2 = j.at("beta2");
  t.adam_eps = j.at("adam_eps");
  t.peak_lr = j.at("peak_lr");
  t.warmup_steps = j.at("warmup_steps");
  t.epochs = j.at("epochs");
  t.batch_size = j.at("batch_size");
  t.grad_clip = j.at("grad_clip");
  t.label_smoothing = j.at("label_smoothing");
  t.spec_augment = j.at("spec_augment");
  const json& p = j.at("spec_augment_policy");
  t.spec_augment_policy.num_freq_masks = p.at("num_freq_masks");
  t.spec_augment_policy.min_freq_width = p.at("min_freq_width");
  t.spec_augment_policy.max_freq_width = p.at("max_freq_width");
  t.spec_augment_policy.num_time_masks = p.at("num_time_masks");
  t.spec_augment_policy.max_time_ratio = p.at("max_time_ratio");
  return t;
}

json ToJsonValue(const ExperimentConfig& c) {
  const model::ModelConfig& m = c.model;
  json j;
  j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["corpus"] = json::parse(corpus::CorpusSpecToJson(c.corpus));
  j["gmm"] = {{"iters", c.gmm.iters}, {"mix_schedule", c.gmm.mix_schedule},
              {"var_floor", c.gmm.var_floor}};
  j["model"] = {{"d_model", m.conformer.d_model},
                {"n_head", m.conformer.n_head},
                {"d_ffn", m.conformer.d_ffn},
                {"conv_kernel", m.conformer.conv_kernel},
                {"audio_channels", m.audio_frontend.channels},
                {"visual_stem_channels", m.visual_frontend.stem_channels},
                {"visual_block_channels", m.visual_frontend.block_channels},
                {"video_pretrain_blocks", m.video_pretrain_blocks},
                {"decoder_layers", m.decoder_layers},
                {"lm_layers", m.lm_layers},
                {"fusion",
                 {{"variant", encoder::VariantName(m.fusion.variant)},
                  {"N", m.fusion.n_early},
                  {"M", m.fusion.m_late},
                  {"insert", encoder::InsertionName(m.fusion.insert)},
                  {"N_vblock", m.fusion.n_vblock}}}};
  j["train"] = {{"audio", TrainToJson(c.train_audio)},
                {"video", TrainToJson(c.train_video)},
                {"fusion", TrainToJson(c.train_fusion)},
                {"lm", TrainToJson(c.train_lm)},
                {"fusion_init", training::FusionInitName(c.fusion_init)}};
  j["decode"] = {{"beam", c.decode.beam},         {"ctc_weight", c.decode.ctc_weight},
                 {"lm_weight", c.decode.lm_weight}, {"max_len", c.decode.max_len},
                 {"nbest", c.decode.nbest},       {"use_lm", c.decode_use_lm}};
  return j;
}

ExperimentConfig FromJsonValue(const json& j) {
  ExperimentConfig c;
  c.preset = j.at("preset");
  c.seed = j.at("seed");
  c.corpus = corpus::CorpusSpecFromJson(j.at("corpus").dump());
  const json& g = j.at("gmm");
  c.gmm.iters = g.at("iters");
  c.gmm.mix_schedule = g.at("mix_schedule").get<std::vector<int>>();
  c.gmm.var_floor = g.at("var_floor");
  const json& m = j.at("model");
  c.model.conformer.d_model = m.at("d_model");
  c.model.conformer.n_head = m.at("n_head");
  c.model.conformer.d_ffn = m.at("d_ffn");
  c.model.conformer.conv_kernel = m.at("conv_kernel");
  c.model.audio_frontend.channels = m.at("audio_channels");
  c.model.visual_frontend.stem_channels = m.at("visual_stem_channels");
  c.model.visual_frontend.block_channels = m.at("visual_block_channels").get<std::vector<int>>();
  c.model.video_pretrain_blocks = m.at("video_pretrain_blocks");
  c.model.decoder_layers = m.at("decoder_layers");
  c.model.lm_layers = m.at("lm_layers");
  const json& f = m.at("fusion");
  c.model.fusion.variant = encoder::ParseVariant(f.at("variant"));
  c.model.fusion.n_early = f.at("N");
  c.model.fusion.m_late = f.at("M");
  c.model.fusion.insert = encoder::ParseInsertion(f.at("insert"));
  c.model.fusion.n_vblock = f.at("N_vblock");
  const json& t = j.at("train");
  c.train_audio = TrainFromJson(t.at("audio"));
  c.train_video = TrainFromJson(t.at("video"));
  c.train_fusion = TrainFromJson(t.at("fusion"));
  c.train_lm = TrainFromJson(t.at("lm"));
  c.fusion_init = training::ParseFusionInit(t.at("fusion_init"));
  const json& d = j.at("decode");
  c.decode.beam = d.at("beam");
  c.decode.ctc_weight = d.at("ctc_weight");
  c.decode.lm_weight = d.at("lm_weight");
  c.decode.max_len = d.at("max_len");
  c.decode.nbest = d.at("nbest");
  c.decode_use_lm = d.at("use_lm");
  c.Resolve();
  return c;
}

std::string TypeName(const json& v) {
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  return v.type_name();
}

// Overlays `over` onto `base`, refusing keys the base does not have.
void Merge(json& base, const json& over, const std::string& path) {
  if (!over.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    json& b = base[it.key()];
    const json& o = it.value();
    if (b.is_object()) {
      Merge(b, o, key);
      continue;
    }
    const bool ok = (b.is_number() && o.is_number() &&
                     !(b.is_number_integer() && o.is_number_float())) ||
                    (b.is_string() && o.is_string()) || (b.is_boolean() && o.is_boolean()) ||
                    (b.is_array() && o.is_array());
    if (!ok)
      throw ConfigError("config: '" + key + "' expects " + TypeName(b) + ", got " + TypeName(o));
    b = o;
  }
}

ExperimentConfig Parse(const json& merged) {
  try {
    return FromJsonValue(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

void ExperimentConfig::Resolve() {
  model.vocab = corpus.num_units;
  model.num_senones = corpus.NumSenones();
  model.audio_frontend.feature_dim = corpus.feature_dim;
  model.audio_frontend.d_model = model.conformer.d_model;
  model.visual_frontend.height = corpus.video_height;
  model.visual_frontend.width = corpus.video_width;
  model.visual_frontend.d_model = model.conformer.d_model;
  for (auto* t : {&train_audio, &train_video, &train_fusion, &train_lm}) t->seed = seed;
}

void ExperimentConfig::Validate() const {
  if (preset != "desk" && preset != "paper-scale-validate")
    throw ConfigError("config: unknown preset '" + preset + "' (desk, paper-scale-validate)");
  corpus.Validate();
  if (gmm.iters < 1) throw ConfigError("gmm: iters must be >= 1");
  if (!gmm.mix_schedule.empty() && static_cast<int>(gmm.mix_schedule.size()) != gmm.iters)
    throw ConfigError("gmm: mix_schedule needs one entry per iteration");
  if (gmm.var_floor <= 0.0) throw ConfigError("gmm: var_floor must be positive");
  model.Validate(PaperScale());
  for (const auto* t : {&train_audio, &train_video, &train_fusion, &train_lm}) t->Validate();
  decode.Validate();
}

std::string ExperimentConfig::ToJson() const { return ToJsonValue(*this).dump(2); }

std::string ExperimentConfig::Hash() const {
  const std::string canon = ToJsonValue(*this).dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const training::TrainConfig& ExperimentConfig::Train(training::Stage s) const {
  switch (s) {
    case training::Stage::kPretrainAudio: return train_audio;
    case training::Stage::kPretrainVideo: return train_video;
    case training::Stage::kFinetuneFusion: return train_fusion;
    case training::Stage::kTrainLm: return train_lm;
  }
  return train_audio;
}

ExperimentConfig PresetConfig(const std::string& preset) {
  ExperimentConfig c;
  c.preset = preset;
  if (preset == "desk") {
    c.corpus.num_utterances = 120;
    training::TrainConfig t;
    t.peak_lr = 1e-3;
    t.warmup_steps = 200;
    t.epochs = 30;
    t.batch_size = 8;
    c.train_audio = c.train_fusion = c.train_lm = c.train_video = t;
    c.train_video.epochs = 15;
    c.train_lm.epochs = 20;
  } else if (preset == "paper-scale-validate") {
    c.model.conformer = {512, 8, 2048, 5};
    c.model.audio_frontend.channels = 512;
    c.model.visual_frontend.stem_channels = 64;
    c.model.visual_frontend.block_channels = {64, 128, 256, 512};
    c.model.decoder_layers = 6;
    c.model.lm_layers = 6;
    c.model.fusion = {encoder::FusionVariant::kCmfe, 2, 10, encoder::Insertion::kOuter, 2};
    c.decode.beam = 10;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (desk, paper-scale-validate)");
  }
  c.Resolve();
  return c;
}

ExperimentConfig ConfigFromJson(const std::string& json_text, const std::string& preset) {
  json over;
  try {
    over = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  json base = ToJsonValue(PresetConfig(preset));
  Merge(base, over, "");
  ExperimentConfig c = Parse(base);
  c.Validate();
  return c;
}

ExperimentConfig ApplyOverrides(const ExperimentConfig& cfg,
                                const std::map<std::string, std::string>& env) {
  json base = ToJsonValue(cfg);
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::vector<std::string> parts;
    std::string rest = name.substr(prefix.size());
    for (size_t p; (p = rest.find("__")) != std::string::npos; rest = rest.substr(p + 2))
      parts.push_back(rest.substr(0, p));
    parts.push_back(rest);
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;
    json over = v;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) over = json{{*it, over}};
    Merge(base, over, "");
  }
  ExperimentConfig c = Parse(base);
  c.Validate();
  return c;
}

std::map<std::string, std::string> EnvOverrides() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string kv = *e;
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) continue;
    if (kv.rfind(kEnvPrefix, 0) == 0) out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

}  // namespace avsr

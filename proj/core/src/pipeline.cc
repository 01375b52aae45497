// pipeline.cc

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

#include "avsr/pipeline.h"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <glog/logging.h>
#include <nlohmann/json.hpp>

#include "avsr/array_store.h"
#include "avsr/error.h"
#include "avsr/nn/ops.h"
#include "avsr/plot.h"

namespace avsr::pipeline {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

void RequireFile(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p))
    throw IoError("missing " + p.string() + " (run `avsr " + producer + "` first)");
}

void CheckHash(const std::string& found, const ExperimentConfig& cfg, const fs::path& what) {
  if (found != cfg.Hash())
    throw ConfigError(what.string() + " was produced with config hash " + found +
                      ", current config hash is " + cfg.Hash());
}

void WriteText(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
}

corpus::Corpus LoadData(const ExperimentConfig& cfg, const RunDir& run) {
  const fs::path manifest = run.Data() / "manifest.txt";
  RequireFile(manifest, "make-data");
  CheckHash(corpus::ReadHeaderHash(manifest.string()), cfg, manifest);
  return corpus::ReadCorpus(run.Data().string());
}

gmmhmm::HmmModel LoadGmm(const ExperimentConfig& cfg, const RunDir& run) {
  const fs::path p = run.Gmm() / "model.nac";
  RequireFile(p, "train-gmm");
  ArrayStore store = ArrayStore::Load(p.string());
  CheckHash(store.Contains("meta.config_hash") ? store.GetString("meta.config_hash") : "", cfg, p);
  return gmmhmm::ModelFromStore(store);
}

std::string ProducerOf(const std::string& model_dir) {
  if (model_dir == "audio") return "pretrain-audio";
  if (model_dir == "video") return "pretrain-video";
  if (model_dir == "lm") return "train-lm";
  return "train-fusion";
}

nn::ParamStore LoadModel(const ExperimentConfig& cfg, const RunDir& run, const std::string& name,
                         training::CheckpointMeta* meta = nullptr) {
  const fs::path base = run.Model(name) / "model";
  RequireFile(base.string() + ".nac", ProducerOf(name));
  training::CheckpointMeta m;
  nn::ParamStore ps = training::LoadCheckpoint(base.string(), &m);
  CheckHash(m.config_hash, cfg, base.string() + ".nac");
  if (meta) *meta = m;
  return ps;
}

}  // namespace

std::string SystemFileStem(const std::string& system) {
  std::string s = system;
  for (char& c : s)
    if (c == '/') c = '-';
  return s;
}

void InitRunDir(const ExperimentConfig& cfg, const RunDir& run) {
  cfg.Validate();
  fs::create_directories(run.root());
  const fs::path hash_file = run / "config.hash";
  if (fs::exists(hash_file)) {
    std::ifstream is(hash_file);
    std::string old;
    is >> old;
    if (old != cfg.Hash())
      throw ConfigError("run directory " + run.root().string() + " belongs to config hash " + old +
                        ", current config hash is " + cfg.Hash() + "; use another --run-dir");
    return;
  }
  WriteText(run / "config.json", cfg.ToJson() + "\n");
  WriteText(hash_file, cfg.Hash() + "\n");
}

void MakeData(const ExperimentConfig& cfg, const RunDir& run) {
  InitRunDir(cfg, run);
  const corpus::Corpus c = corpus::GenerateCorpus(cfg.corpus);
  corpus::WriteCorpus(c, run.Data().string(), cfg.Hash());
  LOG(INFO) << "make-data: " << c.utterances.size() << " utterances -> " << run.Data();
}

GmmSummary TrainGmm(const ExperimentConfig& cfg, const RunDir& run) {
  InitRunDir(cfg, run);
  const corpus::Corpus c = LoadData(cfg, run);
  const auto items = gmmhmm::TrainItems(c, "train");
  gmmhmm::HmmModel init =
      gmmhmm::FlatStart(items, cfg.corpus.num_units, corpus::kStatesPerUnit, cfg.gmm.var_floor);
  const std::vector<int> schedule =
      cfg.gmm.mix_schedule.empty() ? gmmhmm::DefaultMixSchedule(cfg.gmm.iters) : cfg.gmm.mix_schedule;
  gmmhmm::EmResult em = gmmhmm::EmTrain(std::move(init), items, cfg.gmm.iters, schedule);

  ArrayStore store = gmmhmm::ModelToStore(em.model);
  store.PutString("meta.config_hash", cfg.Hash());
  fs::create_directories(run.Gmm());
  store.Save((run.Gmm() / "model.nac").string());
  std::ostringstream log;
  log << ojson{{"config_hash", cfg.Hash()}, {"stage", "train_gmm"}}.dump() << "\n";
  for (size_t i = 0; i < em.objective.size(); ++i)
    log << ojson{{"iter", i + 1}, {"objective", em.objective[i]}, {"components", em.components[i]}}
               .dump()
        << "\n";
  WriteText(run.Gmm() / "em.jsonl", log.str());
  LOG(INFO) << "train-gmm: " << cfg.gmm.iters << " iterations, final objective "
            << em.objective.back();
  return {em.objective, em.components};
}

AlignSummary AlignCorpus(const ExperimentConfig& cfg, const RunDir& run) {
  InitRunDir(cfg, run);
  const corpus::Corpus c = LoadData(cfg, run);
  const gmmhmm::HmmModel model = LoadGmm(cfg, run);
  AlignSummary sum;
  for (const std::string split : {"train", "test"}) {
    std::vector<std::pair<std::string, std::vector<int>>> rows;
    for (const corpus::Utterance* u : c.Split(split)) {
      gmmhmm::AlignmentLabels a = gmmhmm::ForcedAlign(model, u->audio.frames, u->transcript, u->id);
      sum.boundaries.Add(gmmhmm::CompareBoundaries(u->gold_states, a.labels, 2));
      ++sum.utterances;
      rows.emplace_back(u->id, std::move(a.labels));
    }
    corpus::WriteAlignmentText((run.Align() / (split + ".ali")).string(), rows, cfg.Hash());
  }
  ojson rep{{"config_hash", cfg.Hash()},
            {"utterances", sum.utterances},
            {"boundaries", sum.boundaries.total},
            {"within_2_frames", sum.boundaries.within},
            {"fraction_within_2_frames", sum.boundaries.Fraction()}};
  WriteText(run.Align() / "report.json", rep.dump(2) + "\n");
  LOG(INFO) << "align: " << sum.utterances << " utterances, "
            << 100.0 * sum.boundaries.Fraction() << "% boundaries within 2 frames of gold";
  return sum;
}

std::string StageDir(training::Stage s, training::FusionInit init) {
  switch (s) {
    case training::Stage::kPretrainAudio: return "audio";
    case training::Stage::kPretrainVideo: return "video";
    case training::Stage::kTrainLm: return "lm";
    case training::Stage::kFinetuneFusion:
      return std::string("fusion/") + training::FusionInitName(init);
  }
  return "?";
}

training::StageResult Train(const ExperimentConfig& cfg, const RunDir& run, training::Stage stage,
                            training::FusionInit init) {
  InitRunDir(cfg, run);
  const corpus::Corpus c = LoadData(cfg, run);
  training::StageInputs in;
  in.stage = stage;
  in.model = cfg.model;
  in.train = cfg.Train(stage);
  in.data = c.Split("train");

  std::map<std::string, std::vector<int>> labels;
  training::CheckpointAudit audit;
  std::string kind;
  switch (stage) {
    case training::Stage::kPretrainAudio:
      kind = model::ModelKindName(model::ModelKind::kAudioOnly);
      break;
    case training::Stage::kPretrainVideo: {
      kind = model::ModelKindName(model::ModelKind::kVideoPretrain);
      const fs::path ali = run.Align() / "train.ali";
      RequireFile(ali, "align");
      std::string h;
      for (auto& [id, l] : corpus::ReadAlignmentText(ali.string(), &h)) labels[id] = std::move(l);
      CheckHash(h, cfg, ali);
      in.labels = &labels;
      break;
    }
    case training::Stage::kTrainLm:
      kind = "lm";
      break;
    case training::Stage::kFinetuneFusion: {
      kind = model::ModelKindName(model::ModelKind::kFusion);
      nn::ParamStore audio, video;
      if (init != training::FusionInit::kNone) audio = LoadModel(cfg, run, "audio");
      if (init == training::FusionInit::kBoth) video = LoadModel(cfg, run, "video");
      in.init = training::InitStageModel(stage, cfg.model, in.train.seed);
      audit = training::ApplyFusionInit(in.init, cfg.model, init,
                                        init != training::FusionInit::kNone ? &audio : nullptr,
                                        init == training::FusionInit::kBoth ? &video : nullptr);
      break;
    }
  }

  const std::string dir = StageDir(stage, init);
  LOG(INFO) << training::StageName(stage) << " (" << dir << "): " << in.data.size()
            << " utterances, " << in.train.epochs << " epochs";
  training::StageResult res = training::RunStage(in);

  std::ostringstream log;
  log << ojson{{"config_hash", cfg.Hash()}, {"stage", training::StageName(stage)}, {"model", dir}}
             .dump()
      << "\n";
  for (const auto& r : res.metrics) log << training::MetricsToJsonLine(r) << "\n";
  WriteText(run.Model(dir) / "metrics.jsonl", log.str());
  training::CheckpointMeta meta{training::StageName(stage), res.steps, cfg.Hash(), kind, audit};
  training::SaveCheckpoint((run.Model(dir) / "model").string(), res.params, meta);
  if (!res.metrics.empty())
    LOG(INFO) << training::StageName(stage) << ": " << res.steps << " steps, last loss "
              << res.metrics.back().loss;
  return res;
}

std::filesystem::path Decode(const ExperimentConfig& cfg, const RunDir& run,
                             const std::string& system) {
  InitRunDir(cfg, run);
  const bool fusion = system.rfind("fusion/", 0) == 0;
  if (!fusion && system != "audio")
    throw ConfigError("decode: system must be 'audio' or 'fusion/<init>', got '" + system + "'");
  const corpus::Corpus c = LoadData(cfg, run);
  const nn::ParamStore params = LoadModel(cfg, run, system);
  const bool use_lm = cfg.decode_use_lm && cfg.decode.lm_weight > 0.0;
  nn::ParamStore lm;
  if (use_lm) lm = LoadModel(cfg, run, "lm");
  decoding::DecodeOptions opt = cfg.decode;
  if (!use_lm) opt.lm_weight = 0.0;

  std::vector<decoding::HypRecord> rows;
  for (const corpus::Utterance* u : c.Split("test")) {
    const nn::Tensor feats = training::PrepareFeatures(*u, nullptr, nullptr);
    nn::Graph g(params, false);
    model::AsrForward f =
        fusion ? model::EncodeFusion(g, cfg.model, feats, feats.dim(0), u->video.frames,
                                     u->video.num_frames())
               : model::EncodeAudioOnly(g, cfg.model, feats, feats.dim(0));
    decoding::SearchScorers sc;
    sc.vocab = cfg.model.vocab;
    sc.ctc_logprobs = nn::LogSoftmax(f.ctc_logits).value();
    const decoder::DecoderConfig dc = cfg.model.Decoder();
    sc.att = [&](std::span<const int> prefix) {
      return decoder::NextLogProbs(g, model::kDecoderPrefix, dc, prefix, f.memories);
    };
    nn::Graph glm(lm, false);
    const decoder::DecoderConfig lc = cfg.model.Lm();
    if (use_lm)
      sc.lm = [&](std::span<const int> prefix) {
        return decoder::NextLogProbs(glm, model::kLmPrefix, lc, prefix, {});
      };
    const auto best = decoding::BeamSearch(sc, opt);
    rows.push_back({u->id, best.front().combined, best.front().tokens});
  }
  const fs::path out = run / "decode" / (SystemFileStem(system) + ".hyp");
  fs::create_directories(out.parent_path());
  decoding::WriteHypFile(out.string(), rows, cfg.Hash());
  LOG(INFO) << "decode " << system << ": " << rows.size() << " utterances -> " << out;
  return out;
}

void RoverFiles(const std::vector<std::filesystem::path>& inputs,
                const std::filesystem::path& output) {
  if (inputs.size() < 2) throw ConfigError("rover: needs at least two hypothesis files");
  std::vector<std::string> order;
  std::set<std::string> seen;
  std::vector<std::map<std::string, std::vector<int>>> systems;
  std::string hash;
  for (size_t k = 0; k < inputs.size(); ++k) {
    std::string h;
    auto rows = decoding::ReadHypFile(inputs[k].string(), &h);
    if (k == 0) hash = h;
    else if (h != hash)
      throw ConfigError("rover: " + inputs[k].string() + " has config hash " + h + ", expected " +
                        hash);
    std::map<std::string, std::vector<int>> m;
    for (auto& r : rows) {
      if (seen.insert(r.utt_id).second) order.push_back(r.utt_id);
      m[r.utt_id] = std::move(r.tokens);
    }
    systems.push_back(std::move(m));
  }
  std::vector<decoding::HypRecord> out;
  for (const std::string& id : order) {
    std::vector<std::vector<int>> hyps;
    for (const auto& s : systems) {
      auto it = s.find(id);
      hyps.push_back(it == s.end() ? std::vector<int>{} : it->second);
    }
    out.push_back({id, 0.0, decoding::Rover(hyps)});
  }
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  decoding::WriteHypFile(output.string(), out, hash);
}

decoding::CerReport Eval(const ExperimentConfig& cfg, const RunDir& run,
                         const std::filesystem::path& hyp_path,
                         const std::filesystem::path& report_path, bool force) {
  InitRunDir(cfg, run);
  const corpus::Corpus c = LoadData(cfg, run);
  RequireFile(hyp_path, "decode");
  std::string h;
  std::map<std::string, std::vector<int>> hyps;
  for (auto& r : decoding::ReadHypFile(hyp_path.string(), &h)) hyps[r.utt_id] = std::move(r.tokens);
  if (h != cfg.Hash()) {
    if (!force)
      throw ConfigError(hyp_path.string() + " has config hash " + h + ", current config hash is " +
                        cfg.Hash() + " (pass --force to score anyway)");
    LOG(WARNING) << "eval: scoring " << hyp_path << " despite config hash mismatch";
  }
  std::map<std::string, std::vector<int>> refs;
  for (const corpus::Utterance* u : c.Split("test")) refs[u->id] = u->transcript;
  decoding::CerReport rep = decoding::ScoreHypotheses(refs, hyps);
  if (!rep.missing.empty())
    LOG(WARNING) << "eval: " << rep.missing.size() << " utterances have no hypothesis";
  if (!report_path.empty()) {
    ojson j;
    j["config_hash"] = cfg.Hash();
    j["hyp_config_hash"] = h;
    j["hyp_file"] = hyp_path.string();
    j["overall_cer"] = rep.overall_cer;
    j["errors"] = rep.errors;
    j["ref_tokens"] = rep.ref_tokens;
    j["per_utt"] = ojson::object();
    for (const auto& [id, v] : rep.per_utt) j["per_utt"][id] = v;
    j["missing"] = rep.missing;
    WriteText(report_path, j.dump(2) + "\n");
  }
  return rep;
}

std::filesystem::path InspectEmbeddings(const ExperimentConfig& cfg, const RunDir& run,
                                        const std::string& model_dir, int max_utterances,
                                        const std::filesystem::path& output) {
  InitRunDir(cfg, run);
  const corpus::Corpus c = LoadData(cfg, run);
  const nn::ParamStore params = LoadModel(cfg, run, model_dir);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int used = 0;
  for (const corpus::Utterance* u : c.Split("test")) {
    if (used++ >= max_utterances) break;
    nn::Graph g(params, false);
    const nn::Tensor e =
        model::VideoEmbeddings(g, cfg.model, u->video.frames, u->video.num_frames()).value();
    const int64_t t_audio = static_cast<int64_t>(u->gold_states.size());
    for (int64_t i = 0; i < e.rows(); ++i) {
      rows.emplace_back(e.data() + i * e.cols(), e.data() + (i + 1) * e.cols());
      const int64_t centre = std::min<int64_t>(corpus::kRateRatio * i + corpus::kRateRatio / 2,
                                               t_audio - 1);
      labels.push_back(u->gold_states[centre]);
    }
  }
  if (rows.size() < 2) throw DegenerateInputError("inspect-embeddings: fewer than two frames");
  nn::RowMatrix x(static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) x(i, j) = rows[i][j];
  const nn::RowMatrix p = plot::Pca2d(x);
  const fs::path out = output.empty() ? run / "plots" / ("embeddings-" + SystemFileStem(model_dir) + ".png")
                                      : output;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  WriteFileBytes(out.string(), plot::ScatterPng(p, labels, cfg.corpus.NumSenones()));
  LOG(INFO) << "inspect-embeddings: " << rows.size() << " frames -> " << out;
  return out;
}

RecipeResult RunRecipe(const ExperimentConfig& cfg, const RunDir& run) {
  using training::Stage;
  MakeData(cfg, run);
  TrainGmm(cfg, run);
  AlignCorpus(cfg, run);
  Train(cfg, run, Stage::kPretrainAudio, cfg.fusion_init);
  Train(cfg, run, Stage::kPretrainVideo, cfg.fusion_init);
  if (cfg.decode_use_lm && cfg.decode.lm_weight > 0.0) Train(cfg, run, Stage::kTrainLm, cfg.fusion_init);
  Train(cfg, run, Stage::kFinetuneFusion, cfg.fusion_init);
  RecipeResult res;
  for (const std::string& sys : {std::string("audio"), StageDir(Stage::kFinetuneFusion, cfg.fusion_init)}) {
    const fs::path hyp = Decode(cfg, run, sys);
    decoding::CerReport rep =
        Eval(cfg, run, hyp, run / "eval" / (SystemFileStem(sys) + ".json"), false);
    LOG(INFO) << "eval " << sys << ": CER " << rep.overall_cer;
    (sys == "audio" ? res.audio : res.fusion) = std::move(rep);
  }
  return res;
}

}  // namespace avsr::pipeline

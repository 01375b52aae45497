// avsr.cc

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

// Command line driver for the audio-visual recognition recipe.
//
//   avsr --run-dir runs/desk make-data
//   avsr --run-dir runs/desk train-gmm
//   avsr --run-dir runs/desk align
//   avsr --run-dir runs/desk pretrain-audio
//   avsr --run-dir runs/desk pretrain-video
//   avsr --run-dir runs/desk train-lm
//   avsr --run-dir runs/desk train-fusion --init both
//   avsr --run-dir runs/desk decode --system fusion/both
//   avsr --run-dir runs/desk eval --hyp runs/desk/decode/fusion-both.hyp
//   avsr rover a.hyp b.hyp c.hyp -o combined.hyp
//   avsr --run-dir runs/desk inspect-embeddings --model video
//
// Config values may be overridden with AVSR__<section>__<key>=<json value>,
// e.g. AVSR__train__fusion__epochs=5.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <glog/logging.h>

#include "avsr/config.h"
#include "avsr/error.h"
#include "avsr/pipeline.h"

namespace {

using avsr::ExperimentConfig;
using avsr::training::Stage;

std::string ReadText(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw avsr::IoError("cannot read config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  google::InitGoogleLogging(argv[0]);
  FLAGS_logtostderr = true;

  CLI::App app{"Audio-visual speech recognition recipe on a synthetic corpus"};
  app.require_subcommand(1);
  std::string config_path, run_dir, preset = "desk";
  int64_t seed = -1;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--run-dir", run_dir, "Run directory holding all artifacts");
  app.add_option("--seed", seed, "Overrides the config seed");
  app.add_option("--preset", preset, "Base preset")
      ->check(CLI::IsMember({"desk", "paper-scale-validate"}));

  auto* make_data = app.add_subcommand("make-data", "Generate the synthetic corpus");
  auto* train_gmm = app.add_subcommand("train-gmm", "Flat start and Viterbi EM of the GMM-HMM");
  auto* align = app.add_subcommand("align", "Forced alignment of the corpus with the GMM-HMM");
  auto* pre_audio = app.add_subcommand("pretrain-audio", "Train the audio-only CTC/attention model");
  auto* pre_video = app.add_subcommand("pretrain-video", "Frame-level senone pre-training of the visual branch");
  auto* train_lm = app.add_subcommand("train-lm", "Train the transformer language model");
  auto* train_fusion = app.add_subcommand("train-fusion", "Fine-tune the audio-visual fusion model");
  std::string init;
  train_fusion->add_option("--init", init, "Initialisation: both, audio or none (default from config)")
      ->check(CLI::IsMember({"both", "audio", "none"}));
  auto* decode = app.add_subcommand("decode", "Beam search over the test split");
  std::string system = "fusion";
  decode->add_option("--system", system, "audio, fusion (configured init) or fusion/<init>");
  auto* rover = app.add_subcommand("rover", "Combine hypothesis files by voting");
  std::vector<std::string> rover_in;
  std::string rover_out;
  rover->add_option("inputs", rover_in, "Hypothesis files, in priority order")->required()->expected(2, -1);
  rover->add_option("-o,--output", rover_out, "Combined hypothesis file")->required();
  auto* eval = app.add_subcommand("eval", "Score a hypothesis file against the test references");
  std::string hyp_path, report_path;
  bool force = false;
  eval->add_option("--hyp", hyp_path, "Hypothesis file")->required();
  eval->add_option("--report", report_path, "JSON report path (default <run>/eval/<name>.json)");
  eval->add_flag("--force", force, "Score even when config hashes differ");
  auto* inspect = app.add_subcommand("inspect-embeddings", "PCA scatter plot of visual frontend embeddings");
  std::string inspect_model = "video", inspect_out;
  int max_utts = 20;
  inspect->add_option("--model", inspect_model, "Checkpoint directory: video or fusion/<init>");
  inspect->add_option("--max-utts", max_utts, "Test utterances to plot");
  inspect->add_option("-o,--output", inspect_out, "PNG path (default <run>/plots/...)");
  auto* recipe = app.add_subcommand("recipe", "Run every stage in order and report CER");

  CLI11_PARSE(app, argc, argv);

  try {
    if (rover->parsed()) {
      std::vector<std::filesystem::path> in(rover_in.begin(), rover_in.end());
      avsr::pipeline::RoverFiles(in, rover_out);
      std::cout << "wrote " << rover_out << "\n";
      return 0;
    }
    if (run_dir.empty()) throw avsr::ConfigError("--run-dir is required");

    ExperimentConfig cfg = config_path.empty() ? avsr::PresetConfig(preset)
                                               : avsr::ConfigFromJson(ReadText(config_path), preset);
    if (seed >= 0) {
      cfg.seed = static_cast<uint64_t>(seed);
      cfg.Resolve();
    }
    cfg = avsr::ApplyOverrides(cfg, avsr::EnvOverrides());
    const avsr::pipeline::RunDir run(run_dir);
    const auto fusion_init = init.empty() ? cfg.fusion_init : avsr::training::ParseFusionInit(init);

    if (make_data->parsed()) {
      avsr::pipeline::MakeData(cfg, run);
    } else if (train_gmm->parsed()) {
      avsr::pipeline::TrainGmm(cfg, run);
    } else if (align->parsed()) {
      const auto s = avsr::pipeline::AlignCorpus(cfg, run);
      std::cout << "boundaries within 2 frames of gold: " << s.boundaries.Fraction() << "\n";
    } else if (pre_audio->parsed()) {
      avsr::pipeline::Train(cfg, run, Stage::kPretrainAudio, fusion_init);
    } else if (pre_video->parsed()) {
      avsr::pipeline::Train(cfg, run, Stage::kPretrainVideo, fusion_init);
    } else if (train_lm->parsed()) {
      avsr::pipeline::Train(cfg, run, Stage::kTrainLm, fusion_init);
    } else if (train_fusion->parsed()) {
      avsr::pipeline::Train(cfg, run, Stage::kFinetuneFusion, fusion_init);
    } else if (decode->parsed()) {
      if (system == "fusion") system = avsr::pipeline::StageDir(Stage::kFinetuneFusion, cfg.fusion_init);
      std::cout << "wrote " << avsr::pipeline::Decode(cfg, run, system).string() << "\n";
    } else if (eval->parsed()) {
      const std::filesystem::path hyp(hyp_path);
      const std::filesystem::path report =
          report_path.empty() ? run / "eval" / (hyp.stem().string() + ".json")
                              : std::filesystem::path(report_path);
      const auto rep = avsr::pipeline::Eval(cfg, run, hyp, report, force);
      std::cout << "overall_cer " << rep.overall_cer << " (" << rep.errors << "/" << rep.ref_tokens
                << "), report " << report.string() << "\n";
    } else if (inspect->parsed()) {
      const auto out = avsr::pipeline::InspectEmbeddings(cfg, run, inspect_model, max_utts, inspect_out);
      std::cout << "wrote " << out.string() << "\n";
    } else if (recipe->parsed()) {
      const auto res = avsr::pipeline::RunRecipe(cfg, run);
      std::cout << "audio-only CER " << res.audio.overall_cer << "\n"
                << "fusion CER     " << res.fusion.overall_cer << "\n";
    }
  } catch (const avsr::ConfigError& e) {
    std::cerr << "avsr: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "avsr: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

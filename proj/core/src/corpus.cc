// corpus.cc

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

#include "avsr/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avsr/array_store.h"
#include "avsr/error.h"

namespace avsr::corpus {
namespace {

double RoundToFloat(double v) { return static_cast<double>(static_cast<float>(v)); }

int UniformInt(nn::Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

void CorpusSpec::Validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("corpus: " + m); };
  if (num_units < 2) fail("num_units must be >= 2");
  if (feature_dim < 1) fail("feature_dim must be >= 1");
  if (video_height < 4 || video_width < 4) fail("video_height/video_width must be >= 4");
  if (audio_fps != kAudioFps || video_fps != kVideoFps)
    fail("audio_fps must be 100 and video_fps 25 (audio_fps = 4 x video_fps)");
  if (num_utterances < 1) fail("num_utterances must be >= 1");
  if (test_fraction < 0.0 || test_fraction >= 1.0) fail("test_fraction must be in [0,1)");
  if (min_units < 1 || max_units < min_units) fail("utterance length range is invalid");
  if (min_duration < 12) fail("min_duration must be >= 12 audio frames");
  if (max_duration < min_duration) fail("max_duration must be >= min_duration");
  if (min_duration % kRateRatio || max_duration % kRateRatio)
    fail("unit durations must be multiples of 4 audio frames");
  if (noise_std < 0.0) fail("noise_std must be >= 0");
  if (visual_informativeness < 0.0 || visual_informativeness > 1.0)
    fail("visual_informativeness must be in [0,1]");
}

std::vector<const Utterance*> Corpus::Split(const std::string& name) const {
  std::vector<const Utterance*> out;
  for (const Utterance& u : utterances)
    if (u.split == name) out.push_back(&u);
  return out;
}

const Utterance& Corpus::Find(const std::string& id) const {
  for (const Utterance& u : utterances)
    if (u.id == id) return u;
  throw IoError("utterance " + id + " not in corpus");
}

Templates MakeTemplates(const CorpusSpec& spec, nn::Rng& rng) {
  const int u_count = spec.num_units, d = spec.feature_dim;
  const int h = spec.video_height, w = spec.video_width;
  Templates t;
  t.audio = nn::Tensor({u_count, kStatesPerUnit, d});
  t.visual = nn::Tensor({u_count, kStatesPerUnit, h, w});
  t.audio_source.resize(u_count);
  for (int u = 0; u < u_count; ++u) t.audio_source[u] = u;

  // The last `shared` units form pairs; the second of each pair reuses the
  // audio of the first.
  int shared = 0;
  if (spec.visual_informativeness > 0.0) {
    shared = 2 * static_cast<int>(std::lround(spec.visual_informativeness * u_count / 2.0));
    shared = std::clamp(shared, 2, u_count - u_count % 2);
  }
  for (int k = 0; k + 1 < shared; k += 2) {
    const int first = u_count - shared + k;
    t.audio_source[first + 1] = first;
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int u = 0; u < u_count; ++u)
    for (int s = 0; s < kStatesPerUnit; ++s)
      for (int j = 0; j < d; ++j) t.audio.data()[(u * kStatesPerUnit + s) * d + j] = RoundToFloat(gauss(rng));
  for (int u = 0; u < u_count; ++u) {
    if (t.audio_source[u] == u) continue;
    const int src = t.audio_source[u];
    std::copy_n(t.audio.data() + src * kStatesPerUnit * d, kStatesPerUnit * d,
                t.audio.data() + u * kStatesPerUnit * d);
  }

  // Lip-like ellipses: brightness encodes the unit, opening the state.
  for (int u = 0; u < u_count; ++u) {
    const double brightness = 0.35 + 0.6 * u / static_cast<double>(u_count - 1);
    for (int s = 0; s < kStatesPerUnit; ++s) {
      const double ax = w * (0.2 + 0.04 * ((u * 7 + s * 3) % 5));
      const double ay = h * (0.06 + 0.07 * s + 0.02 * (u % 3));
      double* img = t.visual.data() + (u * kStatesPerUnit + s) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double dx = (x + 0.5 - w / 2.0) / ax;
          const double dy = (y + 0.5 - h / 2.0) / ay;
          img[y * w + x] = RoundToFloat(dx * dx + dy * dy <= 1.0 ? brightness : 0.05);
        }
    }
  }
  return t;
}

Utterance SynthesizeUtterance(const CorpusSpec& spec, const Templates& templates,
                              const std::vector<int>& units,
                              const std::vector<int>& durations, nn::Rng& rng) {
  if (units.empty() || units.size() != durations.size())
    throw ConfigError("SynthesizeUtterance: units and durations must be non-empty and equal length");
  const int d = spec.feature_dim, h = spec.video_height, w = spec.video_width;
  Utterance utt;
  utt.transcript = units;
  for (size_t i = 0; i < units.size(); ++i) {
    const int dur = durations[i];
    if (units[i] < 0 || units[i] >= spec.num_units) throw ConfigError("unit id out of range");
    if (dur < 12 || dur % kRateRatio) throw ConfigError("durations must be >= 12 and multiples of 4");
    // State lengths: each at least dur/6, the remainder split at two cuts.
    const int min_state = dur / 6;
    const int rest = dur - kStatesPerUnit * min_state;
    int c1 = UniformInt(rng, 0, rest), c2 = UniformInt(rng, 0, rest);
    if (c1 > c2) std::swap(c1, c2);
    const int lens[3] = {min_state + c1, min_state + c2 - c1, min_state + rest - c2};
    for (int s = 0; s < kStatesPerUnit; ++s)
      for (int k = 0; k < lens[s]; ++k) utt.gold_states.push_back(units[i] * kStatesPerUnit + s);
  }
  const int64_t t_audio = static_cast<int64_t>(utt.gold_states.size());
  const int64_t t_video = t_audio / kRateRatio;

  std::normal_distribution<double> gauss(0.0, 1.0);
  utt.audio.frames = nn::Tensor({t_audio, d});
  for (int64_t t = 0; t < t_audio; ++t) {
    const double* tpl = templates.audio.data() + static_cast<int64_t>(utt.gold_states[t]) * d;
    for (int j = 0; j < d; ++j) {
      double v = tpl[j];
      if (spec.noise_std > 0.0) v += spec.noise_std * gauss(rng);
      utt.audio.frames.at(t, j) = RoundToFloat(v);
    }
  }
  const double vnoise = spec.EffectiveVideoNoise();
  utt.video.frames = nn::Tensor({t_video, h, w});
  for (int64_t f = 0; f < t_video; ++f) {
    double* img = utt.video.frames.data() + f * h * w;
    for (int k = 0; k < kRateRatio; ++k) {
      const double* tpl = templates.visual.data() +
                          static_cast<int64_t>(utt.gold_states[f * kRateRatio + k]) * h * w;
      for (int p = 0; p < h * w; ++p) img[p] += tpl[p] / kRateRatio;
    }
    for (int p = 0; p < h * w; ++p) {
      double v = img[p];
      if (vnoise > 0.0) v += vnoise * gauss(rng);
      img[p] = RoundToFloat(std::clamp(v, 0.0, 1.0));
    }
  }
  return utt;
}

Corpus GenerateCorpus(const CorpusSpec& spec) {
  spec.Validate();
  nn::Rng rng(spec.seed);
  Corpus corpus;
  corpus.spec = spec;
  corpus.templates = MakeTemplates(spec, rng);
  const int n_train = static_cast<int>(std::lround(spec.num_utterances * (1.0 - spec.test_fraction)));
  const int dur_steps = (spec.max_duration - spec.min_duration) / kRateRatio;
  for (int i = 0; i < spec.num_utterances; ++i) {
    const int len = UniformInt(rng, spec.min_units, spec.max_units);
    std::vector<int> units(len), durations(len);
    for (int k = 0; k < len; ++k) {
      units[k] = UniformInt(rng, 0, spec.num_units - 1);
      durations[k] = spec.min_duration + kRateRatio * UniformInt(rng, 0, dur_steps);
    }
    Utterance utt = SynthesizeUtterance(spec, corpus.templates, units, durations, rng);
    char id[32];
    std::snprintf(id, sizeof(id), "utt%05d", i);
    utt.id = id;
    utt.split = i < n_train ? "train" : "test";
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

FeatureSequence NormalizeUtterance(const FeatureSequence& f, double var_floor) {
  const int64_t t = f.num_frames(), d = f.dim();
  if (t < 2)
    throw DegenerateInputError("utterance normalization needs at least 2 frames, got " +
                               std::to_string(t));
  FeatureSequence out;
  out.frames = f.frames;
  auto m = out.frames.mat();
  for (int64_t j = 0; j < d; ++j) {
    const double mean = m.col(j).mean();
    const double var = (m.col(j).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(std::max(var, var_floor));
    m.col(j) = (m.col(j).array() - mean) * inv;
  }
  return out;
}

FeatureSequence SpecAugment(const FeatureSequence& f, const SpecAugmentPolicy& policy,
                            nn::Rng& rng) {
  FeatureSequence out = f;
  const int64_t t = f.num_frames(), d = f.dim();
  for (int k = 0; k < policy.num_freq_masks; ++k) {
    const int lo = std::min<int64_t>(policy.min_freq_width, d);
    const int hi = std::min<int64_t>(std::max(policy.max_freq_width, lo), d);
    const int width = UniformInt(rng, lo, hi);
    const int start = UniformInt(rng, 0, static_cast<int>(d - width));
    for (int64_t i = 0; i < t; ++i)
      for (int j = start; j < start + width; ++j) out.frames.at(i, j) = 0.0;
  }
  const int max_t = std::min<int64_t>(static_cast<int64_t>(policy.max_time_ratio * t), t);
  for (int k = 0; k < policy.num_time_masks; ++k) {
    const int width = UniformInt(rng, 0, std::max(max_t, 0));
    const int start = UniformInt(rng, 0, static_cast<int>(t - width));
    for (int i = start; i < start + width; ++i)
      for (int64_t j = 0; j < d; ++j) out.frames.at(i, j) = 0.0;
  }
  return out;
}

// --- persistence -----------------------------------------------------------

std::string CorpusSpecToJson(const CorpusSpec& s) {
  nlohmann::ordered_json j;
  j["num_units"] = s.num_units;
  j["feature_dim"] = s.feature_dim;
  j["video_height"] = s.video_height;
  j["video_width"] = s.video_width;
  j["num_utterances"] = s.num_utterances;
  j["test_fraction"] = s.test_fraction;
  j["min_units"] = s.min_units;
  j["max_units"] = s.max_units;
  j["min_duration"] = s.min_duration;
  j["max_duration"] = s.max_duration;
  j["noise_std"] = s.noise_std;
  j["video_noise_std"] = s.video_noise_std;
  j["visual_informativeness"] = s.visual_informativeness;
  j["seed"] = s.seed;
  return j.dump();
}

CorpusSpec CorpusSpecFromJson(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  CorpusSpec s;
  s.num_units = j.at("num_units");
  s.feature_dim = j.at("feature_dim");
  s.video_height = j.at("video_height");
  s.video_width = j.at("video_width");
  s.num_utterances = j.at("num_utterances");
  s.test_fraction = j.at("test_fraction");
  s.min_units = j.at("min_units");
  s.max_units = j.at("max_units");
  s.min_duration = j.at("min_duration");
  s.max_duration = j.at("max_duration");
  s.noise_std = j.at("noise_std");
  s.video_noise_std = j.at("video_noise_std");
  s.visual_informativeness = j.at("visual_informativeness");
  s.seed = j.at("seed");
  return s;
}

void WriteAlignmentText(const std::string& path,
                        const std::vector<std::pair<std::string, std::vector<int>>>& rows,
                        const std::string& config_hash) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "# avsr-alignment v1 config_hash=" << config_hash << '\n';
  for (const auto& [id, states] : rows) {
    out << id;
    for (int s : states) out << ' ' << s;
    out << '\n';
  }
}

std::vector<std::pair<std::string, std::vector<int>>> ReadAlignmentText(const std::string& path,
                                                                        std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open alignment file " + path);
  std::vector<std::pair<std::string, std::vector<int>>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("config_hash=");
      if (config_hash && pos != std::string::npos) *config_hash = line.substr(pos + 12);
      continue;
    }
    std::istringstream is(line);
    std::pair<std::string, std::vector<int>> row;
    is >> row.first;
    int s;
    while (is >> s) row.second.push_back(s);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ReadHeaderHash(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  const auto pos = line.find("config_hash=");
  if (line.empty() || line[0] != '#' || pos == std::string::npos) return "";
  std::string h = line.substr(pos + 12);
  const auto end = h.find_first_of(" \t");
  return end == std::string::npos ? h : h.substr(0, end);
}

void WriteCorpus(const Corpus& corpus, const std::string& dir, const std::string& config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "utts");
  std::ofstream manifest(fs::path(dir) / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + dir);
  manifest << "# avsr-manifest v1 config_hash=" << config_hash << '\n';
  std::vector<std::pair<std::string, std::vector<int>>> gold;
  for (const Utterance& u : corpus.utterances) {
    const std::string rel = "utts/" + u.id + ".nac";
    ArrayStore store;
    store.PutF32("audio", u.audio.frames);
    store.PutF32("video", u.video.frames);
    store.PutString("meta.config_hash", config_hash);
    store.Save((fs::path(dir) / rel).string());
    manifest << u.id << '\t' << u.split << '\t' << rel << '\t';
    for (size_t i = 0; i < u.transcript.size(); ++i) manifest << (i ? " " : "") << u.transcript[i];
    manifest << '\n';
    gold.emplace_back(u.id, u.gold_states);
  }
  WriteAlignmentText((fs::path(dir) / "gold_align.txt").string(), gold, config_hash);

  ArrayStore tpl;
  tpl.PutF64("templates.audio", corpus.templates.audio);
  tpl.PutF64("templates.visual", corpus.templates.visual);
  std::vector<int64_t> src(corpus.templates.audio_source.begin(), corpus.templates.audio_source.end());
  tpl.PutI64("templates.audio_source", {static_cast<int64_t>(src.size())}, src);
  tpl.PutString("meta.spec", CorpusSpecToJson(corpus.spec));
  tpl.PutString("meta.config_hash", config_hash);
  tpl.Save((fs::path(dir) / "templates.nac").string());
}

Corpus ReadCorpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::exists(root / "manifest.txt"))
    throw IoError("no corpus manifest in " + dir + " (run `avsr make-data` first)");
  Corpus corpus;
  const ArrayStore tpl = ArrayStore::Load((root / "templates.nac").string());
  corpus.spec = CorpusSpecFromJson(tpl.GetString("meta.spec"));
  corpus.templates.audio = tpl.GetTensor("templates.audio");
  corpus.templates.visual = tpl.GetTensor("templates.visual");
  for (int64_t v : tpl.GetI64("templates.audio_source")) corpus.templates.audio_source.push_back(static_cast<int>(v));

  auto gold = ReadAlignmentText((root / "gold_align.txt").string());
  std::ifstream manifest(root / "manifest.txt");
  std::string line;
  size_t row = 0;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    Utterance u;
    std::string rel, tokens;
    std::getline(is, u.id, '\t');
    std::getline(is, u.split, '\t');
    std::getline(is, rel, '\t');
    std::getline(is, tokens);
    std::istringstream ts(tokens);
    int tok;
    while (ts >> tok) u.transcript.push_back(tok);
    const ArrayStore store = ArrayStore::Load((root / rel).string());
    u.audio.frames = store.GetTensor("audio");
    u.video.frames = store.GetTensor("video");
    if (row >= gold.size() || gold[row].first != u.id)
      throw IoError("gold alignment does not match manifest at " + u.id);
    u.gold_states = gold[row].second;
    ++row;
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace avsr::corpus

// avsr/decoding.h

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

#ifndef AVSR_DECODING_H_
#define AVSR_DECODING_H_

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "avsr/nn/tensor.h"

namespace avsr::decoding {

struct Hypothesis {
  std::vector<int> tokens;
  double score_att = 0.0;
  double score_ctc = 0.0;
  double score_lm = 0.0;
  double combined = 0.0;
};

struct DecodeOptions {
  int beam = 4;
  double ctc_weight = 0.3;
  double lm_weight = 0.2;
  int max_len = -1;  // < 0: twice the encoder frame count
  int nbest = 1;

  void Validate() const;
};

/// (1 - w_ctc) att + w_ctc ctc + w_lm lm.
double CombineScores(double att, double ctc, double lm, const DecodeOptions& opt);

/// Blank/non-blank forward recursion over CTC log-posteriors [T, V + 1]
/// (blank = V) for incrementally growing label prefixes.
class CtcPrefixScorer {
 public:
  struct State {
    std::vector<double> r_nb;  // log P(prefix, last frame emits a label), per t
    std::vector<double> r_b;   // log P(prefix, last frame is blank), per t
    int last = -1;
    double prefix_score = 0.0;  // log P(output starts with prefix)
  };

  CtcPrefixScorer(const nn::Tensor& logprobs, int blank);

  State Initial() const;
  State Extend(const State& s, int token) const;
  /// log P(output equals the prefix exactly).
  double FinalScore(const State& s) const;
  int frames() const { return static_cast<int>(x_.rows()); }

 private:
  nn::Tensor x_;
  int blank_;
};

/// Convenience wrappers over CtcPrefixScorer.
double CtcPrefixLogProb(const nn::Tensor& logprobs, std::span<const int> prefix, int blank);
double CtcSequenceLogProb(const nn::Tensor& logprobs, std::span<const int> seq, int blank);

/// Next-token log-probabilities over vocab + 1 classes (last = eos) given a
/// prefix that excludes sos.
using NextTokenFn = std::function<std::vector<double>(std::span<const int>)>;

struct SearchScorers {
  int vocab = 0;              // eos and blank are both index `vocab`
  nn::Tensor ctc_logprobs;    // [T, vocab + 1]
  NextTokenFn att;
  NextTokenFn lm;             // optional
};

/// Joint CTC/attention beam search with shallow LM fusion. Each step
/// expands every running hypothesis by every class, keeps the `beam` best
/// by combined score, and moves hypotheses ending in eos to the final list.
/// Hypotheses still running at max_len are closed with eos. The search is
/// run for every width 1..beam with memoized scorer calls and the finished
/// hypotheses are pooled, so the best score never drops as beam grows.
/// Returns up to nbest distinct hypotheses sorted by combined score,
/// descending.
std::vector<Hypothesis> BeamSearch(const SearchScorers& scorers, const DecodeOptions& opt);

// --- scoring -------------------------------------------------------------

int64_t EditDistance(std::span<const int> a, std::span<const int> b);
/// Levenshtein distance / |ref|. Empty ref throws DegenerateInputError.
double Cer(std::span<const int> ref, std::span<const int> hyp);

struct CerReport {
  double overall_cer = 0.0;  // total edits / total reference tokens
  int64_t errors = 0;
  int64_t ref_tokens = 0;
  std::map<std::string, double> per_utt;
  std::vector<std::string> missing;  // refs without a hypothesis, scored as empty
};
CerReport ScoreHypotheses(const std::map<std::string, std::vector<int>>& refs,
                          const std::map<std::string, std::vector<int>>& hyps);

// --- ROVER ---------------------------------------------------------------

/// Word transition network: slot s holds one entry per system aligned so
/// far; kNull marks "no token".
struct TransitionNetwork {
  static constexpr int kNull = -1;
  std::vector<std::vector<int>> slots;
  int systems = 0;

  void Add(std::span<const int> hyp);
  /// Per-slot frequency vote; ties go to the earliest system, a winning
  /// null drops the slot.
  std::vector<int> Vote() const;
};

/// Needs at least two systems.
std::vector<int> Rover(const std::vector<std::vector<int>>& systems);

// --- hypothesis files -----------------------------------------------------

struct HypRecord {
  std::string utt_id;
  double score = 0.0;
  std::vector<int> tokens;
};

/// `<utt-id> <score> <token>*` lines after a `# avsr-hyp v1 config_hash=` header.
void WriteHypFile(const std::string& path, const std::vector<HypRecord>& rows,
                  const std::string& config_hash);
std::vector<HypRecord> ReadHypFile(const std::string& path, std::string* config_hash = nullptr);

}  // namespace avsr::decoding

#endif  // AVSR_DECODING_H_

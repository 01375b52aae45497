// avsr/gmm_hmm.h

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

#ifndef AVSR_GMM_HMM_H_
#define AVSR_GMM_HMM_H_

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avsr/array_store.h"
#include "avsr/corpus.h"
#include "avsr/nn/tensor.h"

namespace avsr::gmmhmm {

/// Diagonal-covariance Gaussian mixture.
struct Gmm {
  std::vector<double> weights;  // K
  nn::Tensor means;             // [K, D]
  nn::Tensor vars;              // [K, D]

  int num_components() const { return static_cast<int>(weights.size()); }
  int64_t dim() const { return means.ndim() ? means.dim(1) : 0; }
  /// log sum_k w_k N(x; mu_k, diag(var_k)).
  double LogLikelihood(std::span<const double> x) const;
  /// Per-component log(w_k) + log N(x | k).
  void ComponentLogLikelihoods(std::span<const double> x, std::vector<double>& out) const;
};

struct HmmState {
  double self_loop = 0.5;
  double forward = 0.5;
  Gmm gmm;
};

/// Monophone, strictly left-to-right HMMs without skips. State (u, s) is
/// stored at index u * states_per_unit + s, which is also its senone id.
struct HmmModel {
  int num_units = 0;
  int states_per_unit = corpus::kStatesPerUnit;
  int64_t dim = 0;
  double var_floor = 1e-3;
  std::vector<HmmState> states;

  int NumSenones() const { return num_units * states_per_unit; }
  const HmmState& state(int unit, int s) const { return states[unit * states_per_unit + s]; }
  void Validate() const;
};

/// Dense (unit, state) <-> senone id mapping, row-major in unit.
class SenoneInventory {
 public:
  SenoneInventory(int num_units, int states_per_unit)
      : num_units_(num_units), states_per_unit_(states_per_unit) {}
  int size() const { return num_units_ * states_per_unit_; }
  int Id(int unit, int state) const;
  std::pair<int, int> Pair(int id) const;

 private:
  int num_units_;
  int states_per_unit_;
};

SenoneInventory BuildInventory(const HmmModel& model);

struct AlignmentLabels {
  std::string utt_id;
  std::vector<int> labels;  // senone id per audio frame
  int num_senones = 0;
  double score = 0.0;       // joint log-probability of the path
};

/// Best path through a left-to-right chain that starts in chain state 0 and
/// ends in the last chain state, visiting every state at least once.
struct ChainPath {
  std::vector<int> chain_states;  // per frame, index into the chain
  double score = 0.0;
};
ChainPath ViterbiChain(const nn::Tensor& emission_loglik, std::span<const double> self_log,
                       std::span<const double> forward_log);

/// Senone ids of the concatenated chain for a transcript.
std::vector<int> TranscriptChain(const HmmModel& model, std::span<const int> transcript);
/// [T, chain length] emission log-likelihoods.
nn::Tensor ChainEmissions(const HmmModel& model, const nn::Tensor& features,
                          std::span<const int> chain);

/// Viterbi forced alignment. Throws InfeasibleError when T < 3 * L.
AlignmentLabels ForcedAlign(const HmmModel& model, const nn::Tensor& features,
                            std::span<const int> transcript, const std::string& utt_id = "");

/// Joint log-probability of an explicit label path, recomputed from scratch.
double PathLogProb(const HmmModel& model, const nn::Tensor& features, std::span<const int> labels);

/// Borrowed view of one training utterance.
struct TrainItem {
  std::string id;
  const nn::Tensor* features = nullptr;
  std::vector<int> transcript;
};
std::vector<TrainItem> TrainItems(const corpus::Corpus& corpus, const std::string& split = "train");

/// Uniform segmentation of every utterance across its states, single
/// Gaussian per state, transitions (0.5, 0.5).
HmmModel FlatStart(const std::vector<TrainItem>& data, int num_units,
                   int states_per_unit = corpus::kStatesPerUnit, double var_floor = 1e-3);

struct EmResult {
  HmmModel model;
  std::vector<double> objective;  // total Viterbi log-likelihood per iteration
  std::vector<int> components;    // max mixture size in use per iteration
  std::vector<std::string> warnings;
};

/// Mixture sizes per iteration growing 1 -> 2 -> 4 over thirds.
std::vector<int> DefaultMixSchedule(int iters);

/// Viterbi EM: each iteration splits mixtures to the scheduled size, aligns
/// all data (objective), then re-estimates GMMs (one EM step per state) and
/// transitions from the alignment.
EmResult EmTrain(HmmModel model, const std::vector<TrainItem>& data, int iters,
                 const std::vector<int>& mix_schedule);

/// State-boundary agreement between two label sequences of one utterance.
/// Boundaries are frames whose label differs from the previous frame; the
/// k-th boundary of one sequence is matched with the k-th of the other.
struct BoundaryStats {
  int64_t total = 0;
  int64_t within = 0;  // |hyp - gold| <= tolerance
  double Fraction() const { return total ? static_cast<double>(within) / total : 1.0; }
  void Add(const BoundaryStats& o) { total += o.total; within += o.within; }
};
BoundaryStats CompareBoundaries(std::span<const int> gold, std::span<const int> hyp,
                                int tolerance);

ArrayStore ModelToStore(const HmmModel& model);
HmmModel ModelFromStore(const ArrayStore& store);

}  // namespace avsr::gmmhmm

#endif  // AVSR_GMM_HMM_H_

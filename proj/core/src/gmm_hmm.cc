// gmm_hmm.cc

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

#include "avsr/gmm_hmm.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>

#include <glog/logging.h>

#include "avsr/error.h"

namespace avsr::gmmhmm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMinTransition = 1e-3;
constexpr double kEmptyOccupancy = 1e-10;

double LogSumExp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Per-senone sufficient statistics for one EM pass.
struct StateStats {
  std::vector<double> occ;  // per component
  nn::Tensor sum_x;         // [K, D]
  nn::Tensor sum_xx;        // [K, D]
  double self_count = 0.0;
  double forward_count = 0.0;
};

}  // namespace

void Gmm::ComponentLogLikelihoods(std::span<const double> x, std::vector<double>& out) const {
  const int k_count = num_components();
  const int64_t d = dim();
  out.resize(k_count);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (int k = 0; k < k_count; ++k) {
    double ll = 0.0;
    const double* mu = means.data() + k * d;
    const double* var = vars.data() + k * d;
    for (int64_t j = 0; j < d; ++j) {
      const double diff = x[j] - mu[j];
      ll += log2pi + std::log(var[j]) + diff * diff / var[j];
    }
    out[k] = (weights[k] > 0.0 ? std::log(weights[k]) : kNegInf) - 0.5 * ll;
  }
}

double Gmm::LogLikelihood(std::span<const double> x) const {
  std::vector<double> comp;
  ComponentLogLikelihoods(x, comp);
  return LogSumExp(comp);
}

void HmmModel::Validate() const {
  if (num_units < 1 || states_per_unit < 1) throw ConfigError("hmm: empty model");
  if (static_cast<int>(states.size()) != NumSenones()) throw ConfigError("hmm: state count mismatch");
  for (const HmmState& s : states) {
    if (std::abs(s.self_loop + s.forward - 1.0) > 1e-9)
      throw ConfigError("hmm: transition probabilities must sum to 1");
    double wsum = 0.0;
    for (double w : s.gmm.weights) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-9) throw ConfigError("hmm: GMM weights must sum to 1");
    for (int64_t i = 0; i < s.gmm.vars.size(); ++i)
      if (s.gmm.vars[i] < var_floor) throw ConfigError("hmm: variance below floor");
  }
}

int SenoneInventory::Id(int unit, int state) const {
  if (unit < 0 || unit >= num_units_ || state < 0 || state >= states_per_unit_)
    throw ConfigError("senone inventory: (unit, state) out of range");
  return unit * states_per_unit_ + state;
}

std::pair<int, int> SenoneInventory::Pair(int id) const {
  if (id < 0 || id >= size()) throw ConfigError("senone inventory: id out of range");
  return {id / states_per_unit_, id % states_per_unit_};
}

SenoneInventory BuildInventory(const HmmModel& model) {
  return SenoneInventory(model.num_units, model.states_per_unit);
}

ChainPath ViterbiChain(const nn::Tensor& emission, std::span<const double> self_log,
                       std::span<const double> forward_log) {
  const int64_t t_count = emission.rows(), s_count = emission.cols();
  if (s_count == 0) throw InfeasibleError("alignment: empty state chain");
  if (t_count < s_count)
    throw InfeasibleError("alignment infeasible: " + std::to_string(t_count) +
                          " frames for a mandatory path of " + std::to_string(s_count) + " states");
  nn::RowMatrix delta = nn::RowMatrix::Constant(t_count, s_count, kNegInf);
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> advanced =
      Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(t_count, s_count);
  delta(0, 0) = emission.at(0, 0);
  for (int64_t t = 1; t < t_count; ++t) {
    // State s is reachable at t only if s <= t and the rest of the chain fits.
    const int64_t lo = std::max<int64_t>(0, s_count - (t_count - t));
    const int64_t hi = std::min<int64_t>(s_count - 1, t);
    for (int64_t s = lo; s <= hi; ++s) {
      const double stay = delta(t - 1, s) + self_log[s];
      const double move = s > 0 ? delta(t - 1, s - 1) + forward_log[s - 1] : kNegInf;
      if (move > stay) {
        delta(t, s) = move + emission.at(t, s);
        advanced(t, s) = 1;
      } else {
        delta(t, s) = stay + emission.at(t, s);
      }
    }
  }
  ChainPath path;
  path.score = delta(t_count - 1, s_count - 1);
  if (path.score == kNegInf) throw InfeasibleError("alignment: no path with finite score");
  path.chain_states.resize(t_count);
  int64_t s = s_count - 1;
  for (int64_t t = t_count - 1; t >= 0; --t) {
    path.chain_states[t] = static_cast<int>(s);
    if (t > 0 && advanced(t, s)) --s;
  }
  return path;
}

std::vector<int> TranscriptChain(const HmmModel& model, std::span<const int> transcript) {
  std::vector<int> chain;
  chain.reserve(transcript.size() * model.states_per_unit);
  for (int u : transcript) {
    if (u < 0 || u >= model.num_units) throw ConfigError("transcript unit out of range");
    for (int s = 0; s < model.states_per_unit; ++s) chain.push_back(u * model.states_per_unit + s);
  }
  return chain;
}

nn::Tensor ChainEmissions(const HmmModel& model, const nn::Tensor& features,
                          std::span<const int> chain) {
  if (features.cols() != model.dim)
    throw ConfigError("feature dim " + std::to_string(features.cols()) + " != model dim " +
                      std::to_string(model.dim));
  const int64_t t_count = features.rows();
  // Score each distinct senone once.
  std::vector<int> distinct(chain.begin(), chain.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  nn::RowMatrix cache(t_count, distinct.size());
  for (size_t k = 0; k < distinct.size(); ++k) {
    const Gmm& g = model.states[distinct[k]].gmm;
    for (int64_t t = 0; t < t_count; ++t)
      cache(t, k) = g.LogLikelihood(std::span<const double>(features.data() + t * model.dim, model.dim));
  }
  nn::Tensor em({t_count, static_cast<int64_t>(chain.size())});
  for (size_t c = 0; c < chain.size(); ++c) {
    const size_t k = std::lower_bound(distinct.begin(), distinct.end(), chain[c]) - distinct.begin();
    for (int64_t t = 0; t < t_count; ++t) em.at(t, c) = cache(t, k);
  }
  return em;
}

AlignmentLabels ForcedAlign(const HmmModel& model, const nn::Tensor& features,
                            std::span<const int> transcript, const std::string& utt_id) {
  if (transcript.empty()) throw ConfigError("forced alignment needs a nonempty transcript");
  const std::vector<int> chain = TranscriptChain(model, transcript);
  if (features.rows() < static_cast<int64_t>(chain.size()))
    throw InfeasibleError("alignment infeasible for " + (utt_id.empty() ? std::string("utterance") : utt_id) +
                          ": " + std::to_string(features.rows()) + " frames < " +
                          std::to_string(chain.size()) + " mandatory states");
  const nn::Tensor em = ChainEmissions(model, features, chain);
  std::vector<double> self_log(chain.size()), fwd_log(chain.size());
  for (size_t c = 0; c < chain.size(); ++c) {
    self_log[c] = std::log(model.states[chain[c]].self_loop);
    fwd_log[c] = std::log(model.states[chain[c]].forward);
  }
  const ChainPath path = ViterbiChain(em, self_log, fwd_log);
  AlignmentLabels out;
  out.utt_id = utt_id;
  out.num_senones = model.NumSenones();
  out.score = path.score;
  out.labels.reserve(path.chain_states.size());
  for (int c : path.chain_states) out.labels.push_back(chain[c]);
  return out;
}

double PathLogProb(const HmmModel& model, const nn::Tensor& features, std::span<const int> labels) {
  if (static_cast<int64_t>(labels.size()) != features.rows())
    throw ConfigError("PathLogProb: label count does not match frame count");
  double score = 0.0;
  for (size_t t = 0; t < labels.size(); ++t) {
    score += model.states[labels[t]].gmm.LogLikelihood(
        std::span<const double>(features.data() + t * model.dim, model.dim));
    if (t == 0) continue;
    const HmmState& prev = model.states[labels[t - 1]];
    score += std::log(labels[t] == labels[t - 1] ? prev.self_loop : prev.forward);
  }
  return score;
}

std::vector<TrainItem> TrainItems(const corpus::Corpus& corpus, const std::string& split) {
  std::vector<TrainItem> items;
  for (const corpus::Utterance* u : corpus.Split(split))
    items.push_back({u->id, &u->audio.frames, u->transcript});
  return items;
}

HmmModel FlatStart(const std::vector<TrainItem>& data, int num_units, int states_per_unit,
                   double var_floor) {
  if (data.empty()) throw TrainingError("flat start: no training utterances");
  HmmModel model;
  model.num_units = num_units;
  model.states_per_unit = states_per_unit;
  model.dim = data.front().features->cols();
  model.var_floor = var_floor;
  const int n_sen = model.NumSenones();
  const int64_t d = model.dim;
  std::vector<double> count(n_sen, 0.0);
  nn::RowMatrix sum = nn::RowMatrix::Zero(n_sen, d), sumsq = nn::RowMatrix::Zero(n_sen, d);
  for (const TrainItem& item : data) {
    const std::vector<int> chain = TranscriptChain(model, item.transcript);
    const int64_t t_count = item.features->rows();
    const int64_t s_count = static_cast<int64_t>(chain.size());
    for (int64_t c = 0; c < s_count; ++c) {
      const int64_t begin = c * t_count / s_count, end = (c + 1) * t_count / s_count;
      for (int64_t t = begin; t < end; ++t) {
        auto row = item.features->mat().row(t);
        sum.row(chain[c]) += row;
        sumsq.row(chain[c]) += row.cwiseProduct(row);
        count[chain[c]] += 1.0;
      }
    }
  }
  for (int u = 0; u < num_units; ++u)
    for (int s = 0; s < states_per_unit; ++s)
      if (count[u * states_per_unit + s] == 0.0)
        throw TrainingError("flat start: unit " + std::to_string(u) +
                            " (state " + std::to_string(s) + ") never observed in training data");
  model.states.resize(n_sen);
  for (int k = 0; k < n_sen; ++k) {
    HmmState& st = model.states[k];
    st.self_loop = st.forward = 0.5;
    st.gmm.weights = {1.0};
    st.gmm.means = nn::Tensor({1, d});
    st.gmm.vars = nn::Tensor({1, d});
    for (int64_t j = 0; j < d; ++j) {
      const double mean = sum(k, j) / count[k];
      st.gmm.means[j] = mean;
      st.gmm.vars[j] = std::max(sumsq(k, j) / count[k] - mean * mean, var_floor);
    }
  }
  return model;
}

std::vector<int> DefaultMixSchedule(int iters) {
  std::vector<int> sched(std::max(iters, 0));
  for (int i = 0; i < iters; ++i) sched[i] = i < iters / 3 ? 1 : (i < 2 * iters / 3 ? 2 : 4);
  return sched;
}

namespace {

void SplitLargest(Gmm& g) {
  const int k = static_cast<int>(std::max_element(g.weights.begin(), g.weights.end()) - g.weights.begin());
  const int64_t d = g.dim();
  const int k_count = g.num_components();
  nn::Tensor means({k_count + 1, d}), vars({k_count + 1, d});
  std::copy_n(g.means.data(), k_count * d, means.data());
  std::copy_n(g.vars.data(), k_count * d, vars.data());
  for (int64_t j = 0; j < d; ++j) {
    const double delta = 0.1 * std::sqrt(g.vars[k * d + j]);
    means[k * d + j] = g.means[k * d + j] + delta;
    means[k_count * d + j] = g.means[k * d + j] - delta;
    vars[k_count * d + j] = g.vars[k * d + j];
  }
  g.weights[k] *= 0.5;
  g.weights.push_back(g.weights[k]);
  g.means = std::move(means);
  g.vars = std::move(vars);
}

}  // namespace

EmResult EmTrain(HmmModel model, const std::vector<TrainItem>& data, int iters,
                 const std::vector<int>& mix_schedule) {
  if (iters < 1) throw ConfigError("em_train: iters must be >= 1");
  if (data.empty()) throw TrainingError("em_train: no training utterances");
  EmResult result;
  const int n_sen = model.NumSenones();
  const int64_t d = model.dim;
  for (int it = 0; it < iters; ++it) {
    const int target = it < static_cast<int>(mix_schedule.size()) ? mix_schedule[it]
                       : (mix_schedule.empty() ? 1 : mix_schedule.back());
    for (HmmState& st : model.states)
      while (st.gmm.num_components() < target) SplitLargest(st.gmm);

    std::vector<StateStats> stats(n_sen);
    for (int k = 0; k < n_sen; ++k) {
      const int kc = model.states[k].gmm.num_components();
      stats[k].occ.assign(kc, 0.0);
      stats[k].sum_x = nn::Tensor({kc, d});
      stats[k].sum_xx = nn::Tensor({kc, d});
    }
    double objective = 0.0;
    std::vector<double> comp;
    for (const TrainItem& item : data) {
      const AlignmentLabels ali = ForcedAlign(model, *item.features, item.transcript, item.id);
      objective += ali.score;
      for (size_t t = 0; t < ali.labels.size(); ++t) {
        const int sen = ali.labels[t];
        StateStats& ss = stats[sen];
        if (t + 1 < ali.labels.size()) {
          if (ali.labels[t + 1] == sen) ss.self_count += 1.0;
          else ss.forward_count += 1.0;
        }
        const double* x = item.features->data() + t * d;
        const Gmm& g = model.states[sen].gmm;
        g.ComponentLogLikelihoods(std::span<const double>(x, d), comp);
        const double total = LogSumExp(comp);
        for (int k = 0; k < g.num_components(); ++k) {
          const double post = std::exp(comp[k] - total);
          if (post == 0.0) continue;
          ss.occ[k] += post;
          double* sx = ss.sum_x.data() + k * d;
          double* sxx = ss.sum_xx.data() + k * d;
          for (int64_t j = 0; j < d; ++j) {
            sx[j] += post * x[j];
            sxx[j] += post * x[j] * x[j];
          }
        }
      }
    }
    result.objective.push_back(objective);
    int max_k = 0;
    for (const HmmState& st : model.states) max_k = std::max(max_k, st.gmm.num_components());
    result.components.push_back(max_k);

    // M-step.
    for (int sen = 0; sen < n_sen; ++sen) {
      StateStats& ss = stats[sen];
      HmmState& st = model.states[sen];
      const double trans_total = ss.self_count + ss.forward_count;
      if (trans_total > 0.0) {
        st.self_loop = std::clamp(ss.self_count / trans_total, kMinTransition, 1.0 - kMinTransition);
        st.forward = 1.0 - st.self_loop;
      }
      double occ_total = 0.0;
      for (double o : ss.occ) occ_total += o;
      if (occ_total <= 0.0) continue;  // state unseen this pass; keep parameters
      Gmm next;
      std::vector<double> means, vars;
      for (int k = 0; k < st.gmm.num_components(); ++k) {
        if (ss.occ[k] < kEmptyOccupancy) {
          std::string msg = "senone " + std::to_string(sen) + ": dropped empty mixture component " +
                            std::to_string(k) + " at iteration " + std::to_string(it);
          LOG(WARNING) << msg;
          result.warnings.push_back(std::move(msg));
          continue;
        }
        next.weights.push_back(ss.occ[k] / occ_total);
        for (int64_t j = 0; j < d; ++j) {
          const double mean = ss.sum_x[k * d + j] / ss.occ[k];
          means.push_back(mean);
          vars.push_back(std::max(ss.sum_xx[k * d + j] / ss.occ[k] - mean * mean, model.var_floor));
        }
      }
      double wsum = 0.0;
      for (double w : next.weights) wsum += w;
      for (double& w : next.weights) w /= wsum;
      const int kc = next.num_components();
      next.means = nn::Tensor::FromData({kc, d}, std::move(means));
      next.vars = nn::Tensor::FromData({kc, d}, std::move(vars));
      st.gmm = std::move(next);
    }
  }
  result.model = std::move(model);
  return result;
}

BoundaryStats CompareBoundaries(std::span<const int> gold, std::span<const int> hyp,
                                int tolerance) {
  auto boundaries = [](std::span<const int> l) {
    std::vector<int64_t> b;
    for (size_t t = 1; t < l.size(); ++t)
      if (l[t] != l[t - 1]) b.push_back(static_cast<int64_t>(t));
    return b;
  };
  const auto g = boundaries(gold), h = boundaries(hyp);
  BoundaryStats st;
  st.total = static_cast<int64_t>(std::max(g.size(), h.size()));
  for (size_t k = 0; k < std::min(g.size(), h.size()); ++k)
    if (std::abs(g[k] - h[k]) <= tolerance) ++st.within;
  return st;
}

ArrayStore ModelToStore(const HmmModel& model) {
  ArrayStore s;
  s.PutI64("hmm.meta", {3}, {model.num_units, model.states_per_unit, model.dim});
  s.PutF64("hmm.var_floor", nn::Tensor({1}, model.var_floor));
  nn::Tensor trans({model.NumSenones(), 2});
  for (int k = 0; k < model.NumSenones(); ++k) {
    trans.at(k, 0) = model.states[k].self_loop;
    trans.at(k, 1) = model.states[k].forward;
    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "hmm.gmm.%05d.", k);
    const Gmm& g = model.states[k].gmm;
    s.PutF64(std::string(prefix) + "weights",
             nn::Tensor::FromData({g.num_components()}, g.weights));
    s.PutF64(std::string(prefix) + "means", g.means);
    s.PutF64(std::string(prefix) + "vars", g.vars);
  }
  s.PutF64("hmm.transitions", trans);
  return s;
}

HmmModel ModelFromStore(const ArrayStore& s) {
  HmmModel m;
  const auto meta = s.GetI64("hmm.meta");
  if (meta.size() != 3) throw IoError("hmm.meta must hold 3 values");
  m.num_units = static_cast<int>(meta[0]);
  m.states_per_unit = static_cast<int>(meta[1]);
  m.dim = meta[2];
  m.var_floor = s.GetTensor("hmm.var_floor")[0];
  const nn::Tensor trans = s.GetTensor("hmm.transitions");
  m.states.resize(m.NumSenones());
  for (int k = 0; k < m.NumSenones(); ++k) {
    HmmState& st = m.states[k];
    st.self_loop = trans.at(k, 0);
    st.forward = trans.at(k, 1);
    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "hmm.gmm.%05d.", k);
    const nn::Tensor w = s.GetTensor(std::string(prefix) + "weights");
    st.gmm.weights.assign(w.data(), w.data() + w.size());
    st.gmm.means = s.GetTensor(std::string(prefix) + "means");
    st.gmm.vars = s.GetTensor(std::string(prefix) + "vars");
  }
  m.Validate();
  return m;
}

}  // namespace avsr::gmmhmm

// decoding.cc

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

#include "avsr/decoding.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "avsr/error.h"

namespace avsr::decoding {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct Running {
  std::vector<int> tokens;
  double att = 0.0, lm = 0.0, ctc = 0.0, combined = 0.0;
  CtcPrefixScorer::State ctc_state;
};

}  // namespace

void DecodeOptions::Validate() const {
  if (beam < 1) throw ConfigError("decode: beam must be >= 1");
  if (ctc_weight < 0.0 || ctc_weight > 1.0) throw ConfigError("decode: ctc_weight outside [0, 1]");
  if (lm_weight < 0.0) throw ConfigError("decode: lm_weight must be >= 0");
  if (nbest < 1) throw ConfigError("decode: nbest must be >= 1");
}

double CombineScores(double att, double ctc, double lm, const DecodeOptions& opt) {
  return (1.0 - opt.ctc_weight) * att + opt.ctc_weight * ctc + opt.lm_weight * lm;
}

CtcPrefixScorer::CtcPrefixScorer(const nn::Tensor& logprobs, int blank)
    : x_(logprobs), blank_(blank) {
  if (x_.ndim() != 2 || x_.rows() < 1)
    throw DegenerateInputError("ctc prefix scorer: empty encoder output");
  if (blank < 0 || blank >= x_.cols()) throw ConfigError("ctc prefix scorer: blank out of range");
}

CtcPrefixScorer::State CtcPrefixScorer::Initial() const {
  const int64_t t_max = x_.rows();
  State s;
  s.r_nb.assign(t_max, kNegInf);
  s.r_b.assign(t_max, kNegInf);
  double acc = 0.0;
  for (int64_t t = 0; t < t_max; ++t) {
    acc += x_.at(t, blank_);
    s.r_b[t] = acc;
  }
  s.prefix_score = 0.0;
  return s;
}

CtcPrefixScorer::State CtcPrefixScorer::Extend(const State& s, int c) const {
  if (c < 0 || c >= x_.cols() || c == blank_)
    throw ConfigError("ctc prefix scorer: invalid label " + std::to_string(c));
  const int64_t t_max = x_.rows();
  const bool empty = s.last < 0;
  State n;
  n.last = c;
  n.r_nb.assign(t_max, kNegInf);
  n.r_b.assign(t_max, kNegInf);
  n.r_nb[0] = empty ? x_.at(0, c) : kNegInf;
  double psi = n.r_nb[0];
  for (int64_t t = 1; t < t_max; ++t) {
    const double phi = LogAdd(s.r_b[t - 1], c == s.last ? kNegInf : s.r_nb[t - 1]);
    n.r_nb[t] = LogAdd(n.r_nb[t - 1], phi) + x_.at(t, c);
    n.r_b[t] = LogAdd(n.r_b[t - 1], n.r_nb[t - 1]) + x_.at(t, blank_);
    psi = LogAdd(psi, phi + x_.at(t, c));
  }
  n.prefix_score = psi;
  return n;
}

double CtcPrefixScorer::FinalScore(const State& s) const {
  return LogAdd(s.r_nb.back(), s.r_b.back());
}

double CtcPrefixLogProb(const nn::Tensor& logprobs, std::span<const int> prefix, int blank) {
  CtcPrefixScorer sc(logprobs, blank);
  CtcPrefixScorer::State s = sc.Initial();
  for (int c : prefix) s = sc.Extend(s, c);
  return s.prefix_score;
}

double CtcSequenceLogProb(const nn::Tensor& logprobs, std::span<const int> seq, int blank) {
  CtcPrefixScorer sc(logprobs, blank);
  CtcPrefixScorer::State s = sc.Initial();
  for (int c : seq) s = sc.Extend(s, c);
  return sc.FinalScore(s);
}

namespace {

using ScoreCache = std::map<std::vector<int>, std::vector<double>>;

const std::vector<double>& Cached(ScoreCache& cache, const NextTokenFn& fn,
                                  const std::vector<int>& prefix) {
  auto it = cache.find(prefix);
  if (it == cache.end()) it = cache.emplace(prefix, fn(prefix)).first;
  return it->second;
}

// One fixed-width search; finished hypotheses are appended to `ended`.
void SearchWidth(const SearchScorers& scorers, const DecodeOptions& opt, int width,
                 const CtcPrefixScorer& ctc, int max_len, ScoreCache& att_cache,
                 ScoreCache& lm_cache, std::vector<Hypothesis>& ended) {
  const int eos = scorers.vocab;
  const int classes = scorers.vocab + 1;
  const bool use_ctc = opt.ctc_weight > 0.0;
  const bool use_lm = opt.lm_weight > 0.0;
  const size_t first_ended = ended.size();
  std::vector<Running> running(1);
  running[0].ctc_state = ctc.Initial();
  auto finish = [&](const Running& r) {
    Hypothesis h;
    h.tokens = r.tokens;
    h.score_att = r.att;
    h.score_ctc = r.ctc;
    h.score_lm = r.lm;
    h.combined = r.combined;
    ended.push_back(std::move(h));
  };
  auto by_score = [](const auto& a, const auto& b) { return a.combined > b.combined; };

  for (int step = 0; step <= max_len && !running.empty(); ++step) {
    const bool force_eos = step == max_len;
    std::vector<Running> cand;
    for (const Running& r : running) {
      const std::vector<double>& att = Cached(att_cache, scorers.att, r.tokens);
      static const std::vector<double> kNoLm;
      const std::vector<double>& lm = use_lm ? Cached(lm_cache, scorers.lm, r.tokens) : kNoLm;
      for (int c = force_eos ? eos : 0; c < classes; ++c) {
        Running n;
        n.tokens = r.tokens;
        n.att = r.att + att[c];
        n.lm = use_lm ? r.lm + lm[c] : 0.0;
        if (c == eos) {
          n.ctc = use_ctc ? ctc.FinalScore(r.ctc_state) : 0.0;
        } else {
          n.tokens.push_back(c);
          if (use_ctc) {
            n.ctc_state = ctc.Extend(r.ctc_state, c);
            n.ctc = n.ctc_state.prefix_score;
          }
        }
        n.combined = CombineScores(n.att, n.ctc, n.lm, opt);
        cand.push_back(std::move(n));
      }
    }
    std::stable_sort(cand.begin(), cand.end(), by_score);
    if (static_cast<int>(cand.size()) > width) cand.resize(width);
    running.clear();
    // Candidates are ordered; eos candidates are exactly those not longer
    // than their parent, recognisable by the force flag or token count.
    for (Running& n : cand) {
      if (force_eos || static_cast<int>(n.tokens.size()) == step) {
        finish(n);
      } else {
        running.push_back(std::move(n));
      }
    }
    // Scores only decrease along an extension, so once nbest finished
    // hypotheses beat every running one the search cannot change.
    if (static_cast<int>(ended.size() - first_ended) >= opt.nbest && !running.empty()) {
      std::vector<Hypothesis> best(ended.begin() + first_ended, ended.end());
      std::stable_sort(best.begin(), best.end(), by_score);
      if (best[opt.nbest - 1].combined >= running.front().combined) running.clear();
    }
  }
}

}  // namespace

std::vector<Hypothesis> BeamSearch(const SearchScorers& scorers, const DecodeOptions& opt) {
  opt.Validate();
  if (!scorers.att) throw ConfigError("beam search: attention scorer missing");
  if (opt.lm_weight > 0.0 && !scorers.lm) throw ConfigError("beam search: lm_weight > 0 without LM");
  if (scorers.ctc_logprobs.ndim() != 2 || scorers.ctc_logprobs.cols() != scorers.vocab + 1)
    throw ConfigError("beam search: ctc log-probs must be [T, vocab + 1]");
  CtcPrefixScorer ctc(scorers.ctc_logprobs, scorers.vocab);
  const int max_len = opt.max_len >= 0 ? opt.max_len : 2 * ctc.frames();

  // Widths 1..beam share memoized scorer outputs; pooling their results
  // makes the best score non-decreasing in the beam width.
  ScoreCache att_cache, lm_cache;
  std::vector<Hypothesis> ended;
  for (int width = 1; width <= opt.beam; ++width)
    SearchWidth(scorers, opt, width, ctc, max_len, att_cache, lm_cache, ended);
  std::stable_sort(ended.begin(), ended.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.combined > b.combined; });
  std::vector<Hypothesis> out;
  std::set<std::vector<int>> seen;
  for (Hypothesis& h : ended) {
    if (static_cast<int>(out.size()) == opt.nbest) break;
    if (seen.insert(h.tokens).second) out.push_back(std::move(h));
  }
  return out;
}

int64_t EditDistance(std::span<const int> a, std::span<const int> b) {
  std::vector<int64_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double Cer(std::span<const int> ref, std::span<const int> hyp) {
  if (ref.empty()) throw DegenerateInputError("cer: empty reference");
  return static_cast<double>(EditDistance(ref, hyp)) / static_cast<double>(ref.size());
}

CerReport ScoreHypotheses(const std::map<std::string, std::vector<int>>& refs,
                          const std::map<std::string, std::vector<int>>& hyps) {
  CerReport rep;
  static const std::vector<int> kEmpty;
  for (const auto& [id, ref] : refs) {
    auto it = hyps.find(id);
    if (it == hyps.end()) rep.missing.push_back(id);
    const std::vector<int>& hyp = it == hyps.end() ? kEmpty : it->second;
    const int64_t e = EditDistance(ref, hyp);
    rep.per_utt[id] = Cer(ref, hyp);
    rep.errors += e;
    rep.ref_tokens += static_cast<int64_t>(ref.size());
  }
  if (rep.ref_tokens == 0) throw DegenerateInputError("cer: no reference tokens");
  rep.overall_cer = static_cast<double>(rep.errors) / static_cast<double>(rep.ref_tokens);
  return rep;
}

void TransitionNetwork::Add(std::span<const int> hyp) {
  if (systems == 0) {
    for (int t : hyp) slots.push_back({t});
    systems = 1;
    return;
  }
  const size_t n = slots.size(), m = hyp.size();
  auto has = [&](size_t s, int tok) {
    return std::find(slots[s].begin(), slots[s].end(), tok) != slots[s].end();
  };
  // d[i][j]: cost of aligning the first i slots with the first j tokens.
  std::vector<std::vector<int64_t>> d(n + 1, std::vector<int64_t>(m + 1, 0));
  for (size_t i = 1; i <= n; ++i) d[i][0] = d[i - 1][0] + (has(i - 1, kNull) ? 0 : 1);
  for (size_t j = 1; j <= m; ++j) d[0][j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (has(i - 1, hyp[j - 1]) ? 0 : 1),
                          d[i - 1][j] + (has(i - 1, kNull) ? 0 : 1), d[i][j - 1] + 1});

  // Trace back, preferring match/substitution, then deletion, then insertion.
  std::vector<std::vector<int>> out;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (has(i - 1, hyp[j - 1]) ? 0 : 1)) {
      out.push_back(slots[i - 1]);
      out.back().push_back(hyp[j - 1]);
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + (has(i - 1, kNull) ? 0 : 1)) {
      out.push_back(slots[i - 1]);
      out.back().push_back(kNull);
      --i;
    } else {
      std::vector<int> s(systems, kNull);
      s.push_back(hyp[j - 1]);
      out.push_back(std::move(s));
      --j;
    }
  }
  std::reverse(out.begin(), out.end());
  slots = std::move(out);
  ++systems;
}

std::vector<int> TransitionNetwork::Vote() const {
  std::vector<int> result;
  for (const auto& slot : slots) {
    int best = kNull;
    int best_count = -1;
    // Entries are in system order, so the first entry reaching the top
    // count belongs to the earliest system.
    for (size_t k = 0; k < slot.size(); ++k) {
      const int c = static_cast<int>(std::count(slot.begin(), slot.end(), slot[k]));
      if (c > best_count) {
        best = slot[k];
        best_count = c;
      }
    }
    if (best != kNull) result.push_back(best);
  }
  return result;
}

std::vector<int> Rover(const std::vector<std::vector<int>>& systems) {
  if (systems.size() < 2) throw ConfigError("rover: needs at least two systems");
  TransitionNetwork net;
  for (const auto& h : systems) net.Add(h);
  return net.Vote();
}

void WriteHypFile(const std::string& path, const std::vector<HypRecord>& rows,
                  const std::string& config_hash) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "# avsr-hyp v1 config_hash=" << config_hash << "\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.score);
    os << r.utt_id << " " << buf;
    for (int t : r.tokens) os << " " << t;
    os << "\n";
  }
}

std::vector<HypRecord> ReadHypFile(const std::string& path, std::string* config_hash) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read hypothesis file " + path);
  std::vector<HypRecord> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const size_t p = line.find("config_hash=");
      if (p != std::string::npos && config_hash != nullptr) *config_hash = line.substr(p + 12);
      continue;
    }
    std::istringstream ss(line);
    HypRecord r;
    if (!(ss >> r.utt_id >> r.score))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected '<utt-id> <score> <token>*'");
    int t;
    while (ss >> t) r.tokens.push_back(t);
    if (!ss.eof()) throw IoError(path + ":" + std::to_string(lineno) + ": bad token");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace avsr::decoding

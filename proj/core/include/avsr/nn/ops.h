// avsr/nn/ops.h

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

#ifndef AVSR_NN_OPS_H_
#define AVSR_NN_OPS_H_

#include <span>
#include <vector>

#include "avsr/nn/autograd.h"

namespace avsr::nn {

// Differentiable operations. Rank-2 operands are [rows, cols] with one frame
// (or token) per row. Every op validates shapes and throws ConfigError.

Var MatMul(const Var& a, const Var& b);
/// x[n,in] * w[in,out] + b[out]; `b` may be undefined.
Var Linear(const Var& x, const Var& w, const Var& b);

Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double s);
Var AddConstant(const Var& a, const Tensor& c);

Var Relu(const Var& x);
Var Sigmoid(const Var& x);
Var Swish(const Var& x);
/// Gated linear unit over columns: [n, 2c] -> [n, c].
Var Glu(const Var& x);

Var LayerNorm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Zeroes rows at index >= valid.
Var MaskRows(const Var& x, int64_t valid);
Var SliceRows(const Var& x, int64_t begin, int64_t end);
/// Appends zero rows up to `total` rows (no-op when already that long).
Var PadRows(const Var& x, int64_t total);
Var ConcatCols(const std::vector<Var>& xs);
/// Embedding lookup: rows of `table` selected by ids.
Var GatherRows(const Var& table, std::span<const int> ids);
Var Reshape(const Var& x, std::vector<int64_t> shape);

Var LogSoftmax(const Var& x);
Var Sum(const Var& x);

struct AttentionSpec {
  int n_head = 1;
  int64_t key_valid = -1;  // keys at index >= key_valid are masked; -1 = none
  bool causal = false;
};

/// Scaled dot-product attention over pre-projected q[Tq,d], k[Tk,d], v[Tk,d]
/// split into n_head heads. A query with every key masked yields a zero row.
Var MultiHeadAttention(const Var& q, const Var& k, const Var& v,
                       const AttentionSpec& spec);
/// Attention probabilities [n_head, Tq, Tk] for inspection.
Tensor AttentionWeights(const Tensor& q, const Tensor& k, const AttentionSpec& spec);

/// Depthwise temporal conv, same padding: x[T,C], w[K,C], b[C], K odd.
Var DepthwiseConv1d(const Var& x, const Var& w, const Var& b);
/// Temporal conv: x[T,Cin], w[K*Cin, Cout], b[Cout].
Var Conv1d(const Var& x, const Var& w, const Var& b, int kernel, int stride, int pad);
/// Transposed temporal conv: x[T,Cin], w[Cin, K*Cout], b[Cout];
/// output length (T-1)*stride - 2*pad + kernel.
Var ConvTranspose1d(const Var& x, const Var& w, const Var& b, int kernel,
                    int stride, int pad);

struct Conv3dSpec {
  int kt = 1, kh = 3, kw = 3;
  int st = 1, sh = 1, sw = 1;
  int pt = 0, ph = 1, pw = 1;
};
/// Channels-last 3-D conv: x[T,H,W,Cin], w[kt*kh*kw*Cin, Cout], b[Cout].
Var Conv3d(const Var& x, const Var& w, const Var& b, const Conv3dSpec& spec);
/// [T,H,W,C] -> [T,C].
Var GlobalAvgPool2d(const Var& x);

/// Sum over rows of label-smoothed cross entropy against `targets`.
/// smoothing = 0 gives plain negative log-likelihood.
Var CrossEntropy(const Var& logits, std::span<const int> targets, double smoothing = 0.0);

/// -log P(target | logits) under CTC with the given blank index.
/// Throws InfeasibleError when the sequence is too short for the target.
Var CtcLoss(const Var& logits, std::span<const int> target, int blank);

/// Minimum frame count CTC needs for `target` (length plus repeats).
int64_t CtcMinFrames(std::span<const int> target);

Tensor SinusoidalPositions(int64_t length, int64_t dim);

}  // namespace avsr::nn

#endif  // AVSR_NN_OPS_H_

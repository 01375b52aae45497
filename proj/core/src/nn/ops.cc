// nn/ops.cc

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

#include "avsr/nn/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "avsr/error.h"

namespace avsr::nn {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void Require(bool cond, const char* what) {
  if (!cond) throw ConfigError(what);
}

void RequireRank2(const Var& v, const char* op) {
  if (v.value().ndim() != 2)
    throw ConfigError(std::string(op) + ": expected rank-2 input, got " +
                      v.value().ShapeString());
}

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

Node& In(Node& self, size_t i) { return *self.inputs[i]; }

}  // namespace

Var MatMul(const Var& a, const Var& b) {
  RequireRank2(a, "MatMul");
  RequireRank2(b, "MatMul");
  if (a.cols() != b.rows())
    throw ConfigError("MatMul inner dimension mismatch " + a.value().ShapeString() +
                      " x " + b.value().ShapeString());
  Tensor out({a.rows(), b.cols()});
  out.mat().noalias() = a.value().mat() * b.value().mat();
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    Node& A = In(self, 0);
    Node& B = In(self, 1);
    if (A.requires_grad) A.GradRef().mat().noalias() += self.grad.mat() * B.value.mat().transpose();
    if (B.requires_grad) B.GradRef().mat().noalias() += A.value.mat().transpose() * self.grad.mat();
  });
}

Var Linear(const Var& x, const Var& w, const Var& b) {
  RequireRank2(x, "Linear");
  RequireRank2(w, "Linear");
  if (x.cols() != w.rows())
    throw ConfigError("Linear: input width " + std::to_string(x.cols()) +
                      " does not match weight " + w.value().ShapeString());
  Tensor out({x.rows(), w.cols()});
  out.mat().noalias() = x.value().mat() * w.value().mat();
  const bool has_bias = b.defined();
  if (has_bias) {
    Require(b.value().size() == w.cols(), "Linear: bias size mismatch");
    Eigen::Map<const Eigen::RowVectorXd> bias(b.value().data(), w.cols());
    out.mat().rowwise() += bias;
  }
  std::vector<Var> inputs = {x, w};
  if (has_bias) inputs.push_back(b);
  return MakeResult(std::move(out), std::move(inputs), [has_bias](Node& self) {
    Node& X = In(self, 0);
    Node& W = In(self, 1);
    if (X.requires_grad) X.GradRef().mat().noalias() += self.grad.mat() * W.value.mat().transpose();
    if (W.requires_grad) W.GradRef().mat().noalias() += X.value.mat().transpose() * self.grad.mat();
    if (has_bias && In(self, 2).requires_grad) {
      Tensor& gb = In(self, 2).GradRef();
      Eigen::Map<Eigen::RowVectorXd> gbias(gb.data(), gb.size());
      gbias += self.grad.mat().colwise().sum();
    }
  });
}

Var Add(const Var& a, const Var& b) {
  if (!SameShape(a.value(), b.value()))
    throw ConfigError("Add shape mismatch " + a.value().ShapeString() + " vs " +
                      b.value().ShapeString());
  Tensor out = a.value();
  out.AddScaled(b.value());
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    for (size_t i = 0; i < 2; ++i)
      if (In(self, i).requires_grad) In(self, i).GradRef().AddScaled(self.grad);
  });
}

Var Sub(const Var& a, const Var& b) {
  if (!SameShape(a.value(), b.value()))
    throw ConfigError("Sub shape mismatch");
  Tensor out = a.value();
  out.AddScaled(b.value(), -1.0);
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    if (In(self, 0).requires_grad) In(self, 0).GradRef().AddScaled(self.grad);
    if (In(self, 1).requires_grad) In(self, 1).GradRef().AddScaled(self.grad, -1.0);
  });
}

Var Mul(const Var& a, const Var& b) {
  if (!SameShape(a.value(), b.value()))
    throw ConfigError("Mul shape mismatch");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    Node& A = In(self, 0);
    Node& B = In(self, 1);
    if (A.requires_grad) {
      Tensor& g = A.GradRef();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      Tensor& g = B.GradRef();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
    }
  });
}

Var Scale(const Var& a, double s) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
  return MakeResult(std::move(out), {a}, [s](Node& self) {
    In(self, 0).GradRef().AddScaled(self.grad, s);
  });
}

Var AddConstant(const Var& a, const Tensor& c) {
  if (a.value().size() != c.size()) throw ConfigError("AddConstant shape mismatch");
  Tensor out = a.value();
  out.AddScaled(c);
  return MakeResult(std::move(out), {a}, [](Node& self) {
    In(self, 0).GradRef().AddScaled(self.grad);
  });
}

Var Relu(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
  return MakeResult(std::move(out), {x}, [](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    for (int64_t i = 0; i < g.size(); ++i)
      if (self.value[i] > 0.0) g[i] += self.grad[i];
  });
}

Var Sigmoid(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return MakeResult(std::move(out), {x}, [](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    for (int64_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var Swish(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] / (1.0 + std::exp(-out[i]));
  return MakeResult(std::move(out), {x}, [](Node& self) {
    Node& X = In(self, 0);
    Tensor& g = X.GradRef();
    for (int64_t i = 0; i < g.size(); ++i) {
      const double v = X.value[i];
      const double s = 1.0 / (1.0 + std::exp(-v));
      g[i] += self.grad[i] * (s + v * s * (1.0 - s));
    }
  });
}

Var Glu(const Var& x) {
  RequireRank2(x, "Glu");
  Require(x.cols() % 2 == 0, "Glu: odd column count");
  const int64_t n = x.rows(), c = x.cols() / 2;
  Tensor out({n, c});
  const Tensor& xv = x.value();
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < c; ++j)
      out.at(r, j) = xv.at(r, j) / (1.0 + std::exp(-xv.at(r, j + c)));
  return MakeResult(std::move(out), {x}, [n, c](Node& self) {
    Node& X = In(self, 0);
    Tensor& g = X.GradRef();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t j = 0; j < c; ++j) {
        const double a = X.value.at(r, j);
        const double s = 1.0 / (1.0 + std::exp(-X.value.at(r, j + c)));
        const double go = self.grad.at(r, j);
        g.at(r, j) += go * s;
        g.at(r, j + c) += go * a * s * (1.0 - s);
      }
  });
}

Var LayerNorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  RequireRank2(x, "LayerNorm");
  const int64_t n = x.rows(), d = x.cols();
  Require(gamma.value().size() == d && beta.value().size() == d,
          "LayerNorm: gain/bias size mismatch");
  Tensor out({n, d});
  auto xhat = std::make_shared<Tensor>(std::vector<int64_t>{n, d});
  auto rstd = std::make_shared<std::vector<double>>(n);
  const Tensor& xv = x.value();
  for (int64_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += xv.at(r, j);
    mean /= d;
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = xv.at(r, j) - mean;
      var += c * c;
    }
    var /= d;
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int64_t j = 0; j < d; ++j) {
      const double h = (xv.at(r, j) - mean) * rs;
      xhat->at(r, j) = h;
      out.at(r, j) = h * gamma.value()[j] + beta.value()[j];
    }
  }
  return MakeResult(std::move(out), {x, gamma, beta}, [xhat, rstd, n, d](Node& self) {
    Node& X = In(self, 0);
    Node& G = In(self, 1);
    Node& B = In(self, 2);
    if (G.requires_grad || B.requires_grad) {
      Tensor& gg = G.GradRef();
      Tensor& gb = B.GradRef();
      for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < d; ++j) {
          gg[j] += self.grad.at(r, j) * xhat->at(r, j);
          gb[j] += self.grad.at(r, j);
        }
    }
    if (X.requires_grad) {
      Tensor& gx = X.GradRef();
      std::vector<double> dxhat(d);
      for (int64_t r = 0; r < n; ++r) {
        double sum = 0.0, sum_h = 0.0;
        for (int64_t j = 0; j < d; ++j) {
          dxhat[j] = self.grad.at(r, j) * G.value[j];
          sum += dxhat[j];
          sum_h += dxhat[j] * xhat->at(r, j);
        }
        const double rs = (*rstd)[r];
        for (int64_t j = 0; j < d; ++j)
          gx.at(r, j) += rs * (dxhat[j] - sum / d - xhat->at(r, j) * sum_h / d);
      }
    }
  });
}

Var MaskRows(const Var& x, int64_t valid) {
  const int64_t n = x.value().dim(0);
  if (valid >= n) return x;
  valid = std::max<int64_t>(valid, 0);
  const int64_t row = x.value().size() / std::max<int64_t>(n, 1);
  Tensor out = x.value();
  std::fill(out.data() + valid * row, out.data() + out.size(), 0.0);
  return MakeResult(std::move(out), {x}, [valid, row](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    for (int64_t i = 0; i < valid * row; ++i) g[i] += self.grad[i];
  });
}

Var SliceRows(const Var& x, int64_t begin, int64_t end) {
  const int64_t n = x.value().dim(0);
  if (begin < 0 || end > n || begin > end) throw ConfigError("SliceRows out of range");
  const int64_t row = x.value().size() / std::max<int64_t>(n, 1);
  std::vector<int64_t> shape = x.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy(x.value().data() + begin * row, x.value().data() + end * row, out.data());
  return MakeResult(std::move(out), {x}, [begin, row](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    for (int64_t i = 0; i < self.grad.size(); ++i) g[begin * row + i] += self.grad[i];
  });
}

Var PadRows(const Var& x, int64_t total) {
  const int64_t n = x.value().dim(0);
  if (total <= n) return x;
  const int64_t row = x.value().size() / std::max<int64_t>(n, 1);
  std::vector<int64_t> shape = x.shape();
  shape[0] = total;
  Tensor out(shape);
  std::copy(x.value().data(), x.value().data() + x.value().size(), out.data());
  return MakeResult(std::move(out), {x}, [n, row](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    for (int64_t i = 0; i < n * row; ++i) g[i] += self.grad[i];
  });
}

Var ConcatCols(const std::vector<Var>& xs) {
  Require(!xs.empty(), "ConcatCols: no inputs");
  const int64_t n = xs[0].rows();
  int64_t total = 0;
  std::vector<int64_t> offsets;
  for (const Var& v : xs) {
    RequireRank2(v, "ConcatCols");
    if (v.rows() != n) throw ConfigError("ConcatCols: ragged row counts");
    offsets.push_back(total);
    total += v.cols();
  }
  Tensor out({n, total});
  for (size_t k = 0; k < xs.size(); ++k)
    out.mat().block(0, offsets[k], n, xs[k].cols()) = xs[k].value().mat();
  return MakeResult(std::move(out), xs, [offsets, n](Node& self) {
    for (size_t k = 0; k < self.inputs.size(); ++k) {
      Node& X = In(self, k);
      if (!X.requires_grad) continue;
      X.GradRef().mat() += self.grad.mat().block(0, offsets[k], n, X.value.cols());
    }
  });
}

Var GatherRows(const Var& table, std::span<const int> ids) {
  RequireRank2(table, "GatherRows");
  const int64_t d = table.cols();
  Tensor out({static_cast<int64_t>(ids.size()), d});
  std::vector<int> idv(ids.begin(), ids.end());
  for (size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || idv[i] >= table.rows()) throw ConfigError("GatherRows: id out of range");
    out.mat().row(i) = table.value().mat().row(idv[i]);
  }
  return MakeResult(std::move(out), {table}, [idv](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    for (size_t i = 0; i < idv.size(); ++i) g.mat().row(idv[i]) += self.grad.mat().row(i);
  });
}

Var Reshape(const Var& x, std::vector<int64_t> shape) {
  Tensor out = x.value().Reshaped(std::move(shape));
  return MakeResult(std::move(out), {x}, [](Node& self) {
    In(self, 0).GradRef().AddScaled(self.grad);
  });
}

Var LogSoftmax(const Var& x) {
  RequireRank2(x, "LogSoftmax");
  Tensor out = x.value();
  for (int64_t r = 0; r < out.rows(); ++r) {
    double m = kNegInf;
    for (int64_t j = 0; j < out.cols(); ++j) m = std::max(m, out.at(r, j));
    double s = 0.0;
    for (int64_t j = 0; j < out.cols(); ++j) s += std::exp(out.at(r, j) - m);
    const double lse = m + std::log(s);
    for (int64_t j = 0; j < out.cols(); ++j) out.at(r, j) -= lse;
  }
  return MakeResult(std::move(out), {x}, [](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    for (int64_t r = 0; r < g.rows(); ++r) {
      double s = 0.0;
      for (int64_t j = 0; j < g.cols(); ++j) s += self.grad.at(r, j);
      for (int64_t j = 0; j < g.cols(); ++j)
        g.at(r, j) += self.grad.at(r, j) - std::exp(self.value.at(r, j)) * s;
    }
  });
}

Var Sum(const Var& x) {
  double s = 0.0;
  for (int64_t i = 0; i < x.value().size(); ++i) s += x.value()[i];
  return MakeResult(Tensor({1}, s), {x}, [](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    const double go = self.grad[0];
    for (int64_t i = 0; i < g.size(); ++i) g[i] += go;
  });
}

namespace {

// Fills probs [H][Tq][Tk]; fully-masked rows stay zero.
void AttentionProbs(const Tensor& q, const Tensor& k, const AttentionSpec& spec,
                    std::vector<RowMatrix>& probs) {
  const int64_t tq = q.rows(), tk = k.rows(), d = q.cols();
  const int h = spec.n_head;
  const int64_t dk = d / h;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const int64_t kvalid = spec.key_valid < 0 ? tk : std::min(spec.key_valid, tk);
  probs.assign(h, RowMatrix::Zero(tq, tk));
  for (int hh = 0; hh < h; ++hh) {
    RowMatrix s = q.mat().middleCols(hh * dk, dk) * k.mat().middleCols(hh * dk, dk).transpose();
    for (int64_t i = 0; i < tq; ++i) {
      const int64_t limit = spec.causal ? std::min<int64_t>(kvalid, i + 1) : kvalid;
      if (limit <= 0) continue;
      double m = kNegInf;
      for (int64_t j = 0; j < limit; ++j) m = std::max(m, s(i, j) * scale);
      double z = 0.0;
      for (int64_t j = 0; j < limit; ++j) {
        const double e = std::exp(s(i, j) * scale - m);
        probs[hh](i, j) = e;
        z += e;
      }
      for (int64_t j = 0; j < limit; ++j) probs[hh](i, j) /= z;
    }
  }
}

}  // namespace

Tensor AttentionWeights(const Tensor& q, const Tensor& k, const AttentionSpec& spec) {
  if (q.cols() != k.cols() || q.cols() % spec.n_head != 0)
    throw ConfigError("AttentionWeights: dimension mismatch");
  std::vector<RowMatrix> probs;
  AttentionProbs(q, k, spec, probs);
  const int64_t tq = q.rows(), tk = k.rows();
  Tensor out({spec.n_head, tq, tk});
  for (int hh = 0; hh < spec.n_head; ++hh)
    for (int64_t i = 0; i < tq; ++i)
      for (int64_t j = 0; j < tk; ++j) out[(hh * tq + i) * tk + j] = probs[hh](i, j);
  return out;
}

Var MultiHeadAttention(const Var& q, const Var& k, const Var& v, const AttentionSpec& spec) {
  RequireRank2(q, "MultiHeadAttention");
  RequireRank2(k, "MultiHeadAttention");
  RequireRank2(v, "MultiHeadAttention");
  const int64_t d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows())
    throw ConfigError("MultiHeadAttention: q/k/v dimension mismatch");
  if (spec.n_head <= 0 || d % spec.n_head != 0)
    throw ConfigError("MultiHeadAttention: d_model not divisible by n_head");
  auto probs = std::make_shared<std::vector<RowMatrix>>();
  AttentionProbs(q.value(), k.value(), spec, *probs);
  const int h = spec.n_head;
  const int64_t dk = d / h;
  Tensor out({q.rows(), d});
  for (int hh = 0; hh < h; ++hh)
    out.mat().middleCols(hh * dk, dk).noalias() = (*probs)[hh] * v.value().mat().middleCols(hh * dk, dk);
  return MakeResult(std::move(out), {q, k, v}, [probs, h, dk](Node& self) {
    Node& Q = In(self, 0);
    Node& K = In(self, 1);
    Node& V = In(self, 2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int hh = 0; hh < h; ++hh) {
      const RowMatrix& p = (*probs)[hh];
      auto go = self.grad.mat().middleCols(hh * dk, dk);
      if (V.requires_grad) V.GradRef().mat().middleCols(hh * dk, dk).noalias() += p.transpose() * go;
      if (!Q.requires_grad && !K.requires_grad) continue;
      RowMatrix dp = go * V.value.mat().middleCols(hh * dk, dk).transpose();
      RowMatrix ds = p.cwiseProduct(dp);
      Eigen::VectorXd rowdot = ds.rowwise().sum();
      ds -= p.cwiseProduct(rowdot.replicate(1, p.cols()));
      ds *= scale;
      if (Q.requires_grad)
        Q.GradRef().mat().middleCols(hh * dk, dk).noalias() += ds * K.value.mat().middleCols(hh * dk, dk);
      if (K.requires_grad)
        K.GradRef().mat().middleCols(hh * dk, dk).noalias() += ds.transpose() * Q.value.mat().middleCols(hh * dk, dk);
    }
  });
}

Var DepthwiseConv1d(const Var& x, const Var& w, const Var& b) {
  RequireRank2(x, "DepthwiseConv1d");
  RequireRank2(w, "DepthwiseConv1d");
  const int64_t t = x.rows(), c = x.cols(), kk = w.rows();
  if (w.cols() != c || kk % 2 == 0 || b.value().size() != c)
    throw ConfigError("DepthwiseConv1d: weight shape mismatch");
  const int64_t pad = (kk - 1) / 2;
  Tensor out({t, c});
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  for (int64_t i = 0; i < t; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = b.value()[ch];
      for (int64_t k = 0; k < kk; ++k) {
        const int64_t src = i + k - pad;
        if (src >= 0 && src < t) s += wv.at(k, ch) * xv.at(src, ch);
      }
      out.at(i, ch) = s;
    }
  return MakeResult(std::move(out), {x, w, b}, [t, c, kk, pad](Node& self) {
    Node& X = In(self, 0);
    Node& W = In(self, 1);
    Node& B = In(self, 2);
    Tensor* gx = X.requires_grad ? &X.GradRef() : nullptr;
    Tensor* gw = W.requires_grad ? &W.GradRef() : nullptr;
    Tensor* gb = B.requires_grad ? &B.GradRef() : nullptr;
    for (int64_t i = 0; i < t; ++i)
      for (int64_t ch = 0; ch < c; ++ch) {
        const double go = self.grad.at(i, ch);
        if (gb) (*gb)[ch] += go;
        for (int64_t k = 0; k < kk; ++k) {
          const int64_t src = i + k - pad;
          if (src < 0 || src >= t) continue;
          if (gx) gx->at(src, ch) += go * W.value.at(k, ch);
          if (gw) gw->at(k, ch) += go * X.value.at(src, ch);
        }
      }
  });
}

Var Conv1d(const Var& x, const Var& w, const Var& b, int kernel, int stride, int pad) {
  RequireRank2(x, "Conv1d");
  RequireRank2(w, "Conv1d");
  const int64_t t = x.rows(), cin = x.cols();
  if (w.rows() != kernel * cin)
    throw ConfigError("Conv1d: weight rows " + std::to_string(w.rows()) +
                      " != kernel*in_channels " + std::to_string(kernel * cin));
  const int64_t tout = (t + 2 * pad - kernel) / stride + 1;
  if (tout <= 0) throw ConfigError("Conv1d: input too short");
  auto cols = std::make_shared<Tensor>(std::vector<int64_t>{tout, kernel * cin});
  for (int64_t o = 0; o < tout; ++o)
    for (int k = 0; k < kernel; ++k) {
      const int64_t src = o * stride - pad + k;
      if (src < 0 || src >= t) continue;
      std::copy(x.value().data() + src * cin, x.value().data() + (src + 1) * cin,
                cols->data() + o * kernel * cin + k * cin);
    }
  Var colv = Constant(*cols);
  Var y = Linear(colv, w, b);
  // Route the input gradient through the im2col scatter.
  return MakeResult(y.value(), {x, w, b},
                    [cols, t, cin, tout, kernel, stride, pad](Node& self) {
    Node& X = In(self, 0);
    Node& W = In(self, 1);
    Node& B = In(self, 2);
    if (W.requires_grad) W.GradRef().mat().noalias() += cols->mat().transpose() * self.grad.mat();
    if (B.requires_grad) {
      Tensor& gb = B.GradRef();
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), gb.size()) += self.grad.mat().colwise().sum();
    }
    if (X.requires_grad) {
      RowMatrix dcols = self.grad.mat() * W.value.mat().transpose();
      Tensor& gx = X.GradRef();
      for (int64_t o = 0; o < tout; ++o)
        for (int k = 0; k < kernel; ++k) {
          const int64_t src = o * stride - pad + k;
          if (src < 0 || src >= t) continue;
          for (int64_t c = 0; c < cin; ++c) gx.at(src, c) += dcols(o, k * cin + c);
        }
    }
  });
}

Var ConvTranspose1d(const Var& x, const Var& w, const Var& b, int kernel, int stride,
                    int pad) {
  RequireRank2(x, "ConvTranspose1d");
  RequireRank2(w, "ConvTranspose1d");
  const int64_t t = x.rows(), cin = x.cols();
  if (w.rows() != cin || w.cols() % kernel != 0)
    throw ConfigError("ConvTranspose1d: weight shape mismatch " + w.value().ShapeString());
  const int64_t cout = w.cols() / kernel;
  if (b.value().size() != cout) throw ConfigError("ConvTranspose1d: bias size mismatch");
  const int64_t tout = (t - 1) * stride - 2 * pad + kernel;
  if (tout <= 0) throw ConfigError("ConvTranspose1d: empty output");
  RowMatrix full = x.value().mat() * w.value().mat();
  Tensor out({tout, cout});
  for (int64_t o = 0; o < tout; ++o) out.mat().row(o) = Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), cout);
  for (int64_t i = 0; i < t; ++i)
    for (int k = 0; k < kernel; ++k) {
      const int64_t dst = i * stride - pad + k;
      if (dst < 0 || dst >= tout) continue;
      out.mat().row(dst) += full.block(i, k * cout, 1, cout);
    }
  return MakeResult(std::move(out), {x, w, b},
                    [t, cout, tout, kernel, stride, pad](Node& self) {
    Node& X = In(self, 0);
    Node& W = In(self, 1);
    Node& B = In(self, 2);
    RowMatrix dfull = RowMatrix::Zero(t, kernel * cout);
    for (int64_t i = 0; i < t; ++i)
      for (int k = 0; k < kernel; ++k) {
        const int64_t dst = i * stride - pad + k;
        if (dst < 0 || dst >= tout) continue;
        dfull.block(i, k * cout, 1, cout) = self.grad.mat().row(dst);
      }
    if (X.requires_grad) X.GradRef().mat().noalias() += dfull * W.value.mat().transpose();
    if (W.requires_grad) W.GradRef().mat().noalias() += X.value.mat().transpose() * dfull;
    if (B.requires_grad) {
      Tensor& gb = B.GradRef();
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), gb.size()) += self.grad.mat().colwise().sum();
    }
  });
}

Var Conv3d(const Var& x, const Var& w, const Var& b, const Conv3dSpec& s) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4) throw ConfigError("Conv3d: expected [T,H,W,C] input, got " + xv.ShapeString());
  const int64_t t = xv.dim(0), hh = xv.dim(1), ww = xv.dim(2), cin = xv.dim(3);
  const int64_t patch = static_cast<int64_t>(s.kt) * s.kh * s.kw * cin;
  RequireRank2(w, "Conv3d");
  if (w.rows() != patch)
    throw ConfigError("Conv3d: weight rows " + std::to_string(w.rows()) +
                      " != patch size " + std::to_string(patch));
  const int64_t cout = w.cols();
  const int64_t to = (t + 2 * s.pt - s.kt) / s.st + 1;
  const int64_t ho = (hh + 2 * s.ph - s.kh) / s.sh + 1;
  const int64_t wo = (ww + 2 * s.pw - s.kw) / s.sw + 1;
  if (to <= 0 || ho <= 0 || wo <= 0) throw ConfigError("Conv3d: input smaller than kernel");
  auto cols = std::make_shared<Tensor>(std::vector<int64_t>{to * ho * wo, patch});
  double* cd = cols->data();
  const double* xd = xv.data();
  for (int64_t ot = 0; ot < to; ++ot)
    for (int64_t oh = 0; oh < ho; ++oh)
      for (int64_t ow = 0; ow < wo; ++ow) {
        double* row = cd + ((ot * ho + oh) * wo + ow) * patch;
        int64_t off = 0;
        for (int a = 0; a < s.kt; ++a) {
          const int64_t it = ot * s.st - s.pt + a;
          for (int bb = 0; bb < s.kh; ++bb) {
            const int64_t ih = oh * s.sh - s.ph + bb;
            for (int c = 0; c < s.kw; ++c, off += cin) {
              const int64_t iw = ow * s.sw - s.pw + c;
              if (it < 0 || it >= t || ih < 0 || ih >= hh || iw < 0 || iw >= ww) continue;
              std::copy(xd + ((it * hh + ih) * ww + iw) * cin,
                        xd + ((it * hh + ih) * ww + iw + 1) * cin, row + off);
            }
          }
        }
      }
  Tensor out({to * ho * wo, cout});
  out.mat().noalias() = cols->mat() * w.value().mat();
  out.mat().rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), cout);
  out = out.Reshaped({to, ho, wo, cout});
  return MakeResult(std::move(out), {x, w, b},
                    [cols, s, t, hh, ww, cin, to, ho, wo, cout, patch](Node& self) {
    Node& X = In(self, 0);
    Node& W = In(self, 1);
    Node& B = In(self, 2);
    ConstMatrixMap g(self.grad.data(), to * ho * wo, cout);
    if (W.requires_grad) W.GradRef().mat().noalias() += cols->mat().transpose() * g;
    if (B.requires_grad) {
      Tensor& gb = B.GradRef();
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), gb.size()) += g.colwise().sum();
    }
    if (!X.requires_grad) return;
    RowMatrix dcols = g * W.value.mat().transpose();
    double* gx = X.GradRef().data();
    for (int64_t ot = 0; ot < to; ++ot)
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow) {
          const double* row = dcols.data() + ((ot * ho + oh) * wo + ow) * patch;
          int64_t off = 0;
          for (int a = 0; a < s.kt; ++a) {
            const int64_t it = ot * s.st - s.pt + a;
            for (int bb = 0; bb < s.kh; ++bb) {
              const int64_t ih = oh * s.sh - s.ph + bb;
              for (int c = 0; c < s.kw; ++c, off += cin) {
                const int64_t iw = ow * s.sw - s.pw + c;
                if (it < 0 || it >= t || ih < 0 || ih >= hh || iw < 0 || iw >= ww) continue;
                double* dst = gx + ((it * hh + ih) * ww + iw) * cin;
                for (int64_t ch = 0; ch < cin; ++ch) dst[ch] += row[off + ch];
              }
            }
          }
        }
  });
}

Var GlobalAvgPool2d(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4) throw ConfigError("GlobalAvgPool2d: expected [T,H,W,C]");
  const int64_t t = xv.dim(0), area = xv.dim(1) * xv.dim(2), c = xv.dim(3);
  Tensor out({t, c});
  for (int64_t i = 0; i < t; ++i)
    for (int64_t p = 0; p < area; ++p)
      for (int64_t ch = 0; ch < c; ++ch) out.at(i, ch) += xv[(i * area + p) * c + ch];
  const double inv = 1.0 / static_cast<double>(area);
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= inv;
  return MakeResult(std::move(out), {x}, [t, area, c, inv](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    for (int64_t i = 0; i < t; ++i)
      for (int64_t p = 0; p < area; ++p)
        for (int64_t ch = 0; ch < c; ++ch) g[(i * area + p) * c + ch] += self.grad.at(i, ch) * inv;
  });
}

Var CrossEntropy(const Var& logits, std::span<const int> targets, double smoothing) {
  RequireRank2(logits, "CrossEntropy");
  const int64_t n = logits.rows(), c = logits.cols();
  if (static_cast<int64_t>(targets.size()) != n)
    throw ConfigError("CrossEntropy: " + std::to_string(n) + " logit rows vs " +
                      std::to_string(targets.size()) + " targets");
  auto probs = std::make_shared<Tensor>(std::vector<int64_t>{n, c});
  std::vector<int> tg(targets.begin(), targets.end());
  double loss = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    if (tg[r] < 0 || tg[r] >= c) throw ConfigError("CrossEntropy: target out of range");
    double m = kNegInf;
    for (int64_t j = 0; j < c; ++j) m = std::max(m, logits.value().at(r, j));
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(logits.value().at(r, j) - m);
    const double lse = m + std::log(z);
    double mean_lp = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double lp = logits.value().at(r, j) - lse;
      probs->at(r, j) = std::exp(lp);
      mean_lp += lp;
    }
    mean_lp /= c;
    const double lpt = logits.value().at(r, tg[r]) - lse;
    loss += -(1.0 - smoothing) * lpt - smoothing * mean_lp;
  }
  return MakeResult(Tensor({1}, loss), {logits}, [probs, tg, smoothing, n, c](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    const double go = self.grad[0];
    for (int64_t r = 0; r < n; ++r)
      for (int64_t j = 0; j < c; ++j) {
        double target = smoothing / c + (j == tg[r] ? 1.0 - smoothing : 0.0);
        g.at(r, j) += go * (probs->at(r, j) - target);
      }
  });
}

int64_t CtcMinFrames(std::span<const int> target) {
  int64_t need = static_cast<int64_t>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

Var CtcLoss(const Var& logits, std::span<const int> target, int blank) {
  RequireRank2(logits, "CtcLoss");
  const int64_t t = logits.rows(), c = logits.cols();
  if (blank < 0 || blank >= c) throw ConfigError("CtcLoss: blank out of range");
  for (int y : target)
    if (y < 0 || y >= c || y == blank) throw ConfigError("CtcLoss: invalid target label");
  if (t < CtcMinFrames(target))
    throw InfeasibleError("CTC: " + std::to_string(t) + " frames cannot emit a target of length " +
                          std::to_string(target.size()) + " (needs " +
                          std::to_string(CtcMinFrames(target)) + ")");
  // Extended label sequence with interleaved blanks.
  const int64_t s = 2 * static_cast<int64_t>(target.size()) + 1;
  std::vector<int> ext(s, blank);
  for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];

  auto logp = std::make_shared<Tensor>(logits.value());
  for (int64_t r = 0; r < t; ++r) {
    double m = kNegInf;
    for (int64_t j = 0; j < c; ++j) m = std::max(m, logp->at(r, j));
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(logp->at(r, j) - m);
    const double lse = m + std::log(z);
    for (int64_t j = 0; j < c; ++j) logp->at(r, j) -= lse;
  }
  auto can_skip = [&](int64_t k) { return k >= 2 && ext[k] != blank && ext[k] != ext[k - 2]; };

  RowMatrix alpha = RowMatrix::Constant(t, s, kNegInf);
  RowMatrix beta = RowMatrix::Constant(t, s, kNegInf);
  alpha(0, 0) = logp->at(0, ext[0]);
  if (s > 1) alpha(0, 1) = logp->at(0, ext[1]);
  for (int64_t i = 1; i < t; ++i)
    for (int64_t k = 0; k < s; ++k) {
      double a = alpha(i - 1, k);
      if (k >= 1) a = LogAdd(a, alpha(i - 1, k - 1));
      if (can_skip(k)) a = LogAdd(a, alpha(i - 1, k - 2));
      if (a != kNegInf) alpha(i, k) = a + logp->at(i, ext[k]);
    }
  beta(t - 1, s - 1) = logp->at(t - 1, ext[s - 1]);
  if (s > 1) beta(t - 1, s - 2) = logp->at(t - 1, ext[s - 2]);
  for (int64_t i = t - 2; i >= 0; --i)
    for (int64_t k = 0; k < s; ++k) {
      double bsum = beta(i + 1, k);
      if (k + 1 < s) bsum = LogAdd(bsum, beta(i + 1, k + 1));
      if (k + 2 < s && can_skip(k + 2)) bsum = LogAdd(bsum, beta(i + 1, k + 2));
      if (bsum != kNegInf) beta(i, k) = bsum + logp->at(i, ext[k]);
    }
  double log_total = alpha(t - 1, s - 1);
  if (s > 1) log_total = LogAdd(log_total, alpha(t - 1, s - 2));
  if (log_total == kNegInf) throw InfeasibleError("CTC: no valid alignment");

  auto occupancy = std::make_shared<RowMatrix>(RowMatrix::Constant(t, c, kNegInf));
  for (int64_t i = 0; i < t; ++i)
    for (int64_t k = 0; k < s; ++k) {
      const double g = alpha(i, k) + beta(i, k) - logp->at(i, ext[k]);
      (*occupancy)(i, ext[k]) = LogAdd((*occupancy)(i, ext[k]), g);
    }
  return MakeResult(Tensor({1}, -log_total), {logits},
                    [logp, occupancy, log_total, t, c](Node& self) {
    Tensor& g = In(self, 0).GradRef();
    const double go = self.grad[0];
    for (int64_t i = 0; i < t; ++i)
      for (int64_t j = 0; j < c; ++j) {
        const double post = std::exp((*occupancy)(i, j) - log_total);
        g.at(i, j) += go * (std::exp(logp->at(i, j)) - post);
      }
  });
}

Tensor SinusoidalPositions(int64_t length, int64_t dim) {
  Tensor pe({length, dim});
  for (int64_t p = 0; p < length; ++p)
    for (int64_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
      pe.at(p, i) = std::sin(p * freq);
      if (i + 1 < dim) pe.at(p, i + 1) = std::cos(p * freq);
    }
  return pe;
}

}  // namespace avsr::nn

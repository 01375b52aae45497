// nn/tensor.cc

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

#include "avsr/nn/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "avsr/error.h"

namespace avsr::nn {

int64_t NumElements(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ConfigError("negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> shape, double fill)
    : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}

Tensor Tensor::FromMatrix(const RowMatrix& m) {
  Tensor t({m.rows(), m.cols()});
  t.mat() = m;
  return t;
}

Tensor Tensor::FromData(std::vector<int64_t> shape, std::vector<double> data) {
  if (NumElements(shape) != static_cast<int64_t>(data.size()))
    throw ConfigError("tensor data size does not match shape");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

int64_t Tensor::dim(int i) const {
  if (i < 0) i += ndim();
  if (i < 0 || i >= ndim()) throw ConfigError("tensor dim index out of range");
  return shape_[i];
}

int64_t Tensor::rows() const {
  if (ndim() != 2) throw ConfigError("expected rank-2 tensor, got " + ShapeString());
  return shape_[0];
}

int64_t Tensor::cols() const {
  if (ndim() != 2) throw ConfigError("expected rank-2 tensor, got " + ShapeString());
  return shape_[1];
}

MatrixMap Tensor::mat() { return MatrixMap(data_.data(), rows(), cols()); }

ConstMatrixMap Tensor::mat() const {
  return ConstMatrixMap(data_.data(), rows(), cols());
}

Tensor Tensor::Reshaped(std::vector<int64_t> shape) const {
  if (NumElements(shape) != size())
    throw ConfigError("cannot reshape " + ShapeString());
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::AddScaled(const Tensor& other, double scale) {
  if (other.size() != size())
    throw ConfigError("AddScaled size mismatch " + ShapeString() + " vs " +
                      other.ShapeString());
  const double* o = other.data();
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += scale * o[i];
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor::ShapeString() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

bool SameShape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ConfigError("MaxAbsDiff size mismatch");
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace avsr::nn

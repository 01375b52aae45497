// avsr/nn/tensor.h

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

#ifndef AVSR_NN_TENSOR_H_
#define AVSR_NN_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace avsr::nn {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense row-major tensor of doubles. Sequences are stored frames-first,
/// i.e. a T x D feature sequence is a rank-2 tensor with one frame per row,
/// and video feature maps are [T, H, W, C].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape, double fill = 0.0);
  Tensor(std::initializer_list<int64_t> shape, double fill = 0.0)
      : Tensor(std::vector<int64_t>(shape), fill) {}

  static Tensor FromMatrix(const RowMatrix& m);
  static Tensor FromData(std::vector<int64_t> shape, std::vector<double> data);

  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const;
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // Rank-2 conveniences.
  int64_t rows() const;
  int64_t cols() const;
  double& at(int64_t r, int64_t c) { return data_[r * shape_[1] + c]; }
  double at(int64_t r, int64_t c) const { return data_[r * shape_[1] + c]; }
  MatrixMap mat();
  ConstMatrixMap mat() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  const std::vector<double>& storage() const { return data_; }
  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  /// Same storage, new shape; element count must match.
  Tensor Reshaped(std::vector<int64_t> shape) const;
  void Fill(double v);
  void SetZero() { Fill(0.0); }
  /// this += scale * other (shapes must match).
  void AddScaled(const Tensor& other, double scale = 1.0);
  bool AllFinite() const;

  std::string ShapeString() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

int64_t NumElements(const std::vector<int64_t>& shape);
bool SameShape(const Tensor& a, const Tensor& b);
double MaxAbsDiff(const Tensor& a, const Tensor& b);

}  // namespace avsr::nn

#endif  // AVSR_NN_TENSOR_H_

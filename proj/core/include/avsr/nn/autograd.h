// avsr/nn/autograd.h

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

#ifndef AVSR_NN_AUTOGRAD_H_
#define AVSR_NN_AUTOGRAD_H_

#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "avsr/nn/tensor.h"

namespace avsr::nn {

using Rng = std::mt19937_64;

/// One value in a reverse-mode computation graph.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first use.
  Tensor& GradRef();
};

/// Handle to a graph node. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

  int64_t rows() const { return node_->value.rows(); }
  int64_t cols() const { return node_->value.cols(); }
  const std::vector<int64_t>& shape() const { return node_->value.shape(); }

 private:
  std::shared_ptr<Node> node_;
};

Var Constant(Tensor value);
Var Leaf(Tensor value, bool requires_grad = true);

/// Builds an op output. `backward` is kept only when some input needs a
/// gradient, so inference graphs carry no closures.
Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward);

/// Runs reverse accumulation from a scalar root (seed gradient 1).
void Backward(const Var& root);

/// Named parameter tensors, ordered by name.
class ParamStore {
 public:
  void Add(const std::string& name, Tensor value);
  void Set(const std::string& name, Tensor value);
  bool Contains(const std::string& name) const;
  const Tensor& Get(const std::string& name) const;
  Tensor& Mutable(const std::string& name);
  std::vector<std::string> Names() const;
  /// Total scalar count of parameters whose name starts with `prefix`.
  int64_t NumParameters(std::string_view prefix = "") const;
  const std::map<std::string, Tensor>& items() const { return params_; }
  std::map<std::string, Tensor>& mutable_items() { return params_; }
  size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Tensor> params_;
};

using GradientMap = std::map<std::string, Tensor>;

/// Binds parameters of a store as graph leaves for one forward pass.
/// Parameters are looked up lazily and bound at most once per graph.
class Graph {
 public:
  Graph(const ParamStore& store, bool requires_grad)
      : store_(&store), requires_grad_(requires_grad) {}

  Var Param(const std::string& name);
  bool requires_grad() const { return requires_grad_; }
  const ParamStore& store() const { return *store_; }

  /// Adds scale * dLoss/dParam into `into` for every bound parameter that
  /// received a gradient.
  void AccumulateGradients(GradientMap& into, double scale = 1.0) const;

 private:
  const ParamStore* store_;
  bool requires_grad_;
  std::map<std::string, Var> bound_;
};

/// Fan-in scaled uniform init: U(-sqrt(3/fan_in), sqrt(3/fan_in)).
Tensor FanInUniform(std::vector<int64_t> shape, int64_t fan_in, Rng& rng);

}  // namespace avsr::nn

#endif  // AVSR_NN_AUTOGRAD_H_

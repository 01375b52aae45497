// nn/autograd.cc

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

#include "avsr/nn/autograd.h"

#include <cmath>
#include <unordered_set>

#include "avsr/error.h"

namespace avsr::nn {

Tensor& Node::GradRef() {
  if (grad.size() != value.size()) grad = Tensor(value.shape());
  return grad;
}

Var Constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool any = false;
  for (const Var& v : inputs) any = any || v.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const Var& v : inputs) n->inputs.push_back(v.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void Backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1)
    throw ConfigError("Backward requires a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node* child = node->inputs[idx++].get();
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->GradRef().Fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
}

void ParamStore::Add(const std::string& name, Tensor value) {
  if (params_.count(name)) throw ConfigError("duplicate parameter " + name);
  params_.emplace(name, std::move(value));
}

void ParamStore::Set(const std::string& name, Tensor value) {
  params_[name] = std::move(value);
}

bool ParamStore::Contains(const std::string& name) const {
  return params_.count(name) != 0;
}

const Tensor& ParamStore::Get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

Tensor& ParamStore::Mutable(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

std::vector<std::string> ParamStore::Names() const {
  std::vector<std::string> names;
  names.reserve(params_.size());
  for (const auto& [k, v] : params_) names.push_back(k);
  return names;
}

int64_t ParamStore::NumParameters(std::string_view prefix) const {
  int64_t total = 0;
  for (const auto& [k, v] : params_)
    if (std::string_view(k).starts_with(prefix)) total += v.size();
  return total;
}

Var Graph::Param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = Leaf(store_->Get(name), requires_grad_);
  bound_.emplace(name, v);
  return v;
}

void Graph::AccumulateGradients(GradientMap& into, double scale) const {
  for (const auto& [name, var] : bound_) {
    const Tensor& g = var.grad();
    if (g.size() == 0) continue;
    auto it = into.find(name);
    if (it == into.end()) {
      Tensor t(g.shape());
      t.AddScaled(g, scale);
      into.emplace(name, std::move(t));
    } else {
      it->second.AddScaled(g, scale);
    }
  }
}

Tensor FanInUniform(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(3.0 / static_cast<double>(std::max<int64_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace avsr::nn

// src/tape.cpp

// Copyright 2026 The modfuse Authors

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

#include "modfuse/tape.hpp"

#include <stdexcept>

namespace modfuse {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = gradients_;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end())
    return Var{this, it->second};
  Node n;
  n.op = "parameter";
  n.bound = &p;
  n.param = &p;
  n.requires_grad = gradients_;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.index);
  return v;
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  if (!value.all_finite())
    throw NumericalError(std::string("non-finite value produced by ") + op);
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (std::size_t i : inputs) {
    if (i >= nodes_.size())
      throw std::logic_error(std::string(op) + ": input from another tape");
    n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(std::size_t i) const {
  const Node& n = nodes_[i];
  return n.bound ? n.bound->value : n.value;
}

Tensor& Tape::grad_buffer(std::size_t i) {
  Node& n = nodes_[i];
  if (!n.has_grad) {
    n.grad = Tensor(value(i).shape());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(Var v) { return grad_buffer(v.index); }

void Tape::accumulate(std::size_t i, const Tensor& g) {
  if (!nodes_[i].requires_grad) return;
  Tensor& buf = grad_buffer(i);
  if (buf.shape() != g.shape())
    throw ShapeError("gradient shape " + to_string(g.shape()) +
                     " does not match value shape " + to_string(buf.shape()) +
                     " at node " + nodes_[i].op);
  buf.matrix() += g.matrix();
}

void Tape::backward(Var out) {
  if (value(out.index).size() != 1)
    throw ShapeError("backward() without a seed needs a single-valued output, got " +
                     to_string(value(out.index).shape()));
  backward(out, Tensor(value(out.index).shape(), 1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
  if (out.tape != this) throw std::logic_error("backward: foreign Var");
  if (differentiated_)
    throw std::logic_error("backward called twice on the same tape; reset() first");
  differentiated_ = true;
  accumulate(out.index, seed);
  for (std::size_t i = out.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
      n.param->grad.matrix() += n.grad.matrix();
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

std::unordered_set<const Parameter*> Tape::reachable_parameters(Var out) const {
  std::unordered_set<const Parameter*> found;
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<std::size_t> stack{out.index};
  while (!stack.empty()) {
    std::size_t i = stack.back();
    stack.pop_back();
    if (seen[i]) continue;
    seen[i] = 1;
    if (nodes_[i].bound) found.insert(nodes_[i].bound);
    for (std::size_t j : nodes_[i].inputs) stack.push_back(j);
  }
  return found;
}

void Tape::reset() {
  nodes_.clear();
  param_nodes_.clear();
  differentiated_ = false;
}

}  // namespace modfuse

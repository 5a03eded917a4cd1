// include/modfuse/tape.hpp

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

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "modfuse/tensor.hpp"

namespace modfuse {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode recording of one computation. Nodes are appended in execution
// order, so the node list is already topologically sorted. A tape may be
// differentiated once; call reset() before recording a new computation.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // With gradients disabled, parameters are recorded as constants and no
  // backward closures are kept (inference).
  explicit Tape(bool gradients = true) : gradients_(gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that does not need a gradient (data, fixed tables).
  Var constant(Tensor value);
  // Leaf whose gradient is kept on the tape (see grad()).
  Var variable(Tensor value);
  // Leaf bound to a trainable parameter. Registering the same parameter twice
  // returns the same node, so shared weights are one node on the tape.
  Var parameter(Parameter& p);

  // Appends an op node. `value` is checked for NaN/Inf and the op is named in
  // the error when that check fails.
  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs,
             BackwardFn backward);

  const Tensor& value(std::size_t i) const;
  const Tensor& value(Var v) const { return value(v.index); }
  bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
  const std::string& op_name(std::size_t i) const { return nodes_[i].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient buffer of a node; zero if nothing flowed into it.
  const Tensor& grad(Var v);
  // Adds `g` into node i's gradient buffer when the node requires a gradient.
  void accumulate(std::size_t i, const Tensor& g);
  // Mutable buffer for in-place accumulation inside backward functions.
  Tensor& grad_buffer(std::size_t i);

  // Seeds d(out)/d(out) = 1; `out` must hold a single value.
  void backward(Var out);
  // Seeds an arbitrary upstream gradient of out's shape.
  void backward(Var out, const Tensor& seed);

  // Parameter leaves that `out` depends on.
  std::unordered_set<const Parameter*> reachable_parameters(Var out) const;

  void reset();

 private:
  struct Node {
    std::string op;
    Tensor value;
    const Parameter* bound = nullptr;
    Parameter* param = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
    Tensor grad;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool gradients_ = true;
  bool differentiated_ = false;
};

inline const Tensor& Var::value() const { return tape->value(index); }

}  // namespace modfuse

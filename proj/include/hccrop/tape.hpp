// Copyright 2026 The hccrop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hccrop/tensor.hpp"

namespace hccrop::nn {

struct Parameter {
  std::string name;  // "module.submodule.param"
  Tensor value;
  Tensor grad;
};

// Owns the learnable arrays in registration order. Addresses are stable.
class ParameterSet {
 public:
  Parameter& add(std::string name, std::vector<int> shape);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t element_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode recorder. Each forward pass builds a fresh tape; backward()
// replays the recorded closures in reverse order. With gradients disabled
// nothing is recorded and parameters are read in place.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);
  Var parameter(const Parameter& p);  // read-only, never receives gradient

  // Registers an op output. `fn` is dropped when no input needs gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool grad_enabled() const { return grad_enabled_; }

  // Adds `g` into the gradient buffer of `v` if it requires gradient.
  void accumulate(Var v, const Tensor& g);
  // Mutable gradient buffer (allocated on demand); null when not needed.
  Tensor* grad_buffer(Var v);

  // Seeds d(root)/d(root) = 1 for a single-element root and propagates.
  // Parameter gradients are added into Parameter::grad.
  void backward(Var root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

}  // namespace hccrop::nn

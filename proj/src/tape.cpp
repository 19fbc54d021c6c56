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

#include "hccrop/tape.hpp"

#include "hccrop/error.hpp"

namespace hccrop::nn {

Parameter& ParameterSet::add(std::string name, std::vector<int> shape) {
  if (find(name) != nullptr) throw ValidationError("duplicate parameter name " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = Tensor(shape);
  p->grad = Tensor(std::move(shape));
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterSet::at(const std::string& name) {
  Parameter* p = find(name);
  if (p == nullptr) throw ValidationError("unknown parameter " + name);
  return *p;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw ValidationError("invalid tape variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw ValidationError("invalid tape variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, false, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{{}, &p.value, {}, grad_enabled_ ? &p : nullptr, grad_enabled_, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const Parameter& p) {
  nodes_.push_back(Node{{}, &p.value, {}, nullptr, false, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (Var in : inputs) {
      if (in.valid() && node(in).requires_grad) {
        needs = true;
        break;
      }
    }
  }
  nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external != nullptr ? *n.external : n.value;
}

bool Tape::requires_grad(Var v) const { return v.valid() && node(v).requires_grad; }

Tensor* Tape::grad_buffer(Var v) {
  if (!v.valid()) return nullptr;
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(value(v).shape());
  return &n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Tensor* buf = grad_buffer(v);
  if (buf == nullptr) return;
  if (buf->size() != g.size()) throw ValidationError("gradient shape mismatch " + g.shape_string());
  double* dst = buf->data();
  const double* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var root) {
  Node& r = node(root);
  if (!r.requires_grad) return;
  if (value(root).size() != 1) throw ValidationError("backward root must be a scalar");
  r.grad = Tensor(value(root).shape(), 1.0);
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, n.external != nullptr ? *n.external : n.value, n.grad);
    } else if (n.param != nullptr) {
      double* dst = n.param->grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    }
    if (id != root.id) n.grad = Tensor();  // free as we go
  }
}

}  // namespace hccrop::nn

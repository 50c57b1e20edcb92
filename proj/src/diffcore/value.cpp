// Copyright 2026 The QGDF-PnP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pnp/diffcore/value.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace pnp::diff
{

namespace
{
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t numel(const Shape & shape)
{
  std::size_t n = 1;
  for (auto d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape & shape)
{
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values))
{
  if (data.size() != numel(shape)) {
    throw std::invalid_argument(
      "tensor data size " + std::to_string(data.size()) + " does not match shape " +
      shape_str(shape));
  }
}

std::vector<double> & Node::grad_buffer()
{
  if (grad.empty()) {
    grad.assign(value.data.size(), 0.0);
  }
  return grad;
}

Value Value::constant(Tensor t)
{
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Value(std::move(n));
}

Value Value::constant(Shape shape, std::vector<double> values)
{
  return constant(Tensor(std::move(shape), std::move(values)));
}

Value Value::scalar(double v) { return constant(Tensor(Shape{}, std::vector<double>{v})); }

Value Value::zeros(Shape shape) { return constant(Tensor(std::move(shape), 0.0)); }

Value Value::parameter(Tensor t)
{
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Value(std::move(n));
}

Value Value::make(Tensor value, std::vector<Value> parents, BackwardFn backward)
{
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!g_grad_enabled) {
    return Value(std::move(n));
  }
  const bool any = std::any_of(
    parents.begin(), parents.end(), [](const Value & p) { return p.requires_grad(); });
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto & p : parents) {
      n->parents.push_back(p.node_);
    }
    n->backward_fn = std::move(backward);
  }
  return Value(std::move(n));
}

double Value::item() const
{
  if (size() != 1) {
    throw std::invalid_argument("item() on value of shape " + shape_str(shape()));
  }
  return node_->value.data[0];
}

Tensor Value::grad_tensor() const
{
  if (node_->grad.empty()) {
    return Tensor(shape(), 0.0);
  }
  return Tensor(shape(), node_->grad);
}

void Value::zero_grad() { node_->grad.clear(); }

void Value::backward() const
{
  if (size() != 1) {
    throw std::invalid_argument("backward() requires a scalar, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) {
    return;
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node *> order;
  std::unordered_set<Node *> visited;
  std::vector<std::pair<Node *, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto & [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node * p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node * n : order) {
    if (!n->parents.empty()) {
      n->grad.clear();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node * n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace pnp::diff

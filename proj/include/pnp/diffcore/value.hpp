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

#ifndef PNP__DIFFCORE__VALUE_HPP_
#define PNP__DIFFCORE__VALUE_HPP_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace pnp::diff
{

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t numel(const Shape & shape);
std::string shape_str(const Shape & shape);

/// Plain row-major array of doubles. Carries no graph information.
struct Tensor
{
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double & operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node &)>;

struct Node
{
  Tensor value;
  std::vector<double> grad;  // empty until touched by a backward pass
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward_fn;

  /// Gradient buffer, allocated (zeroed) on first use.
  std::vector<double> & grad_buffer();
};

/// Handle to a node of the computation graph. Copies share the node.
class Value
{
public:
  Value() = default;

  static Value constant(Tensor t);
  static Value constant(Shape shape, std::vector<double> values);
  static Value scalar(double v);
  static Value zeros(Shape shape);
  static Value parameter(Tensor t);

  /// Builds a graph node from an already computed forward value. `backward`
  /// reads the node's gradient and accumulates into its parents. When no
  /// parent requires a gradient (or grad recording is disabled) the node is a
  /// detached constant.
  static Value make(Tensor value, std::vector<Value> parents, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape & shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.data.size(); }
  std::size_t rank() const { return node_->value.shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->value.shape.at(i); }
  bool requires_grad() const { return node_->requires_grad; }

  const Tensor & tensor() const { return node_->value; }
  std::span<const double> data() const { return node_->value.data; }
  std::span<double> mutable_data() { return node_->value.data; }
  double item() const;

  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  Tensor grad_tensor() const;
  void zero_grad();

  /// Reverse pass from a scalar. Leaf gradients accumulate across calls;
  /// interior gradients are reset first.
  void backward() const;

  Node * node() const { return node_.get(); }
  const NodePtr & node_ptr() const { return node_; }

private:
  explicit Value(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard
{
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard & operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

bool grad_enabled();

}  // namespace pnp::diff

#endif  // PNP__DIFFCORE__VALUE_HPP_

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

#ifndef PNP__DIFFCORE__OPS_HPP_
#define PNP__DIFFCORE__OPS_HPP_

#include <cstddef>
#include <vector>

#include "pnp/diffcore/value.hpp"

namespace pnp::diff
{

constexpr double kNormEps = 1e-5;
constexpr double kLogitEps = 1e-5;

// Elementwise arithmetic with numpy-style broadcasting.
Value add(const Value & a, const Value & b);
Value sub(const Value & a, const Value & b);
Value mul(const Value & a, const Value & b);
Value div(const Value & a, const Value & b);
Value neg(const Value & x);

Value operator+(const Value & a, const Value & b);
Value operator-(const Value & a, const Value & b);
Value operator*(const Value & a, const Value & b);
Value operator/(const Value & a, const Value & b);
Value operator-(const Value & x);
Value operator+(const Value & a, double s);
Value operator+(double s, const Value & a);
Value operator-(const Value & a, double s);
Value operator-(double s, const Value & a);
Value operator*(const Value & a, double s);
Value operator*(double s, const Value & a);
Value operator/(const Value & a, double s);

Value exp(const Value & x);
Value log(const Value & x);
Value tanh(const Value & x);
Value sigmoid(const Value & x);
Value relu(const Value & x);
Value abs(const Value & x);
Value square(const Value & x);

/// Gradient is zero where the input lies outside [lo, hi].
Value clip(const Value & x, double lo, double hi);

/// logit(clamp(p, eps, 1 - eps)).
Value inverse_sigmoid(const Value & p, double eps = kLogitEps);

Value matmul(const Value & a, const Value & b);
Value transpose(const Value & x);

/// x[..., in] * weight[in, out] + bias[out].
Value linear(const Value & x, const Value & weight, const Value & bias);

Value reshape(const Value & x, Shape shape);
Value concat(const std::vector<Value> & parts, std::size_t axis);
Value slice(const Value & x, std::size_t axis, std::size_t begin, std::size_t end);
/// Gathers entries along axis 0.
Value index_rows(const Value & x, const std::vector<std::size_t> & rows);

Value sum(const Value & x);
Value mean(const Value & x);
Value sum_axis(const Value & x, std::size_t axis);

Value softmax(const Value & x);
Value log_softmax(const Value & x);

/// Softmax over the last axis restricted to entries where `mask` is nonzero.
/// `mask` must have the shape of `logits`. Masked entries are exactly 0 and
/// receive no gradient; a fully masked row is all zeros.
Value masked_softmax(const Value & logits, const Tensor & mask);

/// Per-vector normalization over the last axis followed by gain * x + bias.
Value layer_normalize(
  const Value & x, const Value & gain, const Value & bias, double eps = kNormEps);

enum class Padding { kBorder, kZeros };

/// Samples a C x H x W map at N normalized points (N x 2, (x, y) order, x
/// indexing W). Corner aligned: -1 maps to index 0 and +1 to index W-1 (H-1).
/// Returns N x C.
Value bilinear_sample(const Value & map, const Value & coords, Padding padding = Padding::kBorder);

Value stop_gradient(const Value & x);

/// Inverted dropout; identity when `training` is false or rate is 0.
Value dropout(const Value & x, double rate, bool training, Rng & rng);

/// x holds `groups` blocks of `slots` rows each (shape groups*slots x C).
/// Returns groups x C, the column maximum over the first counts[g] rows of
/// every block; an empty block yields zeros.
Value segment_max(const Value & x, std::size_t slots, const std::vector<std::size_t> & counts);

/// Places row i of x (N x C) at flat cell cells[i] of a C x height x width
/// grid; every other cell is zero. Cells must be distinct.
Value scatter_to_grid(
  const Value & x, const std::vector<std::size_t> & cells, std::size_t height, std::size_t width);

}  // namespace pnp::diff

#endif  // PNP__DIFFCORE__OPS_HPP_

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

#ifndef PNP__DIFFCORE__FFN_HPP_
#define PNP__DIFFCORE__FFN_HPP_

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pnp/diffcore/value.hpp"

namespace pnp::diff
{

enum class Activation { kNone, kRelu };

struct Linear
{
  Value weight;  // in x out
  Value bias;    // out

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
};

struct NormAffine
{
  Value gain;
  Value bias;
};

/// Stack of affine layers. `activation` is applied between layers; the last
/// layer output is optionally normalized and then optionally activated.
struct FfnParams
{
  std::vector<Linear> layers;
  Activation activation = Activation::kRelu;
  std::optional<NormAffine> output_norm;
  bool activate_output = false;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
};

/// Uniform(-1/sqrt(in), 1/sqrt(in)) weights and biases.
Linear make_linear(std::size_t in, std::size_t out, Rng & rng);
Linear make_zero_linear(std::size_t in, std::size_t out);
NormAffine make_norm(std::size_t dim);

/// dims = {in, hidden..., out}.
FfnParams make_ffn(const std::vector<std::size_t> & dims, Rng & rng,
                   Activation activation = Activation::kRelu);

Value linear_apply(const Value & x, const Linear & layer);
Value norm_apply(const Value & x, const NormAffine & norm);
Value ffn_apply(const Value & x, const FfnParams & params);

using ParamVisitor = std::function<void(const std::string & name, Value & param)>;

void visit_params(Linear & layer, const std::string & prefix, const ParamVisitor & visit);
void visit_params(NormAffine & norm, const std::string & prefix, const ParamVisitor & visit);
void visit_params(FfnParams & ffn, const std::string & prefix, const ParamVisitor & visit);

}  // namespace pnp::diff

#endif  // PNP__DIFFCORE__FFN_HPP_

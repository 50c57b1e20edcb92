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

#include "pnp/diffcore/ffn.hpp"

#include <cmath>
#include <stdexcept>

#include "pnp/diffcore/ops.hpp"

namespace pnp::diff
{

Linear make_linear(std::size_t in, std::size_t out, Rng & rng)
{
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w({in, out});
  for (auto & v : w.data) {
    v = u(rng);
  }
  Tensor b({out});
  for (auto & v : b.data) {
    v = u(rng);
  }
  return {Value::parameter(std::move(w)), Value::parameter(std::move(b))};
}

Linear make_zero_linear(std::size_t in, std::size_t out)
{
  return {Value::parameter(Tensor({in, out})), Value::parameter(Tensor({out}))};
}

NormAffine make_norm(std::size_t dim)
{
  return {Value::parameter(Tensor({dim}, 1.0)), Value::parameter(Tensor({dim}, 0.0))};
}

FfnParams make_ffn(const std::vector<std::size_t> & dims, Rng & rng, Activation activation)
{
  if (dims.size() < 2) {
    throw std::invalid_argument("make_ffn needs at least input and output dims");
  }
  FfnParams p;
  p.activation = activation;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    p.layers.push_back(make_linear(dims[i], dims[i + 1], rng));
  }
  return p;
}

Value linear_apply(const Value & x, const Linear & layer)
{
  return linear(x, layer.weight, layer.bias);
}

Value norm_apply(const Value & x, const NormAffine & norm)
{
  return layer_normalize(x, norm.gain, norm.bias);
}

Value ffn_apply(const Value & x, const FfnParams & params)
{
  if (params.layers.empty()) {
    throw std::invalid_argument("ffn_apply with no layers");
  }
  Value h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto & layer = params.layers[i];
    if (h.rank() == 0 || h.shape().back() != layer.in_dim()) {
      throw std::invalid_argument(
        "ffn_apply: layer " + std::to_string(i) + " expects width " +
        std::to_string(layer.in_dim()) + ", got " + shape_str(h.shape()));
    }
    h = linear_apply(h, layer);
    const bool last = i + 1 == params.layers.size();
    if (last && params.output_norm) {
      h = norm_apply(h, *params.output_norm);
    }
    if ((!last || params.activate_output) && params.activation == Activation::kRelu) {
      h = relu(h);
    }
  }
  return h;
}

void visit_params(Linear & layer, const std::string & prefix, const ParamVisitor & visit)
{
  visit(prefix + ".weight", layer.weight);
  visit(prefix + ".bias", layer.bias);
}

void visit_params(NormAffine & norm, const std::string & prefix, const ParamVisitor & visit)
{
  visit(prefix + ".gain", norm.gain);
  visit(prefix + ".bias", norm.bias);
}

void visit_params(FfnParams & ffn, const std::string & prefix, const ParamVisitor & visit)
{
  for (std::size_t i = 0; i < ffn.layers.size(); ++i) {
    visit_params(ffn.layers[i], prefix + ".layer" + std::to_string(i), visit);
  }
  if (ffn.output_norm) {
    visit_params(*ffn.output_norm, prefix + ".norm", visit);
  }
}

}  // namespace pnp::diff

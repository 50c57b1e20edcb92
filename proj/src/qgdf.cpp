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

#include "pnp/qgdf.hpp"

#include <stdexcept>

#include "pnp/diffcore/ops.hpp"

namespace pnp::qgdf
{

using diff::Tensor;
using diff::Value;

std::size_t FeaturePyramid::channels() const
{
  return maps.empty() || maps.front().empty() ? 0 : maps.front().front().dim(0);
}

void FeaturePyramid::validate() const
{
  if (maps.empty()) {
    throw std::invalid_argument("feature pyramid has no cameras");
  }
  if (calibs.size() != maps.size()) {
    throw std::invalid_argument(
      "feature pyramid has " + std::to_string(maps.size()) + " cameras but " +
      std::to_string(calibs.size()) + " calibrations");
  }
  const std::size_t levels = maps.front().size();
  const std::size_t c = channels();
  if (levels == 0) {
    throw std::invalid_argument("feature pyramid has no levels");
  }
  for (const auto & cam : maps) {
    if (cam.size() != levels) {
      throw std::invalid_argument("feature pyramid cameras disagree on level count");
    }
    for (const auto & m : cam) {
      if (m.rank() != 3 || m.dim(0) != c) {
        throw std::invalid_argument("feature map has shape " + diff::shape_str(m.shape()));
      }
    }
  }
}

QgdfParams make_qgdf_params(const QgdfConfig & config, diff::Rng & rng)
{
  const std::size_t e = config.embed_dim;
  QgdfParams p;
  p.image_logits = diff::make_ffn({e, e, config.num_cameras * config.num_levels}, rng);
  p.image_proj = diff::make_linear(config.image_channels, e, rng);
  p.image_norm = diff::make_norm(e);
  p.offsets = diff::make_linear(e, config.num_points * 2, rng);
  p.point_weights = diff::make_linear(e, config.num_points, rng);
  p.lidar_proj = diff::make_linear(e, e, rng);
  p.lidar_norm = diff::make_norm(e);
  p.gate = diff::make_ffn({3 * e, e, 2}, rng);
  p.gate.layers.back() = diff::make_zero_linear(e, 2);
  p.fuse = diff::make_ffn({2 * e, e, e}, rng);
  p.position = diff::make_ffn({3, e, e}, rng);
  p.offset_scale = config.offset_scale;
  p.dropout = config.dropout;
  return p;
}

void visit_params(QgdfParams & p, const std::string & prefix, const diff::ParamVisitor & visit)
{
  diff::visit_params(p.image_logits, prefix + ".image_logits", visit);
  diff::visit_params(p.image_proj, prefix + ".image_proj", visit);
  diff::visit_params(p.image_norm, prefix + ".image_norm", visit);
  diff::visit_params(p.offsets, prefix + ".offsets", visit);
  diff::visit_params(p.point_weights, prefix + ".point_weights", visit);
  diff::visit_params(p.lidar_proj, prefix + ".lidar_proj", visit);
  diff::visit_params(p.lidar_norm, prefix + ".lidar_norm", visit);
  diff::visit_params(p.gate, prefix + ".gate", visit);
  diff::visit_params(p.fuse, prefix + ".fuse", visit);
  diff::visit_params(p.position, prefix + ".position", visit);
}

ImageBranchOut image_branch(
  const Queries & queries, const FeaturePyramid & pyramid, const QgdfParams & params,
  const geom::PerceptionVolume & volume)
{
  pyramid.validate();
  const std::size_t n = queries.size();
  const std::size_t ncam = pyramid.num_cameras();
  const std::size_t levels = pyramid.num_levels();
  const std::size_t c = pyramid.channels();
  const std::size_t pairs = ncam * levels;
  if (params.image_logits.out_dim() != pairs) {
    throw std::invalid_argument(
      "image logit head predicts " + std::to_string(params.image_logits.out_dim()) +
      " camera-level pairs, pyramid has " + std::to_string(pairs));
  }

  const auto proj = geom::project_to_cameras(queries.ref, pyramid.calibs, volume);
  std::vector<Value> samples;
  samples.reserve(pairs);
  for (std::size_t cam = 0; cam < ncam; ++cam) {
    for (std::size_t l = 0; l < levels; ++l) {
      const Value s = diff::bilinear_sample(pyramid.maps[cam][l], proj.sample_coords[cam]);
      samples.push_back(diff::reshape(s, {n, 1, c}));
    }
  }
  const Value stacked = diff::concat(samples, 1);

  ImageBranchOut out;
  out.mask = Tensor({n, pairs});
  Tensor any_valid({n, 1});
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t cam = 0; cam < ncam; ++cam) {
      const double m = proj.mask.data[q * ncam + cam];
      for (std::size_t l = 0; l < levels; ++l) {
        out.mask.data[q * pairs + cam * levels + l] = m;
      }
      if (m != 0.0) {
        any_valid.data[q] = 1.0;
      }
    }
  }
  const Value logits = diff::ffn_apply(queries.embed, params.image_logits);
  out.weights = diff::masked_softmax(logits, out.mask);
  out.feature = diff::sum_axis(diff::reshape(out.weights, {n, pairs, 1}) * stacked, 1);
  const Value projected =
    diff::norm_apply(diff::linear_apply(out.feature, params.image_proj), params.image_norm);
  out.q_bar = projected * Value::constant(any_valid);
  return out;
}

LidarBranchOut lidar_branch(
  const Queries & queries, const pillars::BevMap & bev, const QgdfParams & params)
{
  const std::size_t n = queries.size();
  const std::size_t e = queries.embed.dim(1);
  LidarBranchOut out;
  if (!bev.present) {
    out.q_bar = Value::zeros({n, e});
    return out;
  }
  const std::size_t np = params.point_weights.out_dim();
  if (params.offsets.out_dim() != 2 * np) {
    throw std::invalid_argument("offset head must predict two coordinates per sampling point");
  }
  const Value base = diff::reshape(
    geom::bev_grid_coords(diff::slice(queries.ref, 1, 0, 2)), {n, 1, 2});
  const Value delta =
    diff::reshape(diff::linear_apply(queries.embed, params.offsets), {n, np, 2});
  out.grid = diff::reshape(
    diff::clip(base + params.offset_scale * diff::tanh(delta), -1.0, 1.0), {n * np, 2});
  const Value sampled =
    diff::reshape(diff::bilinear_sample(bev.features, out.grid), {n, np, bev.features.dim(0)});
  out.weights = diff::softmax(diff::linear_apply(queries.embed, params.point_weights));
  const Value context = diff::sum_axis(diff::reshape(out.weights, {n, np, 1}) * sampled, 1);
  out.q_bar = diff::norm_apply(diff::linear_apply(context, params.lidar_proj), params.lidar_norm);
  return out;
}

FuseOut gated_fuse(
  const Value & q_image, const Value & q_lidar, const Queries & queries, const QgdfParams & params,
  const Tensor * frozen_query)
{
  FuseOut out;
  const Value detached =
    frozen_query ? Value::constant(*frozen_query) : diff::stop_gradient(queries.embed);
  if (detached.shape() != queries.embed.shape()) {
    throw std::invalid_argument("frozen gate query has shape " + diff::shape_str(detached.shape()));
  }
  const Value gate_in = diff::concat({q_image, q_lidar, detached}, 1);
  out.gamma = diff::softmax(diff::ffn_apply(gate_in, params.gate));
  const Value hat_image = diff::slice(out.gamma, 1, 0, 1) * q_image;
  const Value hat_lidar = diff::slice(out.gamma, 1, 1, 2) * q_lidar;
  out.fused = diff::ffn_apply(diff::concat({hat_image, hat_lidar}, 1), params.fuse);
  return out;
}

Value residual_update(
  const Value & fused, const Queries & queries, const QgdfParams & params, bool training,
  diff::Rng * rng)
{
  if (fused.shape() != queries.embed.shape()) {
    throw std::invalid_argument(
      "fused queries " + diff::shape_str(fused.shape()) + " vs embeddings " +
      diff::shape_str(queries.embed.shape()));
  }
  Value dropped = fused;
  if (training && params.dropout > 0.0) {
    if (rng == nullptr) {
      throw std::invalid_argument("training-mode dropout needs a random generator");
    }
    dropped = diff::dropout(fused, params.dropout, true, *rng);
  }
  return dropped + queries.embed + geom::positional_code(queries.ref, params.position);
}

LayerOut qgdf_layer(
  const Queries & queries, const FeaturePyramid & pyramid, const pillars::BevMap & bev,
  const QgdfParams & params, bool training, diff::Rng * rng, const geom::PerceptionVolume & volume,
  const Tensor * frozen_query)
{
  LayerOut out;
  out.image = image_branch(queries, pyramid, params, volume);
  out.lidar = lidar_branch(queries, bev, params);
  out.fuse = gated_fuse(out.image.q_bar, out.lidar.q_bar, queries, params, frozen_query);
  out.queries.embed = residual_update(out.fuse.fused, queries, params, training, rng);
  out.queries.ref = queries.ref;
  return out;
}

std::vector<double> StackOut::mean_lidar_gate() const
{
  std::vector<double> out;
  if (gammas.empty()) {
    return out;
  }
  const std::size_t n = gammas.front().dim(0);
  out.assign(n, 0.0);
  for (const auto & g : gammas) {
    for (std::size_t q = 0; q < n; ++q) {
      out[q] += g.data()[q * 2 + 1];
    }
  }
  for (double & v : out) {
    v /= static_cast<double>(gammas.size());
  }
  return out;
}

StackOut qgdf_stack(
  const Queries & queries, const FeaturePyramid & pyramid, const pillars::BevMap & bev,
  const std::vector<QgdfParams> & layers, bool training, diff::Rng * rng,
  const geom::PerceptionVolume & volume, DetachedGateInputs * detached)
{
  if (detached && detached->frozen && detached->values.size() != layers.size()) {
    throw std::invalid_argument("frozen gate inputs do not match the layer count");
  }
  if (detached && !detached->frozen) {
    detached->values.clear();
  }
  StackOut out;
  out.queries = queries;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor * frozen = nullptr;
    if (detached && detached->frozen) {
      frozen = &detached->values[l];
    } else if (detached) {
      detached->values.push_back(out.queries.embed.tensor());
    }
    auto layer = qgdf_layer(out.queries, pyramid, bev, layers[l], training, rng, volume, frozen);
    out.queries = layer.queries;
    out.gammas.push_back(layer.fuse.gamma);
  }
  return out;
}

}  // namespace pnp::qgdf

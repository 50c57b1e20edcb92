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

#include "pnp/pillars.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "pnp/diffcore/ops.hpp"

namespace pnp::pillars
{

using diff::Tensor;
using diff::Value;

namespace
{

std::size_t cells_along(const PillarConfig & config, std::size_t axis)
{
  if (!(config.cell_size > 0.0)) {
    throw std::invalid_argument("pillar cell size must be positive");
  }
  const double n = config.volume.extent(axis) / config.cell_size;
  const double rounded = std::round(n);
  if (rounded < 1.0 || std::abs(n - rounded) > 1e-6) {
    throw std::invalid_argument("pillar cell size must divide the perception range");
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

std::size_t PillarConfig::grid_width() const { return cells_along(*this, 0); }
std::size_t PillarConfig::grid_height() const { return cells_along(*this, 1); }

bool cell_of(const LidarPoint & p, const PillarConfig & config, std::array<std::size_t, 2> * cell)
{
  const auto & vol = config.volume;
  if (!vol.contains({p.x, p.y, p.z})) {
    return false;
  }
  const auto ix = static_cast<std::size_t>(std::floor((p.x - vol.min[0]) / config.cell_size));
  const auto iy = static_cast<std::size_t>(std::floor((p.y - vol.min[1]) / config.cell_size));
  const std::size_t w = config.grid_width();
  const std::size_t h = config.grid_height();
  // Rounding right at the upper edge.
  *cell = {std::min(ix, w - 1), std::min(iy, h - 1)};
  return true;
}

Pillars pillarize(const PointCloud & cloud, const PillarConfig & config)
{
  if (config.max_points == 0) {
    throw std::invalid_argument("max points per pillar must be positive");
  }
  Pillars out;
  out.grid_width = config.grid_width();
  out.grid_height = config.grid_height();
  out.max_points = config.max_points;
  out.cell_size = config.cell_size;
  out.origin = config.volume.min;

  std::unordered_map<std::size_t, std::size_t> slot_of_cell;
  std::vector<std::vector<const LidarPoint *>> members;
  for (const auto & p : cloud.points) {
    std::array<std::size_t, 2> cell;
    if (!cell_of(p, config, &cell)) {
      continue;
    }
    const std::size_t key = cell[1] * out.grid_width + cell[0];
    auto [it, inserted] = slot_of_cell.emplace(key, members.size());
    if (inserted) {
      members.emplace_back();
      out.cells.push_back(cell);
    }
    auto & m = members[it->second];
    if (m.size() < config.max_points) {
      m.push_back(&p);
    }
  }

  const std::size_t n = members.size();
  const std::size_t slots = config.max_points;
  out.features = Tensor({n, slots, kDecorationWidth});
  out.counts.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto & m = members[i];
    out.counts[i] = m.size();
    double mx = 0.0;
    double my = 0.0;
    double mz = 0.0;
    for (const auto * p : m) {
      mx += p->x;
      my += p->y;
      mz += p->z;
    }
    const double inv = 1.0 / static_cast<double>(m.size());
    mx *= inv;
    my *= inv;
    mz *= inv;
    const double xc = config.volume.min[0] + (static_cast<double>(out.cells[i][0]) + 0.5) * config.cell_size;
    const double yc = config.volume.min[1] + (static_cast<double>(out.cells[i][1]) + 0.5) * config.cell_size;
    for (std::size_t s = 0; s < m.size(); ++s) {
      const auto & p = *m[s];
      double * row = out.features.data.data() + (i * slots + s) * kDecorationWidth;
      row[0] = p.x;
      row[1] = p.y;
      row[2] = p.z;
      row[3] = p.intensity;
      row[4] = p.dt;
      row[5] = p.x - mx;
      row[6] = p.y - my;
      row[7] = p.z - mz;
      row[8] = p.x - xc;
      row[9] = p.y - yc;
    }
  }
  return out;
}

PillarEncoderParams make_pillar_encoder(std::size_t embed_dim, diff::Rng & rng)
{
  PillarEncoderParams p;
  p.point_net = diff::make_ffn({kDecorationWidth, kPillarChannels}, rng);
  p.point_net.output_norm = diff::make_norm(kPillarChannels);
  p.point_net.activate_output = true;
  p.align = diff::make_linear(kPillarChannels, embed_dim, rng);
  p.align_norm = diff::make_norm(embed_dim);
  return p;
}

void visit_params(
  PillarEncoderParams & params, const std::string & prefix, const diff::ParamVisitor & visit)
{
  diff::visit_params(params.point_net, prefix + ".point_net", visit);
  diff::visit_params(params.align, prefix + ".align", visit);
  diff::visit_params(params.align_norm, prefix + ".align_norm", visit);
}

BevMap absent_bev()
{
  BevMap bev;
  bev.present = false;
  return bev;
}

BevMap encode_pillar_features(
  const Value & features, const Pillars & layout, const PillarEncoderParams & params)
{
  if (params.point_net.in_dim() != kDecorationWidth ||
      params.point_net.out_dim() != kPillarChannels ||
      params.align.in_dim() != kPillarChannels) {
    throw std::invalid_argument("pillar encoder must map 10 -> 64 -> E");
  }
  const std::size_t n = layout.size();
  const std::size_t slots = layout.max_points;
  if (features.shape() != diff::Shape{n, slots, kDecorationWidth}) {
    throw std::invalid_argument(
      "pillar features have shape " + diff::shape_str(features.shape()));
  }
  const std::size_t e = params.embed_dim();
  BevMap bev;
  bev.present = true;
  bev.cell_size = layout.cell_size;
  bev.origin = layout.origin;
  if (n == 0) {
    bev.features = Value::constant(Tensor({e, layout.grid_height, layout.grid_width}));
    return bev;
  }

  // Encode only the occupied slots, then lay them back out per pillar.
  std::vector<std::size_t> real_rows;
  std::vector<std::size_t> padded(n * slots, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < layout.counts[i]; ++s) {
      padded[i * slots + s] = real_rows.size();
      real_rows.push_back(i * slots + s);
    }
  }
  const Value flat = diff::reshape(features, {n * slots, kDecorationWidth});
  const Value encoded = diff::ffn_apply(diff::index_rows(flat, real_rows), params.point_net);
  const Value pooled =
    diff::segment_max(diff::index_rows(encoded, padded), slots, layout.counts);
  const Value cells = diff::norm_apply(diff::linear_apply(pooled, params.align), params.align_norm);

  std::vector<std::size_t> flat_cells(n);
  for (std::size_t i = 0; i < n; ++i) {
    flat_cells[i] = layout.cells[i][1] * layout.grid_width + layout.cells[i][0];
  }
  bev.features = diff::scatter_to_grid(cells, flat_cells, layout.grid_height, layout.grid_width);
  return bev;
}

BevMap encode_pillars_to_bev(const Pillars & pillars, const PillarEncoderParams & params)
{
  return encode_pillar_features(Value::constant(pillars.features), pillars, params);
}

}  // namespace pnp::pillars

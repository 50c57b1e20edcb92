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

#ifndef PNP__PILLARS_HPP_
#define PNP__PILLARS_HPP_

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "pnp/diffcore/ffn.hpp"
#include "pnp/diffcore/value.hpp"
#include "pnp/geometry.hpp"

namespace pnp::pillars
{

struct LidarPoint
{
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
  double dt = 0.0;  // seconds relative to the frame, in [-0.5, 0]
};

struct PointCloud
{
  std::vector<LidarPoint> points;
};

constexpr std::size_t kDecorationWidth = 10;
constexpr std::size_t kPillarChannels = 64;

struct PillarConfig
{
  geom::PerceptionVolume volume;
  double cell_size = 0.2;
  std::size_t max_points = 32;

  std::size_t grid_width() const;   // cells along x
  std::size_t grid_height() const;  // cells along y
};

struct Pillars
{
  /// num_pillars x max_points x 10; unused slots are zero.
  diff::Tensor features;
  std::vector<std::size_t> counts;
  /// (ix, iy) per pillar, in order of first appearance in the cloud.
  std::vector<std::array<std::size_t, 2>> cells;
  std::size_t grid_width = 0;
  std::size_t grid_height = 0;
  std::size_t max_points = 0;
  double cell_size = 0.0;
  geom::Vec3 origin{};

  std::size_t size() const { return counts.size(); }
};

/// Cell (ix, iy) of a point, or false when it lies outside the volume.
bool cell_of(const LidarPoint & p, const PillarConfig & config, std::array<std::size_t, 2> * cell);

Pillars pillarize(const PointCloud & cloud, const PillarConfig & config);

struct PillarEncoderParams
{
  diff::FfnParams point_net;  // 10 -> 64, normalized, ReLU
  diff::Linear align;         // 64 -> E per occupied cell
  diff::NormAffine align_norm;

  std::size_t embed_dim() const { return align.out_dim(); }
};

PillarEncoderParams make_pillar_encoder(std::size_t embed_dim, diff::Rng & rng);
void visit_params(
  PillarEncoderParams & params, const std::string & prefix, const diff::ParamVisitor & visit);

struct BevMap
{
  diff::Value features;  // E x grid_height x grid_width, (row = y cell, column = x cell)
  double cell_size = 0.0;
  geom::Vec3 origin{};  // world coordinate of the corner of cell (0, 0)
  bool present = false;
};

BevMap absent_bev();

/// Same as below but with the decorated features supplied as a Value of
/// shape num_pillars x max_points x 10, so gradients can reach them.
BevMap encode_pillar_features(
  const diff::Value & features, const Pillars & layout, const PillarEncoderParams & params);

BevMap encode_pillars_to_bev(const Pillars & pillars, const PillarEncoderParams & params);

}  // namespace pnp::pillars

#endif  // PNP__PILLARS_HPP_

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

#ifndef PNP__QGDF_HPP_
#define PNP__QGDF_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "pnp/diffcore/ffn.hpp"
#include "pnp/diffcore/value.hpp"
#include "pnp/geometry.hpp"
#include "pnp/pillars.hpp"

namespace pnp::qgdf
{

/// maps[camera][level] is a C x H_l x W_l feature map.
struct FeaturePyramid
{
  std::vector<std::vector<diff::Value>> maps;
  std::vector<geom::CameraCalib> calibs;

  std::size_t num_cameras() const { return maps.size(); }
  std::size_t num_levels() const { return maps.empty() ? 0 : maps.front().size(); }
  std::size_t channels() const;
  void validate() const;
};

/// Embeddings are N x E (batch of one); reference points N x 3 in [0,1].
struct Queries
{
  diff::Value embed;
  diff::Value ref;

  std::size_t size() const { return embed.dim(0); }
};

struct QgdfConfig
{
  std::size_t embed_dim = 32;
  std::size_t image_channels = 32;
  std::size_t num_cameras = 6;
  std::size_t num_levels = 2;
  std::size_t num_points = 4;
  double offset_scale = 0.1;
  double dropout = 0.1;
  geom::PerceptionVolume volume;
};

struct QgdfParams
{
  diff::FfnParams image_logits;  // E -> N_cam * L
  diff::Linear image_proj;       // C -> E
  diff::NormAffine image_norm;
  diff::Linear offsets;        // E -> P * 2
  diff::Linear point_weights;  // E -> P
  diff::Linear lidar_proj;     // E -> E
  diff::NormAffine lidar_norm;
  diff::FfnParams gate;  // 3E -> E -> 2, last layer zero-initialized
  diff::FfnParams fuse;  // 2E -> E -> E
  diff::FfnParams position;  // 3 -> E -> E
  double offset_scale = 0.1;
  double dropout = 0.1;
};

QgdfParams make_qgdf_params(const QgdfConfig & config, diff::Rng & rng);
void visit_params(QgdfParams & params, const std::string & prefix, const diff::ParamVisitor & visit);

struct ImageBranchOut
{
  diff::Value q_bar;    // N x E
  diff::Value feature;  // N x C, the weighted sample F
  diff::Value weights;  // N x (N_cam * L), camera-major
  diff::Tensor mask;    // N x (N_cam * L)
};

struct LidarBranchOut
{
  diff::Value q_bar;    // N x E
  diff::Value grid;     // (N * P) x 2 sampling coordinates, empty when absent
  diff::Value weights;  // N x P, empty when absent
};

struct FuseOut
{
  diff::Value fused;  // N x E
  diff::Value gamma;  // N x 2, (image, lidar)
};

ImageBranchOut image_branch(
  const Queries & queries, const FeaturePyramid & pyramid, const QgdfParams & params,
  const geom::PerceptionVolume & volume = {});

LidarBranchOut lidar_branch(
  const Queries & queries, const pillars::BevMap & bev, const QgdfParams & params);

/// `frozen_query`, when given, replaces the detached query fed to the gate
/// head (used to hold that input fixed under finite differences).
FuseOut gated_fuse(
  const diff::Value & q_image, const diff::Value & q_lidar, const Queries & queries,
  const QgdfParams & params, const diff::Tensor * frozen_query = nullptr);

/// rng may be null when training is false.
diff::Value residual_update(
  const diff::Value & fused, const Queries & queries, const QgdfParams & params, bool training,
  diff::Rng * rng);

struct LayerOut
{
  Queries queries;
  ImageBranchOut image;
  LidarBranchOut lidar;
  FuseOut fuse;
};

LayerOut qgdf_layer(
  const Queries & queries, const FeaturePyramid & pyramid, const pillars::BevMap & bev,
  const QgdfParams & params, bool training, diff::Rng * rng,
  const geom::PerceptionVolume & volume = {}, const diff::Tensor * frozen_query = nullptr);

/// Detached gate inputs of every layer. While `frozen` is false a stack run
/// records them; once frozen they are replayed instead of the live values.
struct DetachedGateInputs
{
  std::vector<diff::Tensor> values;
  bool frozen = false;
};

struct StackOut
{
  Queries queries;
  std::vector<diff::Value> gammas;  // per layer, N x 2
  /// Per query lidar weight averaged over layers.
  std::vector<double> mean_lidar_gate() const;
};

StackOut qgdf_stack(
  const Queries & queries, const FeaturePyramid & pyramid, const pillars::BevMap & bev,
  const std::vector<QgdfParams> & layers, bool training, diff::Rng * rng,
  const geom::PerceptionVolume & volume = {}, DetachedGateInputs * detached = nullptr);

}  // namespace pnp::qgdf

#endif  // PNP__QGDF_HPP_

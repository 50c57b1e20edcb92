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

#ifndef PNP__GEOMETRY_HPP_
#define PNP__GEOMETRY_HPP_

#include <array>
#include <cstddef>
#include <vector>

#include "pnp/diffcore/ffn.hpp"
#include "pnp/diffcore/value.hpp"

namespace pnp::geom
{

using Vec3 = std::array<double, 3>;

/// Axis-aligned metric box every normalized reference point is relative to.
struct PerceptionVolume
{
  Vec3 min{-51.2, -51.2, -5.0};
  Vec3 max{51.2, 51.2, 3.0};

  double extent(std::size_t axis) const { return max[axis] - min[axis]; }
  bool contains(const Vec3 & p) const;
  Vec3 denormalize(const Vec3 & r) const;
  Vec3 normalize(const Vec3 & p) const;
};

/// Pinhole camera: 3x4 projection (intrinsics * extrinsics, row-major) from
/// homogeneous world points to homogeneous pixel coordinates.
struct CameraCalib
{
  std::array<double, 12> projection{};
  int width = 0;
  int height = 0;

  void validate() const;
  /// Homogeneous image coordinates (u*w, v*w, w) of a world point.
  Vec3 project(const Vec3 & world) const;
  bool operator==(const CameraCalib &) const = default;
};

struct RigConfig
{
  std::size_t num_cameras = 6;
  int width = 1600;
  int height = 900;
  double horizontal_fov_deg = 70.0;
  double mount_height = 1.5;
};

/// Cameras at the origin, yawed by 360/num_cameras degrees each, looking
/// horizontally outwards; camera 0 looks along +x.
std::vector<CameraCalib> make_ring_rig(const RigConfig & config = {});

constexpr double kMinDepth = 1e-6;

struct CameraProjection
{
  /// Per camera, N x 2 sampling coordinates in [-1, 1] (corner aligned);
  /// zero where the mask is 0. Differentiable in the reference points.
  std::vector<diff::Value> sample_coords;
  /// N x num_cameras, 1 where depth > kMinDepth and 0 <= u < W, 0 <= v < H.
  diff::Tensor mask;
  /// num_cameras x N x 2 pixel coordinates; zero for degenerate projections.
  diff::Tensor pixels;
};

/// r is N x 3 normalized reference points.
CameraProjection project_to_cameras(
  const diff::Value & r, const std::vector<CameraCalib> & rig, const PerceptionVolume & volume = {});

/// 2 * r_xy - 1, componentwise.
diff::Value bev_grid_coords(const diff::Value & r_xy);

/// phi(inverse_sigmoid(r)); r has trailing dimension 3.
diff::Value positional_code(const diff::Value & r, const diff::FfnParams & encoder);

}  // namespace pnp::geom

#endif  // PNP__GEOMETRY_HPP_

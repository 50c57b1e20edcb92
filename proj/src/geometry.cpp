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

#include "pnp/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "pnp/diffcore/ops.hpp"

namespace pnp::geom
{

using diff::Tensor;
using diff::Value;

bool PerceptionVolume::contains(const Vec3 & p) const
{
  for (std::size_t a = 0; a < 3; ++a) {
    if (p[a] < min[a] || p[a] >= max[a]) {
      return false;
    }
  }
  return true;
}

Vec3 PerceptionVolume::denormalize(const Vec3 & r) const
{
  return {min[0] + r[0] * extent(0), min[1] + r[1] * extent(1), min[2] + r[2] * extent(2)};
}

Vec3 PerceptionVolume::normalize(const Vec3 & p) const
{
  return {
    (p[0] - min[0]) / extent(0), (p[1] - min[1]) / extent(1), (p[2] - min[2]) / extent(2)};
}

void CameraCalib::validate() const
{
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument(
      "camera image size must be positive, got " + std::to_string(width) + "x" +
      std::to_string(height));
  }
  for (double v : projection) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("camera projection matrix has non-finite entries");
    }
  }
}

Vec3 CameraCalib::project(const Vec3 & world) const
{
  Vec3 out{};
  for (std::size_t row = 0; row < 3; ++row) {
    const double * p = projection.data() + row * 4;
    out[row] = p[0] * world[0] + p[1] * world[1] + p[2] * world[2] + p[3];
  }
  return out;
}

std::vector<CameraCalib> make_ring_rig(const RigConfig & config)
{
  if (config.num_cameras == 0) {
    throw std::invalid_argument("rig needs at least one camera");
  }
  const double half_fov = config.horizontal_fov_deg * std::numbers::pi / 360.0;
  const double f = 0.5 * config.width / std::tan(half_fov);
  const double cx = 0.5 * config.width;
  const double cy = 0.5 * config.height;
  std::vector<CameraCalib> rig;
  for (std::size_t i = 0; i < config.num_cameras; ++i) {
    const double yaw = 2.0 * std::numbers::pi * static_cast<double>(i) /
                       static_cast<double>(config.num_cameras);
    // Rows of the world-to-camera rotation: right, down, forward.
    const double rot[3][3] = {
      {std::sin(yaw), -std::cos(yaw), 0.0},
      {0.0, 0.0, -1.0},
      {std::cos(yaw), std::sin(yaw), 0.0}};
    const Vec3 centre{0.0, 0.0, config.mount_height};
    double t[3];
    for (int r = 0; r < 3; ++r) {
      t[r] = -(rot[r][0] * centre[0] + rot[r][1] * centre[1] + rot[r][2] * centre[2]);
    }
    const double k[3][3] = {{f, 0.0, cx}, {0.0, f, cy}, {0.0, 0.0, 1.0}};
    CameraCalib cam;
    cam.width = config.width;
    cam.height = config.height;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        double acc = 0.0;
        for (int j = 0; j < 3; ++j) {
          acc += k[r][j] * (c < 3 ? rot[j][c] : t[j]);
        }
        cam.projection[static_cast<std::size_t>(r * 4 + c)] = acc;
      }
    }
    rig.push_back(cam);
  }
  return rig;
}

CameraProjection project_to_cameras(
  const Value & r, const std::vector<CameraCalib> & rig, const PerceptionVolume & volume)
{
  if (rig.empty()) {
    throw std::invalid_argument("project_to_cameras: empty camera rig");
  }
  if (r.rank() != 2 || r.dim(1) != 3) {
    throw std::invalid_argument("reference points must be N x 3, got " + diff::shape_str(r.shape()));
  }
  const std::size_t n = r.dim(0);
  const std::size_t ncam = rig.size();
  const Value span = Value::constant({3}, {volume.extent(0), volume.extent(1), volume.extent(2)});
  const Value origin = Value::constant({3}, {volume.min[0], volume.min[1], volume.min[2]});
  const Value world = r * span + origin;

  CameraProjection out;
  out.mask = Tensor({n, ncam});
  out.pixels = Tensor({ncam, n, 2});
  for (std::size_t c = 0; c < ncam; ++c) {
    const auto & cam = rig[c];
    cam.validate();
    Tensor wt({3, 3});
    Tensor tr({3});
    for (std::size_t row = 0; row < 3; ++row) {
      for (std::size_t col = 0; col < 3; ++col) {
        wt.data[col * 3 + row] = cam.projection[row * 4 + col];
      }
      tr.data[row] = cam.projection[row * 4 + 3];
    }
    const Value hom = diff::linear(world, Value::constant(wt), Value::constant(tr));
    const Value depth = diff::slice(hom, 1, 2, 3);

    Tensor nondegenerate({n, 1});
    Tensor keep({n, 1});
    for (std::size_t q = 0; q < n; ++q) {
      const double w = depth.data()[q];
      nondegenerate.data[q] = std::abs(w) > kMinDepth ? 1.0 : 0.0;
      keep.data[q] = 1.0 - nondegenerate.data[q];
    }
    // w is replaced by 1 where degenerate so the division stays finite.
    const Value safe_depth = depth * Value::constant(nondegenerate) + Value::constant(keep);
    const Value uv = diff::slice(hom, 1, 0, 2) / safe_depth;

    Tensor valid({n, 1});
    for (std::size_t q = 0; q < n; ++q) {
      const double u = uv.data()[2 * q];
      const double v = uv.data()[2 * q + 1];
      const bool ok = nondegenerate.data[q] != 0.0 && depth.data()[q] > kMinDepth && u >= 0.0 &&
                      u < cam.width && v >= 0.0 && v < cam.height;
      valid.data[q] = ok ? 1.0 : 0.0;
      out.mask.data[q * ncam + c] = valid.data[q];
      out.pixels.data[(c * n + q) * 2] = nondegenerate.data[q] != 0.0 ? u : 0.0;
      out.pixels.data[(c * n + q) * 2 + 1] = nondegenerate.data[q] != 0.0 ? v : 0.0;
    }
    const Value scale = Value::constant(
      {2}, {2.0 / std::max(1, cam.width - 1), 2.0 / std::max(1, cam.height - 1)});
    out.sample_coords.push_back((uv * scale - 1.0) * Value::constant(valid));
  }
  return out;
}

Value bev_grid_coords(const Value & r_xy) { return r_xy * 2.0 - 1.0; }

Value positional_code(const Value & r, const diff::FfnParams & encoder)
{
  if (encoder.in_dim() != 3) {
    throw std::invalid_argument("position encoder must take 3 inputs");
  }
  return diff::ffn_apply(diff::inverse_sigmoid(r), encoder);
}

}  // namespace pnp::geom

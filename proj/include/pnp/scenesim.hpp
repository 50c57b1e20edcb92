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

// Synthetic driving scenes around a stationary ego vehicle parked on the
// island of a two-road roundabout. Vehicles circle on lane rings, pedestrians
// and cyclists on an outer sidewalk ring; a configurable share drives straight.

#ifndef PNP__SCENESIM_HPP_
#define PNP__SCENESIM_HPP_

#include <array>
#include <cstdint>
#include <vector>

#include "pnp/agents.hpp"
#include "pnp/geometry.hpp"
#include "pnp/heads.hpp"
#include "pnp/pillars.hpp"
#include "pnp/qgdf.hpp"

namespace pnp::sim
{

constexpr std::size_t kFramesPerScene = 40;
constexpr std::size_t kSweeps = 5;
constexpr double kSweepDt = 0.1;

struct SpeedPrior
{
  double min;
  double max;
};

/// Metres per second, per class.
SpeedPrior speed_prior(int cls);
/// (l, w, h) in metres, per class.
std::array<double, 3> nominal_size(int cls);

struct ImageConfig
{
  int width = 64;  // level-0 feature resolution
  int height = 32;
  std::size_t levels = 2;
  std::size_t channels = 32;
  double horizontal_fov_deg = 70.0;
  double blob_amplitude = 1.0;
  double blob_spread = 0.25;  // blob sigma as a fraction of the projected agent extent
  double noise_std = 0.3;
  double camera_noise = 1.0;  // multiplier on noise_std

  bool operator==(const ImageConfig &) const = default;
};

struct LidarConfig
{
  double density = 800.0;  // points per m^2 at 1 m, falling off with r^2
  std::size_t max_points_per_face = 40;
  std::size_t clutter_per_sweep = 120;
  double range = 51.2;
  double sensor_height = 1.8;
  double point_noise = 0.02;

  bool operator==(const LidarConfig &) const = default;
};

struct SimConfig
{
  std::size_t min_agents = 2;
  std::size_t max_agents = 8;
  /// Relative sampling weight per class; zero disables a class.
  std::array<double, kNumClasses> class_weights{0.35, 0.1, 0.05, 0.05, 0.1, 0.1, 0.25};
  double late_spawn_fraction = 0.3;
  double early_leave_fraction = 0.15;
  double straight_fraction = 0.0;
  std::vector<double> lane_radii{14.0, 18.0, 22.0, 26.0};
  std::vector<double> sidewalk_radii{31.0, 33.0};
  ImageConfig image;
  LidarConfig lidar;

  void validate() const;
  geom::RigConfig rig() const;
  bool operator==(const SimConfig &) const = default;
};

/// Closed-form motion: constant speed and yaw rate (zero for straight).
struct AgentTrack
{
  int id = 0;
  int cls = 0;
  std::array<double, 3> size{};
  double x0 = 0.0;
  double y0 = 0.0;
  double yaw0 = 0.0;
  double speed = 0.0;
  double yaw_rate = 0.0;
  std::size_t spawn = 0;    // first frame present
  std::size_t despawn = 0;  // first frame absent; may exceed the scene length

  bool alive(std::size_t frame) const { return frame >= spawn && frame < despawn; }
  bool operator==(const AgentTrack &) const = default;
};

struct AgentState
{
  int id = 0;
  int cls = 0;
  geom::Vec3 centre{};
  std::array<double, 3> size{};
  double yaw = 0.0;
  std::array<double, 2> velocity{};

  BoxVec box() const;
  bool operator==(const AgentState &) const = default;
};

/// Pose of a track at time t seconds after frame 0.
AgentState state_at(const AgentTrack & track, double t);

struct FrameRecord
{
  std::size_t index = 0;
  double timestamp = 0.0;
  std::vector<AgentState> agents;

  bool operator==(const FrameRecord &) const = default;
};

struct SceneRecord
{
  int id = 0;
  std::uint64_t seed = 0;
  SimConfig config;
  std::vector<geom::CameraCalib> calibs;
  std::vector<AgentTrack> tracks;
  std::vector<FrameRecord> frames;

  bool operator==(const SceneRecord &) const = default;
};

SceneRecord generate_scene(const SimConfig & config, int id, std::uint64_t seed);
/// Scenes 0..count-1; scene i is generated from seed + i.
std::vector<SceneRecord> generate_scenes(const SimConfig & config, std::size_t count, std::uint64_t seed);

/// Future centres at frames f+1 .. f+12, valid while the agent is alive.
void future_of(
  const AgentTrack & track, std::size_t frame, heads::Trajectory * future, heads::StepMask * valid);

const AgentTrack & track_of(const SceneRecord & scene, int agent_id);

struct FrameInputs
{
  qgdf::FeaturePyramid pyramid;
  pillars::PointCloud cloud;
};

/// Image features and LiDAR sweeps for one frame; deterministic in the scene
/// seed and frame index. `image` overrides the scene's image settings (for
/// camera degradation), `lidar` the LiDAR settings.
FrameInputs synth_frame_features(
  const SceneRecord & scene, std::size_t frame, const ImageConfig & image, const LidarConfig & lidar);
FrameInputs synth_frame_features(const SceneRecord & scene, std::size_t frame);

/// Signature vector per class with unit mean-square entries, shared by every
/// scene.
std::vector<double> class_signature(int cls, std::size_t channels);

}  // namespace pnp::sim

#endif  // PNP__SCENESIM_HPP_

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

#include "pnp/scenesim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace pnp::sim
{

using diff::Tensor;
using diff::Value;

namespace
{

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kStayForever = 1000000;

bool on_sidewalk(int cls)
{
  return cls == 5 || cls == 6;
}

std::uint64_t mix(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

bool inside_volume_xy(double x, double y)
{
  const geom::PerceptionVolume v;
  return x >= v.min[0] && x < v.max[0] && y >= v.min[1] && y < v.max[1];
}

}  // namespace

SpeedPrior speed_prior(int cls)
{
  static constexpr std::array<SpeedPrior, kNumClasses> priors{{
    {6.0, 10.0},  // car
    {4.0, 7.0},   // truck
    {4.0, 7.0},   // bus
    {4.0, 6.0},   // trailer
    {7.0, 11.0},  // motorcycle
    {3.0, 5.0},   // bicycle
    {0.8, 1.6},   // pedestrian
  }};
  return priors.at(static_cast<std::size_t>(cls));
}

std::array<double, 3> nominal_size(int cls)
{
  static constexpr std::array<std::array<double, 3>, kNumClasses> sizes{{
    {4.5, 1.9, 1.6},
    {7.0, 2.5, 3.0},
    {11.0, 2.8, 3.2},
    {9.0, 2.5, 3.5},
    {2.1, 0.8, 1.4},
    {1.8, 0.6, 1.3},
    {0.7, 0.7, 1.75},
  }};
  return sizes.at(static_cast<std::size_t>(cls));
}

void SimConfig::validate() const
{
  if (min_agents > max_agents) {
    throw std::invalid_argument("sim config: min_agents exceeds max_agents");
  }
  bool any = false;
  bool vehicles = false;
  bool walkers = false;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (class_weights[c] < 0.0 || !std::isfinite(class_weights[c])) {
      throw std::invalid_argument("sim config: class weights must be finite and non-negative");
    }
    if (class_weights[c] > 0.0) {
      any = true;
      (on_sidewalk(static_cast<int>(c)) ? walkers : vehicles) = true;
    }
  }
  if (!any) {
    throw std::invalid_argument("sim config: no agent class is enabled");
  }
  if ((vehicles && lane_radii.empty()) || (walkers && sidewalk_radii.empty())) {
    throw std::invalid_argument("sim config: an enabled class has no ring to drive on");
  }
  for (double f : {late_spawn_fraction, early_leave_fraction, straight_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw std::invalid_argument("sim config: fractions must lie in [0, 1]");
    }
  }
  if (image.width < 2 || image.height < 2 || image.levels == 0 || image.channels == 0 ||
      (image.width >> (image.levels - 1)) < 2 || (image.height >> (image.levels - 1)) < 2) {
    throw std::invalid_argument("sim config: image pyramid is too small");
  }
  if (image.noise_std < 0.0 || image.camera_noise < 0.0) {
    throw std::invalid_argument("sim config: noise must be non-negative");
  }
  if (!(image.blob_spread > 0.0)) {
    throw std::invalid_argument("sim config: blob_spread must be positive");
  }
}

geom::RigConfig SimConfig::rig() const
{
  geom::RigConfig r;
  r.width = image.width;
  r.height = image.height;
  r.horizontal_fov_deg = image.horizontal_fov_deg;
  return r;
}

BoxVec AgentState::box() const
{
  return make_box(centre[0], centre[1], centre[2], size[0], size[1], size[2], yaw);
}

AgentState state_at(const AgentTrack & track, double t)
{
  AgentState s;
  s.id = track.id;
  s.cls = track.cls;
  s.size = track.size;
  const double w = track.yaw_rate;
  s.yaw = track.yaw0 + w * t;
  if (std::abs(w) < 1e-12) {
    s.centre = {
      track.x0 + track.speed * std::cos(track.yaw0) * t,
      track.y0 + track.speed * std::sin(track.yaw0) * t, 0.0};
  } else {
    const double r = track.speed / w;
    s.centre = {
      track.x0 + r * (std::sin(s.yaw) - std::sin(track.yaw0)),
      track.y0 - r * (std::cos(s.yaw) - std::cos(track.yaw0)), 0.0};
  }
  s.centre[2] = 0.5 * track.size[2];
  s.velocity = {track.speed * std::cos(s.yaw), track.speed * std::sin(s.yaw)};
  return s;
}

SceneRecord generate_scene(const SimConfig & config, int id, std::uint64_t seed)
{
  config.validate();
  SceneRecord scene;
  scene.id = id;
  scene.seed = seed;
  scene.config = config;
  scene.calibs = geom::make_ring_rig(config.rig());

  std::mt19937_64 rng(mix(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::discrete_distribution<int> pick_class(config.class_weights.begin(), config.class_weights.end());
  std::uniform_int_distribution<std::size_t> count(config.min_agents, config.max_agents);
  const std::size_t n = count(rng);
  const std::size_t horizon_end = kFramesPerScene + kHorizon;

  for (std::size_t i = 0; i < n; ++i) {
    AgentTrack t;
    t.id = static_cast<int>(i) + 1;
    t.cls = pick_class(rng);
    const auto nominal = nominal_size(t.cls);
    for (std::size_t k = 0; k < 3; ++k) {
      t.size[k] = nominal[k] * (0.9 + 0.2 * unit(rng));
    }
    const auto prior = speed_prior(t.cls);
    t.speed = prior.min + (prior.max - prior.min) * unit(rng);

    double radius = 0.0;
    double direction = 1.0;
    if (on_sidewalk(t.cls)) {
      const auto & rings = config.sidewalk_radii;
      radius = rings[static_cast<std::size_t>(unit(rng) * static_cast<double>(rings.size())) % rings.size()];
      radius += 1.6 * (unit(rng) - 0.5);
      direction = unit(rng) < 0.5 ? 1.0 : -1.0;
    } else {
      const auto & rings = config.lane_radii;
      const auto lane = static_cast<std::size_t>(unit(rng) * static_cast<double>(rings.size())) % rings.size();
      radius = rings[lane] + 0.6 * (unit(rng) - 0.5);
      // Inner road counter-clockwise, outer road clockwise.
      direction = lane < (rings.size() + 1) / 2 ? 1.0 : -1.0;
    }
    // The ring position is where the agent stands when it spawns; the
    // closed-form motion is then wound back to t = 0.
    const double theta = 2.0 * kPi * unit(rng);
    t.x0 = radius * std::cos(theta);
    t.y0 = radius * std::sin(theta);
    t.yaw0 = theta + direction * 0.5 * kPi;
    t.yaw_rate = direction * t.speed / radius;
    if (unit(rng) < config.straight_fraction) {
      t.yaw_rate = 0.0;
    }
    t.spawn = unit(rng) < config.late_spawn_fraction ? 1 + static_cast<std::size_t>(unit(rng) * 29.0) : 0;
    if (t.spawn > 0) {
      const auto origin = state_at(t, -static_cast<double>(t.spawn) * kFrameDt);
      t.x0 = origin.centre[0];
      t.y0 = origin.centre[1];
      t.yaw0 = origin.yaw;
    }
    t.despawn = kStayForever;
    if (unit(rng) < config.early_leave_fraction) {
      t.despawn = std::min<std::size_t>(t.spawn + 4 + static_cast<std::size_t>(unit(rng) * 30.0), kFramesPerScene);
    }
    // Straight drivers leave once they exit the perception volume.
    for (std::size_t f = t.spawn; f < horizon_end && f < t.despawn; ++f) {
      const auto s = state_at(t, static_cast<double>(f) * kFrameDt);
      if (!inside_volume_xy(s.centre[0], s.centre[1])) {
        t.despawn = f;
        break;
      }
    }
    if (t.despawn <= t.spawn) {
      t.despawn = t.spawn + 1;
    }
    scene.tracks.push_back(t);
  }

  for (std::size_t f = 0; f < kFramesPerScene; ++f) {
    FrameRecord fr;
    fr.index = f;
    fr.timestamp = static_cast<double>(f) * kFrameDt;
    for (const auto & t : scene.tracks) {
      if (t.alive(f)) {
        fr.agents.push_back(state_at(t, fr.timestamp));
      }
    }
    scene.frames.push_back(std::move(fr));
  }
  return scene;
}

void future_of(
  const AgentTrack & track, std::size_t frame, heads::Trajectory * future, heads::StepMask * valid)
{
  for (std::size_t k = 0; k < kHorizon; ++k) {
    const std::size_t f = frame + k + 1;
    const auto s = state_at(track, static_cast<double>(f) * kFrameDt);
    (*future)[k] = {s.centre[0], s.centre[1]};
    (*valid)[k] = track.alive(f);
  }
}

std::vector<SceneRecord> generate_scenes(const SimConfig & config, std::size_t count, std::uint64_t seed)
{
  std::vector<SceneRecord> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    scenes.push_back(generate_scene(config, static_cast<int>(i), seed + i));
  }
  return scenes;
}

const AgentTrack & track_of(const SceneRecord & scene, int agent_id)
{
  for (const auto & t : scene.tracks) {
    if (t.id == agent_id) {
      return t;
    }
  }
  throw std::out_of_range("scene " + std::to_string(scene.id) + " has no agent " + std::to_string(agent_id));
}

std::vector<double> class_signature(int cls, std::size_t channels)
{
  std::mt19937_64 rng(mix(0x5167AA7E00ULL + static_cast<std::uint64_t>(cls)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> sig(channels);
  double norm = 0.0;
  for (double & v : sig) {
    v = normal(rng);
    norm += v * v;
  }
  const double scale = std::sqrt(static_cast<double>(channels) / norm);
  for (double & v : sig) {
    v *= scale;
  }
  return sig;
}

namespace
{

void render_blob(
  Tensor & map, double u, double v, double sigma, const std::vector<double> & signature, double amplitude)
{
  const std::size_t c = map.shape[0];
  const std::size_t h = map.shape[1];
  const std::size_t w = map.shape[2];
  const double reach = 3.0 * sigma;
  const auto lo_x = static_cast<long>(std::floor(std::max(0.0, u - reach)));
  const auto hi_x = static_cast<long>(std::ceil(std::min(static_cast<double>(w - 1), u + reach)));
  const auto lo_y = static_cast<long>(std::floor(std::max(0.0, v - reach)));
  const auto hi_y = static_cast<long>(std::ceil(std::min(static_cast<double>(h - 1), v + reach)));
  for (long y = lo_y; y <= hi_y; ++y) {
    for (long x = lo_x; x <= hi_x; ++x) {
      const double dx = static_cast<double>(x) - u;
      const double dy = static_cast<double>(y) - v;
      const double g = amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      for (std::size_t ch = 0; ch < c; ++ch) {
        map.data[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] += g * signature[ch];
      }
    }
  }
}

struct Face
{
  geom::Vec3 centre;
  geom::Vec3 normal;
  geom::Vec3 axis_a;  // half-extent vectors spanning the face
  geom::Vec3 axis_b;
};

std::vector<Face> upper_faces(const AgentState & s)
{
  const double c = std::cos(s.yaw);
  const double sn = std::sin(s.yaw);
  const geom::Vec3 fwd{c, sn, 0.0};
  const geom::Vec3 left{-sn, c, 0.0};
  const geom::Vec3 up{0.0, 0.0, 1.0};
  const double hl = 0.5 * s.size[0];
  const double hw = 0.5 * s.size[1];
  const double hh = 0.5 * s.size[2];
  auto scaled = [](const geom::Vec3 & a, double k) { return geom::Vec3{a[0] * k, a[1] * k, a[2] * k}; };
  auto offset = [&](const geom::Vec3 & a, double k) {
    return geom::Vec3{s.centre[0] + a[0] * k, s.centre[1] + a[1] * k, s.centre[2] + a[2] * k};
  };
  return {
    {offset(fwd, hl), fwd, scaled(left, hw), scaled(up, hh)},
    {offset(fwd, -hl), scaled(fwd, -1.0), scaled(left, hw), scaled(up, hh)},
    {offset(left, hw), left, scaled(fwd, hl), scaled(up, hh)},
    {offset(left, -hw), scaled(left, -1.0), scaled(fwd, hl), scaled(up, hh)},
    {offset(up, hh), up, scaled(fwd, hl), scaled(left, hw)},
  };
}

}  // namespace

FrameInputs synth_frame_features(
  const SceneRecord & scene, std::size_t frame, const ImageConfig & image, const LidarConfig & lidar)
{
  if (frame >= scene.frames.size()) {
    throw std::out_of_range(
      "synth_frame_features: frame " + std::to_string(frame) + " outside scene " + std::to_string(scene.id));
  }
  std::mt19937_64 rng(mix(mix(scene.seed) ^ (0xF00DULL + frame)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto & agents = scene.frames[frame].agents;

  FrameInputs out;
  geom::RigConfig rig_config = scene.config.rig();
  rig_config.width = image.width;
  rig_config.height = image.height;
  rig_config.horizontal_fov_deg = image.horizontal_fov_deg;
  out.pyramid.calibs = geom::make_ring_rig(rig_config);
  const double focal =
    0.5 * static_cast<double>(image.width) / std::tan(0.5 * image.horizontal_fov_deg * kPi / 180.0);
  const double noise = image.noise_std * image.camera_noise;
  std::vector<std::vector<double>> signatures;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    signatures.push_back(class_signature(static_cast<int>(c), image.channels));
  }

  for (const auto & calib : out.pyramid.calibs) {
    std::vector<Value> levels;
    for (std::size_t l = 0; l < image.levels; ++l) {
      const auto w = static_cast<std::size_t>(image.width >> l);
      const auto h = static_cast<std::size_t>(image.height >> l);
      Tensor map({image.channels, h, w});
      for (double & v : map.data) {
        v = noise * normal(rng);
      }
      const double sx = static_cast<double>(w - 1) / static_cast<double>(image.width - 1);
      const double sy = static_cast<double>(h - 1) / static_cast<double>(image.height - 1);
      for (const auto & a : agents) {
        const auto p = calib.project(a.centre);
        if (p[2] <= geom::kMinDepth) {
          continue;
        }
        const double u = p[0] / p[2];
        const double v = p[1] / p[2];
        if (u < 0.0 || u >= static_cast<double>(image.width) || v < 0.0 || v >= static_cast<double>(image.height)) {
          continue;
        }
        const double extent = std::max(a.size[0], a.size[1]);
        const double sigma0 = std::clamp(image.blob_spread * focal * extent / p[2], 0.8, 8.0);
        render_blob(
          map, u * sx, v * sy, std::max(0.6, sigma0 * sx), signatures[static_cast<std::size_t>(a.cls)],
          image.blob_amplitude);
      }
      levels.push_back(Value::constant(std::move(map)));
    }
    out.pyramid.maps.push_back(std::move(levels));
  }

  const geom::Vec3 sensor{0.0, 0.0, lidar.sensor_height};
  const double base_time = static_cast<double>(frame) * kFrameDt;
  const geom::PerceptionVolume volume;
  for (std::size_t s = 0; s < kSweeps; ++s) {
    const double dt = -kSweepDt * static_cast<double>(s);
    for (const auto & a : agents) {
      const auto pose = state_at(track_of(scene, a.id), base_time + dt);
      if (std::hypot(pose.centre[0], pose.centre[1]) > lidar.range) {
        continue;
      }
      for (const auto & face : upper_faces(pose)) {
        const geom::Vec3 to_sensor{
          sensor[0] - face.centre[0], sensor[1] - face.centre[1], sensor[2] - face.centre[2]};
        const double facing =
          to_sensor[0] * face.normal[0] + to_sensor[1] * face.normal[1] + to_sensor[2] * face.normal[2];
        if (facing <= 0.0) {
          continue;
        }
        const double r2 = std::max(
          1.0, to_sensor[0] * to_sensor[0] + to_sensor[1] * to_sensor[1] + to_sensor[2] * to_sensor[2]);
        const double la = std::hypot(face.axis_a[0], face.axis_a[1], face.axis_a[2]);
        const double lb = std::hypot(face.axis_b[0], face.axis_b[1], face.axis_b[2]);
        const double expected = std::min(
          static_cast<double>(lidar.max_points_per_face), lidar.density * 4.0 * la * lb / r2);
        auto count = static_cast<std::size_t>(expected);
        if (unit(rng) < expected - static_cast<double>(count)) {
          ++count;
        }
        for (std::size_t i = 0; i < count; ++i) {
          const double ka = 2.0 * unit(rng) - 1.0;
          const double kb = 2.0 * unit(rng) - 1.0;
          pillars::LidarPoint p;
          p.x = face.centre[0] + ka * face.axis_a[0] + kb * face.axis_b[0] + lidar.point_noise * normal(rng);
          p.y = face.centre[1] + ka * face.axis_a[1] + kb * face.axis_b[1] + lidar.point_noise * normal(rng);
          p.z = face.centre[2] + ka * face.axis_a[2] + kb * face.axis_b[2] + lidar.point_noise * normal(rng);
          p.intensity = 0.5 + 0.3 * unit(rng);
          p.dt = dt;
          if (volume.contains({p.x, p.y, p.z})) {
            out.cloud.points.push_back(p);
          }
        }
      }
    }
    for (std::size_t i = 0; i < lidar.clutter_per_sweep; ++i) {
      pillars::LidarPoint p;
      p.x = volume.min[0] + volume.extent(0) * unit(rng);
      p.y = volume.min[1] + volume.extent(1) * unit(rng);
      p.z = 0.15 * unit(rng);
      p.intensity = 0.2 * unit(rng);
      p.dt = dt;
      if (std::hypot(p.x, p.y) <= lidar.range && volume.contains({p.x, p.y, p.z})) {
        out.cloud.points.push_back(p);
      }
    }
  }
  return out;
}

FrameInputs synth_frame_features(const SceneRecord & scene, std::size_t frame)
{
  return synth_frame_features(scene, frame, scene.config.image, scene.config.lidar);
}

}  // namespace pnp::sim

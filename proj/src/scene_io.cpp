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

#include "pnp/scene_io.hpp"

#include <fstream>
#include <set>

namespace pnp::io
{

using nlohmann::json;

namespace
{

template <class T>
void take(const json & j, const char * key, T & out)
{
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

void reject_unknown(const json & j, const std::set<std::string> & known, const std::string & where)
{
  for (const auto & [key, value] : j.items()) {
    if (!known.count(key)) {
      throw FormatError(where + ": unknown key '" + key + "'");
    }
  }
}

json class_json(int cls)
{
  return std::string(class_name(cls));
}

int class_from_json(const json & j)
{
  const int c = class_from_name(j.get<std::string>());
  if (c < 0 || c == kEmptyClass) {
    throw FormatError("unknown agent class '" + j.get<std::string>() + "'");
  }
  return c;
}

json track_json(const sim::AgentTrack & t)
{
  return {
    {"id", t.id},     {"class", class_json(t.cls)}, {"size", t.size},         {"x0", t.x0},
    {"y0", t.y0},     {"yaw0", t.yaw0},             {"speed", t.speed},       {"yaw_rate", t.yaw_rate},
    {"spawn", t.spawn}, {"despawn", t.despawn}};
}

sim::AgentTrack track_from(const json & j)
{
  sim::AgentTrack t;
  t.id = j.at("id").get<int>();
  t.cls = class_from_json(j.at("class"));
  t.size = j.at("size").get<std::array<double, 3>>();
  t.x0 = j.at("x0").get<double>();
  t.y0 = j.at("y0").get<double>();
  t.yaw0 = j.at("yaw0").get<double>();
  t.speed = j.at("speed").get<double>();
  t.yaw_rate = j.at("yaw_rate").get<double>();
  t.spawn = j.at("spawn").get<std::size_t>();
  t.despawn = j.at("despawn").get<std::size_t>();
  return t;
}

json agent_json(const sim::AgentState & a)
{
  return {
    {"id", a.id},     {"class", class_json(a.cls)}, {"centre", a.centre},
    {"size", a.size}, {"yaw", a.yaw},               {"velocity", a.velocity}};
}

sim::AgentState agent_from(const json & j)
{
  sim::AgentState a;
  a.id = j.at("id").get<int>();
  a.cls = class_from_json(j.at("class"));
  a.centre = j.at("centre").get<geom::Vec3>();
  a.size = j.at("size").get<std::array<double, 3>>();
  a.yaw = j.at("yaw").get<double>();
  a.velocity = j.at("velocity").get<std::array<double, 2>>();
  return a;
}

// Parses one line; names the record on failure.
json parse_record(const std::string & line, std::size_t index, const std::string & path)
{
  try {
    return json::parse(line);
  } catch (const json::exception & e) {
    throw FormatError(path + ": record " + std::to_string(index) + " is corrupt or truncated: " + e.what());
  }
}

std::vector<std::string> read_lines(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open " + path);
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      lines.push_back(line);
    }
  }
  if (lines.empty()) {
    throw FormatError(path + ": empty file, missing header");
  }
  return lines;
}

void check_header(const json & header, const std::string & format, int version, const std::string & path)
{
  if (!header.is_object() || header.value("format", "") != format) {
    throw FormatError(path + ": not a " + format + " file");
  }
  const int got = header.value("version", -1);
  if (got != version) {
    throw FormatError(
      path + ": unsupported " + format + " version " + std::to_string(got) + " (expected " +
      std::to_string(version) + ")");
  }
}

std::ofstream open_out(const std::string & path)
{
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot write " + path);
  }
  return out;
}

}  // namespace

json to_json(const sim::SimConfig & c)
{
  return {
    {"min_agents", c.min_agents},
    {"max_agents", c.max_agents},
    {"class_weights", c.class_weights},
    {"late_spawn_fraction", c.late_spawn_fraction},
    {"early_leave_fraction", c.early_leave_fraction},
    {"straight_fraction", c.straight_fraction},
    {"lane_radii", c.lane_radii},
    {"sidewalk_radii", c.sidewalk_radii},
    {"image",
     {{"width", c.image.width},
      {"height", c.image.height},
      {"levels", c.image.levels},
      {"channels", c.image.channels},
      {"horizontal_fov_deg", c.image.horizontal_fov_deg},
      {"blob_amplitude", c.image.blob_amplitude},
      {"blob_spread", c.image.blob_spread},
      {"noise_std", c.image.noise_std},
      {"camera_noise", c.image.camera_noise}}},
    {"lidar",
     {{"density", c.lidar.density},
      {"max_points_per_face", c.lidar.max_points_per_face},
      {"clutter_per_sweep", c.lidar.clutter_per_sweep},
      {"range", c.lidar.range},
      {"sensor_height", c.lidar.sensor_height},
      {"point_noise", c.lidar.point_noise}}},
  };
}

sim::SimConfig sim_config_from_json(const json & j)
{
  sim::SimConfig c;
  reject_unknown(
    j,
    {"min_agents", "max_agents", "class_weights", "late_spawn_fraction", "early_leave_fraction",
     "straight_fraction", "lane_radii", "sidewalk_radii", "image", "lidar"},
    "sim config");
  take(j, "min_agents", c.min_agents);
  take(j, "max_agents", c.max_agents);
  take(j, "class_weights", c.class_weights);
  take(j, "late_spawn_fraction", c.late_spawn_fraction);
  take(j, "early_leave_fraction", c.early_leave_fraction);
  take(j, "straight_fraction", c.straight_fraction);
  take(j, "lane_radii", c.lane_radii);
  take(j, "sidewalk_radii", c.sidewalk_radii);
  if (j.contains("image")) {
    const auto & im = j.at("image");
    reject_unknown(
      im,
      {"width", "height", "levels", "channels", "horizontal_fov_deg", "blob_amplitude", "blob_spread", "noise_std",
       "camera_noise"},
      "sim config image");
    take(im, "width", c.image.width);
    take(im, "height", c.image.height);
    take(im, "levels", c.image.levels);
    take(im, "channels", c.image.channels);
    take(im, "horizontal_fov_deg", c.image.horizontal_fov_deg);
    take(im, "blob_amplitude", c.image.blob_amplitude);
    take(im, "blob_spread", c.image.blob_spread);
    take(im, "noise_std", c.image.noise_std);
    take(im, "camera_noise", c.image.camera_noise);
  }
  if (j.contains("lidar")) {
    const auto & li = j.at("lidar");
    reject_unknown(
      li, {"density", "max_points_per_face", "clutter_per_sweep", "range", "sensor_height", "point_noise"},
      "sim config lidar");
    take(li, "density", c.lidar.density);
    take(li, "max_points_per_face", c.lidar.max_points_per_face);
    take(li, "clutter_per_sweep", c.lidar.clutter_per_sweep);
    take(li, "range", c.lidar.range);
    take(li, "sensor_height", c.lidar.sensor_height);
    take(li, "point_noise", c.lidar.point_noise);
  }
  c.validate();
  return c;
}

void write_scenes(
  const std::string & path, const std::vector<sim::SceneRecord> & scenes, const json & run_config)
{
  auto out = open_out(path);
  json header{{"format", "pnp-scene"}, {"version", kSceneVersion}, {"scenes", scenes.size()}};
  if (!run_config.is_null()) {
    header["run_config"] = run_config;
  }
  out << header.dump() << '\n';
  for (const auto & s : scenes) {
    json calibs = json::array();
    for (const auto & c : s.calibs) {
      calibs.push_back({{"projection", c.projection}, {"width", c.width}, {"height", c.height}});
    }
    json tracks = json::array();
    for (const auto & t : s.tracks) {
      tracks.push_back(track_json(t));
    }
    out << json{
             {"record", "scene"}, {"id", s.id}, {"seed", s.seed}, {"config", to_json(s.config)},
             {"calibs", calibs}, {"tracks", tracks}, {"frames", s.frames.size()}}
             .dump()
        << '\n';
    for (const auto & f : s.frames) {
      json agents = json::array();
      for (const auto & a : f.agents) {
        agents.push_back(agent_json(a));
      }
      out << json{
               {"record", "frame"}, {"scene", s.id}, {"index", f.index}, {"timestamp", f.timestamp},
               {"agents", agents}}
               .dump()
          << '\n';
    }
  }
  if (!out) {
    throw FormatError("failed writing " + path);
  }
}

std::vector<sim::SceneRecord> read_scenes(const std::string & path)
{
  const auto lines = read_lines(path);
  const json header = parse_record(lines[0], 0, path);
  check_header(header, "pnp-scene", kSceneVersion, path);
  const auto expected = header.at("scenes").get<std::size_t>();

  std::vector<sim::SceneRecord> scenes;
  std::size_t frames_left = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json r = parse_record(lines[i], i, path);
    const std::string where = path + ": record " + std::to_string(i);
    try {
      const auto kind = r.at("record").get<std::string>();
      if (kind == "scene") {
        if (frames_left != 0) {
          throw FormatError(where + ": previous scene is missing " + std::to_string(frames_left) + " frames");
        }
        sim::SceneRecord s;
        s.id = r.at("id").get<int>();
        s.seed = r.at("seed").get<std::uint64_t>();
        s.config = sim_config_from_json(r.at("config"));
        for (const auto & c : r.at("calibs")) {
          geom::CameraCalib calib;
          calib.projection = c.at("projection").get<std::array<double, 12>>();
          calib.width = c.at("width").get<int>();
          calib.height = c.at("height").get<int>();
          calib.validate();
          s.calibs.push_back(calib);
        }
        for (const auto & t : r.at("tracks")) {
          s.tracks.push_back(track_from(t));
        }
        frames_left = r.at("frames").get<std::size_t>();
        scenes.push_back(std::move(s));
      } else if (kind == "frame") {
        if (scenes.empty() || frames_left == 0) {
          throw FormatError(where + ": frame record without an open scene");
        }
        auto & s = scenes.back();
        if (r.at("scene").get<int>() != s.id || r.at("index").get<std::size_t>() != s.frames.size()) {
          throw FormatError(where + ": frame out of sequence");
        }
        sim::FrameRecord f;
        f.index = r.at("index").get<std::size_t>();
        f.timestamp = r.at("timestamp").get<double>();
        for (const auto & a : r.at("agents")) {
          f.agents.push_back(agent_from(a));
        }
        s.frames.push_back(std::move(f));
        --frames_left;
      } else {
        throw FormatError(where + ": unknown record type '" + kind + "'");
      }
    } catch (const FormatError &) {
      throw;
    } catch (const std::exception & e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (frames_left != 0) {
    throw FormatError(
      path + ": truncated after record " + std::to_string(lines.size() - 1) + ", scene missing " +
      std::to_string(frames_left) + " frames");
  }
  if (scenes.size() != expected) {
    throw FormatError(
      path + ": header announces " + std::to_string(expected) + " scenes, found " +
      std::to_string(scenes.size()));
  }
  return scenes;
}

void write_predictions(
  const std::string & path, const std::vector<PredictionRecord> & records, const json & run_config)
{
  auto out = open_out(path);
  out << json{
           {"format", "pnp-pred"}, {"version", kPredictionVersion}, {"records", records.size()},
           {"config", run_config}}
           .dump()
      << '\n';
  for (const auto & p : records) {
    out << json{
             {"scene", p.scene},          {"frame", p.frame},
             {"track_id", p.track_id},    {"class", class_json(p.cls)},
             {"score", p.score},          {"centre", p.centre},
             {"trajectory", p.trajectory}, {"lidar_gate", p.lidar_gate},
             {"lidar_points", p.lidar_points}}
             .dump()
        << '\n';
  }
  if (!out) {
    throw FormatError("failed writing " + path);
  }
}

PredictionFile read_predictions(const std::string & path)
{
  const auto lines = read_lines(path);
  const json header = parse_record(lines[0], 0, path);
  check_header(header, "pnp-pred", kPredictionVersion, path);
  PredictionFile file;
  file.run_config = header.value("config", json::object());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json r = parse_record(lines[i], i, path);
    try {
      PredictionRecord p;
      p.scene = r.at("scene").get<int>();
      p.frame = r.at("frame").get<std::size_t>();
      p.track_id = r.at("track_id").get<int>();
      p.cls = class_from_json(r.at("class"));
      p.score = r.at("score").get<double>();
      p.centre = r.at("centre").get<geom::Vec3>();
      p.trajectory = r.at("trajectory").get<std::vector<double>>();
      p.lidar_gate = r.at("lidar_gate").get<double>();
      p.lidar_points = r.at("lidar_points").get<std::size_t>();
      if (p.trajectory.size() != kNumModes * kHorizon * 2) {
        throw FormatError("trajectory must hold 6 x 12 x 2 values");
      }
      file.records.push_back(std::move(p));
    } catch (const std::exception & e) {
      throw FormatError(path + ": record " + std::to_string(i) + ": " + e.what());
    }
  }
  if (file.records.size() != header.at("records").get<std::size_t>()) {
    throw FormatError(
      path + ": truncated, header announces " + std::to_string(header.at("records").get<std::size_t>()) +
      " records, found " + std::to_string(file.records.size()));
  }
  return file;
}

}  // namespace pnp::io

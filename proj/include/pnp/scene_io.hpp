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

// Line-delimited JSON scene (.scn) and prediction (.pred) files. The first
// line is a header carrying the format name and schema version; every later
// line is one record.

#ifndef PNP__SCENE_IO_HPP_
#define PNP__SCENE_IO_HPP_

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pnp/scenesim.hpp"

namespace pnp::io
{

constexpr int kSceneVersion = 1;
constexpr int kPredictionVersion = 1;

class FormatError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const sim::SimConfig & config);
/// Missing keys keep their defaults; unknown keys are rejected.
sim::SimConfig sim_config_from_json(const nlohmann::json & j);

/// `run_config`, when given, is stored in the header for provenance.
void write_scenes(
  const std::string & path, const std::vector<sim::SceneRecord> & scenes,
  const nlohmann::json & run_config = nullptr);
std::vector<sim::SceneRecord> read_scenes(const std::string & path);

struct PredictionRecord
{
  int scene = 0;
  std::size_t frame = 0;
  int track_id = 0;
  int cls = 0;
  double score = 0.0;
  geom::Vec3 centre{};
  std::vector<double> trajectory;  // K x 12 x 2
  double lidar_gate = 0.0;         // lidar weight averaged over layers
  std::size_t lidar_points = 0;    // points inside the predicted box

  bool operator==(const PredictionRecord &) const = default;
};

void write_predictions(
  const std::string & path, const std::vector<PredictionRecord> & records,
  const nlohmann::json & run_config);

struct PredictionFile
{
  nlohmann::json run_config;
  std::vector<PredictionRecord> records;
};

PredictionFile read_predictions(const std::string & path);

}  // namespace pnp::io

#endif  // PNP__SCENE_IO_HPP_

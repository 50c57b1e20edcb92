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

// End-to-end frame pipeline: pillars -> fusion layers -> memory bank ->
// heads -> matching -> losses, plus training, evaluation and checkpoints.

#ifndef PNP__PIPELINE_HPP_
#define PNP__PIPELINE_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pnp/heads.hpp"
#include "pnp/metrics.hpp"
#include "pnp/pillars.hpp"
#include "pnp/qgdf.hpp"
#include "pnp/scene_io.hpp"
#include "pnp/scenesim.hpp"
#include "pnp/tracking.hpp"

namespace pnp::pipe
{

struct ModelConfig
{
  std::size_t embed_dim = 32;
  std::size_t num_queries = 64;  // newborn pool
  std::size_t num_points = 4;
  std::size_t num_layers = 3;
  double offset_scale = 0.1;
  double dropout = 0.1;
  double bev_cell = 0.8;
  std::size_t num_cameras = 6;
  std::size_t num_levels = 2;
  std::size_t image_channels = 32;

  void validate() const;
  qgdf::QgdfConfig qgdf() const;
  bool operator==(const ModelConfig &) const = default;
};

struct Model
{
  ModelConfig config;
  diff::Value query_embed;  // num_queries x E
  diff::Value query_ref;    // num_queries x 3, pre-sigmoid
  pillars::PillarEncoderParams pillars;
  std::vector<qgdf::QgdfParams> layers;
  track::TemporalParams temporal;
  heads::HeadParams heads;
};

Model make_model(const ModelConfig & config, std::uint64_t seed);
void visit_params(Model & model, const diff::ParamVisitor & visit);
std::size_t parameter_count(Model & model);

/// One frame's forward pass with the current bank in front of the newborns.
struct Forward
{
  qgdf::Queries input;
  qgdf::StackOut stack;
  diff::Value refreshed;  // bank-attended queries fed to the heads
  heads::Decoded out;
  std::size_t num_tracks = 0;
  pillars::Pillars pillars;

  std::size_t size() const { return out.size(); }
};

pillars::BevMap build_bev(const Model & model, const pillars::PointCloud & cloud, bool no_lidar,
                          pillars::Pillars * layout = nullptr);

Forward forward_frame(
  const Model & model, const sim::FrameInputs & inputs, const track::TrackBank & bank, bool training,
  diff::Rng * rng, bool no_lidar);

/// Same, with the BEV already built (so callers can reuse or replace it).
/// `detached` is handed to the fusion stack (gradient checks freeze it).
Forward forward_frame(
  const Model & model, const qgdf::FeaturePyramid & pyramid, const pillars::BevMap & bev,
  const track::TrackBank & bank, bool training, diff::Rng * rng,
  qgdf::DetachedGateInputs * detached = nullptr);

std::vector<heads::GtAgent> frame_targets(const sim::SceneRecord & scene, std::size_t frame);

struct FrameLoss
{
  heads::Losses losses;
  std::vector<std::optional<std::size_t>> gt_of;
  track::FramePlan plan;
  track::TrackBank next_bank;
};

/// Matching, losses and the training-mode bank update for one forward pass.
FrameLoss frame_loss(
  const Forward & fwd, const std::vector<heads::GtAgent> & gts, const track::TrackBank & bank,
  const geom::PerceptionVolume & volume = {});

/// Evaluation-mode bank update; also returns the track id of every query
/// that survives (nullopt otherwise).
track::TrackBank eval_bank_update(
  const Forward & fwd, const track::TrackBank & bank, std::vector<std::optional<int>> * ids,
  const geom::PerceptionVolume & volume = {});

struct TrainConfig
{
  std::size_t steps = 300;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double clip_norm = 5.0;
  bool cosine_decay = true;     // learning rate follows a half cosine to zero
  std::size_t clip_frames = 3;  // consecutive frames per clip
  std::size_t clips_per_step = 1;
  std::vector<double> camera_noise_choices{1.0, 4.0};
  std::uint64_t seed = 7;

  bool operator==(const TrainConfig &) const = default;
};

struct RunConfig
{
  ModelConfig model;
  sim::SimConfig sim;
  TrainConfig train;
  std::size_t num_scenes = 200;
  std::uint64_t seed = 7;
  bool no_lidar = false;
  double camera_noise = 1.0;  // evaluation-time camera degradation
  double score_threshold = 0.0;  // evaluation-time reporting threshold

  bool operator==(const RunConfig &) const = default;
};

nlohmann::json to_json(const RunConfig & config);
/// Missing keys keep defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json & j);

struct StepLog
{
  std::size_t step = 0;
  double total = 0.0;
  double cls = 0.0;
  double coord = 0.0;
  double trajectory = 0.0;
  double camera_noise = 1.0;
};

class DivergenceError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

using StepCallback = std::function<void(const StepLog &)>;

/// Momentum gradient descent over clips of consecutive frames. Throws
/// DivergenceError naming the offending loss term on a non-finite loss.
std::vector<StepLog> train(
  Model & model, const std::vector<sim::SceneRecord> & scenes, const TrainConfig & config, bool no_lidar,
  const StepCallback & on_step = {});

/// Mean per-frame losses of `model` over a fixed, noise-free set of clips:
/// the first `num_clips` scenes, `clip_frames` frames from frame `start`,
/// no dropout. Used to compare a model before and after training.
StepLog fixed_set_loss(
  const Model & model, const std::vector<sim::SceneRecord> & scenes, std::size_t num_clips,
  std::size_t clip_frames, std::size_t start, bool no_lidar);

struct GateRow
{
  int scene = 0;
  std::size_t frame = 0;
  int track_id = 0;
  std::size_t lidar_points = 0;
  double lidar_gate = 0.0;
};

struct GateBin
{
  std::string label;
  std::size_t count = 0;
  double mean_gate = 0.0;
};

struct GateReport
{
  std::vector<GateRow> rows;
  std::vector<GateBin> bins;
  double mean_gate = 0.0;
};

/// Bins <5, 5-10, 10-20, ..., 90-100, >100 by LiDAR point count.
std::vector<GateBin> bin_gates(const std::vector<GateRow> & rows);

struct EvalOptions
{
  bool no_lidar = false;
  double camera_noise = 1.0;
  // A query is reported when its best real-class probability reaches this;
  // queries the bank does not carry are reported with track id -1.
  double score_threshold = 0.0;
  std::size_t max_frames = sim::kFramesPerScene;
  std::size_t threads = 0;  // 0 picks the hardware concurrency
};

struct EvalResult
{
  metrics::Report report;
  metrics::Displacement cv_baseline;  // constant velocity from ground truth, same pairs
  std::vector<io::PredictionRecord> predictions;
  GateReport gates;
  double mean_query_gate = 0.0;  // over every query of every frame
};

EvalResult evaluate_scenes(
  const Model & model, const std::vector<sim::SceneRecord> & scenes, const EvalOptions & options);

/// Flat metrics document with exactly the eight headline keys.
nlohmann::json metrics_json(const metrics::Report & report);

/// Points of `cloud` inside the oriented box.
std::size_t points_in_box(const pillars::PointCloud & cloud, const BoxVec & box);

void save_checkpoint(const std::string & path, Model & model, const RunConfig & config);
/// Throws when the stored dimensions disagree with `expected`.
Model load_checkpoint(const std::string & path, const ModelConfig & expected);
RunConfig checkpoint_config(const std::string & path);

}  // namespace pnp::pipe

#endif  // PNP__PIPELINE_HPP_

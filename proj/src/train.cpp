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

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "pnp/diffcore/ops.hpp"
#include "pnp/pipeline.hpp"

namespace pnp::pipe
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
  if (!j.is_object()) {
    throw io::FormatError(where + ": expected an object");
  }
  for (const auto & [key, value] : j.items()) {
    if (!known.count(key)) {
      throw io::FormatError(where + ": unknown key '" + key + "'");
    }
  }
}

json model_json(const ModelConfig & m)
{
  return {
    {"embed_dim", m.embed_dim},       {"num_queries", m.num_queries},   {"num_points", m.num_points},
    {"num_layers", m.num_layers},     {"offset_scale", m.offset_scale}, {"dropout", m.dropout},
    {"bev_cell", m.bev_cell},         {"num_cameras", m.num_cameras},   {"num_levels", m.num_levels},
    {"image_channels", m.image_channels}};
}

ModelConfig model_from(const json & j)
{
  ModelConfig m;
  reject_unknown(
    j,
    {"embed_dim", "num_queries", "num_points", "num_layers", "offset_scale", "dropout", "bev_cell", "num_cameras",
     "num_levels", "image_channels"},
    "model config");
  take(j, "embed_dim", m.embed_dim);
  take(j, "num_queries", m.num_queries);
  take(j, "num_points", m.num_points);
  take(j, "num_layers", m.num_layers);
  take(j, "offset_scale", m.offset_scale);
  take(j, "dropout", m.dropout);
  take(j, "bev_cell", m.bev_cell);
  take(j, "num_cameras", m.num_cameras);
  take(j, "num_levels", m.num_levels);
  take(j, "image_channels", m.image_channels);
  m.validate();
  return m;
}

json train_json(const TrainConfig & t)
{
  return {
    {"steps", t.steps},           {"learning_rate", t.learning_rate},
    {"momentum", t.momentum},     {"clip_norm", t.clip_norm},
    {"cosine_decay", t.cosine_decay},
    {"clip_frames", t.clip_frames}, {"clips_per_step", t.clips_per_step},
    {"camera_noise_choices", t.camera_noise_choices},
    {"seed", t.seed}};
}

TrainConfig train_from(const json & j)
{
  TrainConfig t;
  reject_unknown(
    j, {"steps", "learning_rate", "momentum", "clip_norm", "cosine_decay", "clip_frames", "clips_per_step", "camera_noise_choices",
        "seed"},
    "train config");
  take(j, "steps", t.steps);
  take(j, "learning_rate", t.learning_rate);
  take(j, "momentum", t.momentum);
  take(j, "clip_norm", t.clip_norm);
  take(j, "cosine_decay", t.cosine_decay);
  take(j, "clip_frames", t.clip_frames);
  take(j, "clips_per_step", t.clips_per_step);
  take(j, "camera_noise_choices", t.camera_noise_choices);
  take(j, "seed", t.seed);
  if (t.clip_frames == 0 || t.clip_frames > sim::kFramesPerScene || t.clips_per_step == 0 ||
      t.camera_noise_choices.empty() || !(t.learning_rate > 0.0)) {
    throw io::FormatError(
      "train config: clip_frames, clips_per_step, camera_noise_choices or learning_rate out of range");
  }
  return t;
}

void check_finite(const heads::Losses & l, std::size_t step)
{
  const std::pair<const char *, const diff::Value *> terms[] = {
    {"classification", &l.cls}, {"box", &l.coord}, {"trajectory", &l.trajectory}};
  for (const auto & [name, v] : terms) {
    if (!std::isfinite(v->item())) {
      throw DivergenceError(
        "non-finite " + std::string(name) + " loss at step " + std::to_string(step));
    }
  }
}

// Matching needs finite boxes and probabilities, so a blow-up is caught
// before it reaches the assignment.
void check_outputs(const heads::Decoded & out, std::size_t step)
{
  const std::pair<const char *, const diff::Value *> terms[] = {
    {"classification", &out.logits}, {"box", &out.box}, {"trajectory", &out.trajectories}};
  for (const auto & [name, v] : terms) {
    for (const double x : v->data()) {
      if (!std::isfinite(x)) {
        throw DivergenceError("non-finite " + std::string(name) + " output at step " + std::to_string(step));
      }
    }
  }
}

}  // namespace

json to_json(const RunConfig & c)
{
  return {
    {"model", model_json(c.model)}, {"sim", io::to_json(c.sim)},   {"train", train_json(c.train)},
    {"num_scenes", c.num_scenes},   {"seed", c.seed},              {"no_lidar", c.no_lidar},
    {"camera_noise", c.camera_noise}, {"score_threshold", c.score_threshold}};
}

RunConfig run_config_from_json(const json & j)
{
  RunConfig c;
  reject_unknown(j, {"model", "sim", "train", "num_scenes", "seed", "no_lidar", "camera_noise", "score_threshold"},
                 "run config");
  if (j.contains("model")) {
    c.model = model_from(j.at("model"));
  }
  if (j.contains("sim")) {
    c.sim = io::sim_config_from_json(j.at("sim"));
  }
  if (j.contains("train")) {
    c.train = train_from(j.at("train"));
  }
  take(j, "num_scenes", c.num_scenes);
  take(j, "seed", c.seed);
  take(j, "no_lidar", c.no_lidar);
  take(j, "camera_noise", c.camera_noise);
  take(j, "score_threshold", c.score_threshold);
  c.sim.validate();
  return c;
}

std::vector<StepLog> train(
  Model & model, const std::vector<sim::SceneRecord> & scenes, const TrainConfig & config, bool no_lidar,
  const StepCallback & on_step)
{
  if (scenes.empty()) {
    throw std::invalid_argument("train: no scenes");
  }
  if (config.clip_frames == 0 || config.clip_frames > sim::kFramesPerScene || config.clips_per_step == 0) {
    throw std::invalid_argument("train: clip_frames must be in [1, frames per scene] and clips_per_step positive");
  }
  if (config.camera_noise_choices.empty()) {
    throw std::invalid_argument("train: no camera noise choices");
  }
  std::vector<diff::Value> params;
  visit_params(model, [&](const std::string &, diff::Value & v) { params.push_back(v); });
  std::vector<std::vector<double>> velocity;
  for (const auto & p : params) {
    velocity.emplace_back(p.size(), 0.0);
  }

  diff::Rng rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick_scene(0, scenes.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_noise(0, config.camera_noise_choices.size() - 1);
  const geom::PerceptionVolume volume;
  std::vector<StepLog> logs;

  for (std::size_t step = 0; step < config.steps; ++step) {
    StepLog log;
    log.step = step;
    diff::Value total;
    std::size_t frames_seen = 0;
    for (std::size_t clip = 0; clip < config.clips_per_step; ++clip) {
      const auto & scene = scenes[pick_scene(rng)];
      const std::size_t frames = std::min(config.clip_frames, scene.frames.size());
      std::uniform_int_distribution<std::size_t> pick_start(0, scene.frames.size() - frames);
      const std::size_t start = pick_start(rng);
      auto image = scene.config.image;
      image.camera_noise = config.camera_noise_choices[pick_noise(rng)];
      log.camera_noise = image.camera_noise;
      track::TrackBank bank;
      for (std::size_t f = start; f < start + frames; ++f) {
        const auto inputs = sim::synth_frame_features(scene, f, image, scene.config.lidar);
        const auto fwd = forward_frame(model, inputs, bank, true, &rng, no_lidar);
        check_outputs(fwd.out, step);
        auto fl = frame_loss(fwd, frame_targets(scene, f), bank, volume);
        check_finite(fl.losses, step);
        log.cls += fl.losses.cls.item();
        log.coord += fl.losses.coord.item();
        log.trajectory += fl.losses.trajectory.item();
        total = total.defined() ? total + fl.losses.total : fl.losses.total;
        bank = std::move(fl.next_bank);
      }
      frames_seen += frames;
    }
    const double inv = 1.0 / static_cast<double>(frames_seen);
    total = total * inv;
    log.cls *= inv;
    log.coord *= inv;
    log.trajectory *= inv;
    log.total = total.item();

    for (auto & p : params) {
      p.zero_grad();
    }
    total.backward();
    double sq = 0.0;
    for (const auto & p : params) {
      for (const double g : p.grad()) {
        sq += g * g;
      }
    }
    if (!std::isfinite(sq)) {
      throw DivergenceError("non-finite gradient at step " + std::to_string(step));
    }
    const double norm = std::sqrt(sq);
    const double factor = (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;
    double lr = config.learning_rate;
    if (config.cosine_decay) {
      lr *= 0.5 * (1.0 + std::cos(std::acos(-1.0) * static_cast<double>(step) / static_cast<double>(config.steps)));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto g = params[i].grad();
      if (g.empty()) {
        continue;
      }
      auto w = params[i].mutable_data();
      auto & v = velocity[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = config.momentum * v[k] + factor * g[k];
        w[k] -= lr * v[k];
      }
    }
    logs.push_back(log);
    if (on_step) {
      on_step(log);
    }
  }
  return logs;
}

StepLog fixed_set_loss(
  const Model & model, const std::vector<sim::SceneRecord> & scenes, std::size_t num_clips,
  std::size_t clip_frames, std::size_t start, bool no_lidar)
{
  diff::NoGradGuard no_grad;
  const geom::PerceptionVolume volume;
  StepLog log;
  std::size_t frames = 0;
  for (std::size_t i = 0; i < std::min(num_clips, scenes.size()); ++i) {
    const auto & scene = scenes[i];
    track::TrackBank bank;
    for (std::size_t f = start; f < std::min(start + clip_frames, scene.frames.size()); ++f) {
      const auto inputs = sim::synth_frame_features(scene, f);
      const auto fwd = forward_frame(model, inputs, bank, false, nullptr, no_lidar);
      auto fl = frame_loss(fwd, frame_targets(scene, f), bank, volume);
      log.cls += fl.losses.cls.item();
      log.coord += fl.losses.coord.item();
      log.trajectory += fl.losses.trajectory.item();
      log.total += fl.losses.total.item();
      bank = std::move(fl.next_bank);
      ++frames;
    }
  }
  if (frames == 0) {
    throw std::invalid_argument("fixed_set_loss: no frames selected");
  }
  const double inv = 1.0 / static_cast<double>(frames);
  log.cls *= inv;
  log.coord *= inv;
  log.trajectory *= inv;
  log.total *= inv;
  return log;
}

}  // namespace pnp::pipe

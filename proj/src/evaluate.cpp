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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iterator>
#include <mutex>
#include <thread>

#include "pnp/pipeline.hpp"

namespace pnp::pipe
{

namespace
{

metrics::GtRecord gt_record(const sim::SceneRecord & scene, const sim::AgentState & a, std::size_t frame)
{
  metrics::GtRecord g;
  g.id = a.id;
  g.cls = a.cls;
  g.centre = {a.centre[0], a.centre[1]};
  sim::future_of(sim::track_of(scene, a.id), frame, &g.future, &g.future_valid);
  return g;
}

// Same frames with every matched prediction's forecast replaced by a single
// constant-velocity hypothesis started from its ground truth.
std::vector<metrics::EvalRecord> constant_velocity(
  const std::vector<metrics::EvalRecord> & records,
  const std::vector<std::vector<std::array<double, 2>>> & velocities)
{
  auto out = records;
  for (std::size_t r = 0; r < out.size(); ++r) {
    const auto gt_of = metrics::match_frame(records[r]);
    for (std::size_t p = 0; p < out[r].preds.size(); ++p) {
      auto & pred = out[r].preds[p];
      if (!gt_of[p]) {
        continue;
      }
      const auto & g = records[r].gts[*gt_of[p]];
      const auto & v = velocities[r][*gt_of[p]];
      pred.trajectory.assign(kHorizon * 2, 0.0);
      for (std::size_t k = 0; k < kHorizon; ++k) {
        const double t = kFrameDt * static_cast<double>(k + 1);
        pred.trajectory[k * 2] = g.centre[0] + v[0] * t;
        pred.trajectory[k * 2 + 1] = g.centre[1] + v[1] * t;
      }
    }
  }
  return out;
}

}  // namespace

std::size_t points_in_box(const pillars::PointCloud & cloud, const BoxVec & box)
{
  const double yaw = std::atan2(box[6], box[7]);
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  std::size_t n = 0;
  for (const auto & p : cloud.points) {
    const double dx = p.x - box[0];
    const double dy = p.y - box[1];
    const double along = dx * c + dy * s;
    const double across = -dx * s + dy * c;
    if (std::abs(along) <= 0.5 * box[3] && std::abs(across) <= 0.5 * box[4] &&
        std::abs(p.z - box[2]) <= 0.5 * box[5]) {
      ++n;
    }
  }
  return n;
}

std::vector<GateBin> bin_gates(const std::vector<GateRow> & rows)
{
  std::vector<GateBin> bins;
  bins.push_back({"<5", 0, 0.0});
  bins.push_back({"5-10", 0, 0.0});
  for (int lo = 10; lo < 100; lo += 10) {
    bins.push_back({std::to_string(lo) + "-" + std::to_string(lo + 10), 0, 0.0});
  }
  bins.push_back({">100", 0, 0.0});
  for (const auto & r : rows) {
    std::size_t b = 0;
    if (r.lidar_points < 5) {
      b = 0;
    } else if (r.lidar_points < 10) {
      b = 1;
    } else if (r.lidar_points <= 100) {
      // 10-20 holds [10, 20), ..., 90-100 holds [90, 100].
      b = 2 + std::min<std::size_t>((r.lidar_points - 10) / 10, 8);
    } else {
      b = bins.size() - 1;
    }
    bins[b].count += 1;
    bins[b].mean_gate += r.lidar_gate;
  }
  for (auto & b : bins) {
    if (b.count) {
      b.mean_gate /= static_cast<double>(b.count);
    }
  }
  return bins;
}

namespace
{

struct SceneEval
{
  std::vector<metrics::EvalRecord> records;
  std::vector<std::vector<std::array<double, 2>>> velocities;
  std::vector<io::PredictionRecord> predictions;
  std::vector<GateRow> rows;
  double gate_sum = 0.0;
  std::size_t gate_count = 0;
};

SceneEval evaluate_scene(const Model & model, const sim::SceneRecord & scene, const EvalOptions & options)
{
  diff::NoGradGuard no_grad;
  const geom::PerceptionVolume volume;
  SceneEval out;
  auto image = scene.config.image;
  image.camera_noise = options.camera_noise;
  track::TrackBank bank;
  const std::size_t frames = std::min(options.max_frames, scene.frames.size());
  for (std::size_t f = 0; f < frames; ++f) {
    const auto inputs = sim::synth_frame_features(scene, f, image, scene.config.lidar);
    const auto fwd = forward_frame(model, inputs, bank, false, nullptr, options.no_lidar);
    std::vector<std::optional<int>> ids;
    bank = eval_bank_update(fwd, bank, &ids, volume);
    const auto gates = fwd.stack.mean_lidar_gate();

    metrics::EvalRecord rec;
    for (std::size_t q = 0; q < fwd.size(); ++q) {
      out.gate_sum += gates[q];
      ++out.gate_count;
      const auto [score, cls] = fwd.out.score(q);
      if (score < options.score_threshold) {
        continue;
      }
      const auto box = fwd.out.box_of(q);
      const auto traj = fwd.out.trajectories.data().subspan(q * kNumModes * kHorizon * 2, kNumModes * kHorizon * 2);

      io::PredictionRecord p;
      p.scene = scene.id;
      p.frame = f;
      p.track_id = ids[q].value_or(-1);
      p.cls = cls;
      p.score = score;
      p.centre = {box[0], box[1], box[2]};
      p.trajectory.assign(traj.begin(), traj.end());
      p.lidar_gate = gates[q];
      p.lidar_points = points_in_box(inputs.cloud, box);
      out.rows.push_back({scene.id, f, p.track_id, p.lidar_points, p.lidar_gate});

      metrics::PredRecord mp;
      mp.cls = cls;
      mp.score = p.score;
      mp.centre = {box[0], box[1]};
      mp.trajectory = p.trajectory;
      mp.track_id = p.track_id;
      rec.preds.push_back(std::move(mp));
      out.predictions.push_back(std::move(p));
    }
    std::vector<std::array<double, 2>> vel;
    for (const auto & a : scene.frames[f].agents) {
      rec.gts.push_back(gt_record(scene, a, f));
      vel.push_back(a.velocity);
    }
    out.records.push_back(std::move(rec));
    out.velocities.push_back(std::move(vel));
  }
  return out;
}

}  // namespace

EvalResult evaluate_scenes(
  const Model & model, const std::vector<sim::SceneRecord> & scenes, const EvalOptions & options)
{
  // Scenes are independent (each starts from an empty bank), so they run on
  // a small worker pool and are merged back in input order.
  std::vector<SceneEval> parts(scenes.size());
  std::size_t workers = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, scenes.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < scenes.size(); i = next++) {
      try {
        parts[i] = evaluate_scene(model, scenes[i], options);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(work);
    }
    for (auto & t : pool) {
      t.join();
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }

  EvalResult result;
  std::vector<metrics::EvalRecord> records;
  std::vector<std::vector<std::array<double, 2>>> velocities;
  double gate_sum = 0.0;
  std::size_t gate_count = 0;
  double row_gate_sum = 0.0;
  for (auto & part : parts) {
    std::move(part.records.begin(), part.records.end(), std::back_inserter(records));
    std::move(part.velocities.begin(), part.velocities.end(), std::back_inserter(velocities));
    std::move(part.predictions.begin(), part.predictions.end(), std::back_inserter(result.predictions));
    for (const auto & row : part.rows) {
      row_gate_sum += row.lidar_gate;
      result.gates.rows.push_back(row);
    }
    gate_sum += part.gate_sum;
    gate_count += part.gate_count;
  }
  result.report = metrics::evaluate(records);
  result.cv_baseline = metrics::displacement_metrics(constant_velocity(records, velocities));
  result.gates.bins = bin_gates(result.gates.rows);
  if (!result.gates.rows.empty()) {
    result.gates.mean_gate = row_gate_sum / static_cast<double>(result.gates.rows.size());
  }
  if (gate_count) {
    result.mean_query_gate = gate_sum / static_cast<double>(gate_count);
  }
  return result;
}

nlohmann::json metrics_json(const metrics::Report & r)
{
  const auto opt = [](const std::optional<double> & v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {
    {"minADE", opt(r.min_ade)}, {"minFDE", opt(r.min_fde)}, {"MR", opt(r.miss_rate)},
    {"EPA", opt(r.epa)},        {"FP_ratio", r.fp_ratio},   {"Precision", r.precision},
    {"Recall", r.recall},       {"mAP", opt(r.map)}};
}

}  // namespace pnp::pipe

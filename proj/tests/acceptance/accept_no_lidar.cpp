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

// Criterion 4: without a BEV map the model is exactly a camera-only model
// whose LiDAR feature is the zero vector.

#include <cstring>
#include <random>
#include <string>

#include "../qgdf_fixture.hpp"
#include "pnp/diffcore/ops.hpp"
#include "pnp/pipeline.hpp"
#include "verdict.hpp"

using namespace pnp;
using diff::Tensor;
using diff::Value;

namespace
{

bool identical(const Value & a, const Value & b)
{
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main()
{
  acceptance::Verdict verdict(4, "LiDAR-absent degeneracy");
  return verdict.run([&] {
    // Stack level: three layers against a chain written out by hand with a
    // zero LiDAR feature and no LiDAR branch at all.
    diff::Rng rng(404);
    const auto cfg = fixture::small_config(8, 2, 2);
    std::vector<qgdf::QgdfParams> layers;
    for (int l = 0; l < 3; ++l) {
      layers.push_back(qgdf::make_qgdf_params(cfg, rng));
      layers.back().gate.layers.back() = diff::make_linear(8, 2, rng);
    }
    const auto pyramid = fixture::random_pyramid(2, 2, 8, rng);
    std::size_t trials = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const qgdf::Queries q{Value::constant(fixture::random_tensor({16, 8}, rng)),
                            Value::constant(fixture::front_refs(16, rng))};
      const auto stack = qgdf::qgdf_stack(q, pyramid, pillars::absent_bev(), layers, false, nullptr);
      qgdf::Queries cur = q;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto img = qgdf::image_branch(cur, pyramid, layers[l]);
        const auto fuse = qgdf::gated_fuse(img.q_bar, Value::zeros({16, 8}), cur, layers[l]);
        verdict.require(identical(stack.gammas[l], fuse.gamma), "layer " + std::to_string(l) + " gate");
        cur.embed = qgdf::residual_update(fuse.fused, cur, layers[l], false, nullptr);
      }
      verdict.require(identical(stack.queries.embed, cur.embed), "stack output equals the camera-only chain");
      const auto lidar = qgdf::lidar_branch(q, pillars::absent_bev(), layers[0]);
      verdict.require(lidar.q_bar.shape() == diff::Shape{16, 8}, "absent LiDAR feature shape");
      bool zero = true;
      for (double v : lidar.q_bar.data()) {
        zero &= v == 0.0;
      }
      verdict.require(zero, "absent LiDAR feature is exactly zero");
      ++trials;
    }

    // Pipeline level: the no-LiDAR switch matches an explicitly absent map,
    // and the point cloud, whatever it holds, has no effect.
    pipe::RunConfig rc;
    rc.sim.image.width = 64;
    rc.sim.image.height = 32;
    rc.sim.image.channels = 8;
    rc.model.embed_dim = 8;
    rc.model.image_channels = 8;
    rc.model.num_queries = 12;
    rc.model.num_points = 2;
    rc.model.bev_cell = 3.2;
    const auto model = pipe::make_model(rc.model, 5);
    const auto scene = sim::generate_scene(rc.sim, 0, 41);
    std::size_t frames = 0;
    track::TrackBank bank_a;
    track::TrackBank bank_b;
    for (std::size_t f = 0; f < 6; ++f) {
      auto inputs = sim::synth_frame_features(scene, f);
      const auto a = pipe::forward_frame(model, inputs, bank_a, false, nullptr, true);
      const auto b = pipe::forward_frame(model, inputs.pyramid, pillars::absent_bev(), bank_b, false, nullptr);
      inputs.cloud.points.assign(500, {3.0, -2.0, 0.5});
      const auto c = pipe::forward_frame(model, inputs, bank_a, false, nullptr, true);
      const std::string at = "frame " + std::to_string(f);
      verdict.require(identical(a.out.logits, b.out.logits), at + ": logits");
      verdict.require(identical(a.out.box, b.out.box), at + ": boxes");
      verdict.require(identical(a.out.trajectories, b.out.trajectories), at + ": trajectories");
      verdict.require(identical(a.out.logits, c.out.logits) && identical(a.out.trajectories, c.out.trajectories),
                      at + ": a different cloud changes nothing");
      verdict.require(a.pillars.cells.empty(), at + ": no pillars are built");
      for (std::size_t l = 0; l < a.stack.gammas.size(); ++l) {
        verdict.require(identical(a.stack.gammas[l], b.stack.gammas[l]), at + ": gates");
      }
      bank_a = pipe::eval_bank_update(a, bank_a, nullptr);
      bank_b = pipe::eval_bank_update(b, bank_b, nullptr);
      ++frames;
    }

    // Evaluation: clouds from a different LiDAR model leave no trace.
    auto other = scene;
    other.config.lidar.density *= 3.0;
    other.config.lidar.clutter_per_sweep = 400;
    pipe::EvalOptions opt;
    opt.no_lidar = true;
    opt.max_frames = 6;
    const auto ea = pipe::evaluate_scenes(model, {scene}, opt);
    const auto eb = pipe::evaluate_scenes(model, {other}, opt);
    verdict.require(ea.predictions.size() == eb.predictions.size(), "same number of predictions");
    bool same_preds = ea.predictions.size() == eb.predictions.size();
    for (std::size_t i = 0; same_preds && i < ea.predictions.size(); ++i) {
      same_preds = ea.predictions[i].trajectory == eb.predictions[i].trajectory &&
                   ea.predictions[i].score == eb.predictions[i].score &&
                   ea.predictions[i].lidar_gate == eb.predictions[i].lidar_gate;
    }
    verdict.require(same_preds, "evaluation predictions are bit-identical");
    // Control: with LiDAR on, the two cloud models do give different outputs.
    opt.no_lidar = false;
    const auto la = pipe::evaluate_scenes(model, {scene}, opt);
    const auto lb = pipe::evaluate_scenes(model, {other}, opt);
    verdict.require(!(la.predictions == lb.predictions), "with LiDAR the cloud does matter");
    return std::to_string(trials) + " random 3-layer stacks and " + std::to_string(frames) +
           " pipeline frames bit-identical to the camera-only chain";
  });
}

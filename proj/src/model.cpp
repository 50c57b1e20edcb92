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
#include <cmath>
#include <random>
#include <stdexcept>

#include "pnp/diffcore/ops.hpp"
#include "pnp/pipeline.hpp"

namespace pnp::pipe
{

using diff::Tensor;
using diff::Value;

void ModelConfig::validate() const
{
  if (embed_dim == 0 || num_queries == 0 || num_points == 0 || num_layers == 0 || num_cameras == 0 ||
      num_levels == 0 || image_channels == 0) {
    throw std::invalid_argument("model config: every dimension must be positive");
  }
  if (!(bev_cell > 0.0) || offset_scale < 0.0 || dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("model config: bev_cell, offset_scale or dropout out of range");
  }
}

qgdf::QgdfConfig ModelConfig::qgdf() const
{
  qgdf::QgdfConfig q;
  q.embed_dim = embed_dim;
  q.image_channels = image_channels;
  q.num_cameras = num_cameras;
  q.num_levels = num_levels;
  q.num_points = num_points;
  q.offset_scale = offset_scale;
  q.dropout = dropout;
  return q;
}

Model make_model(const ModelConfig & config, std::uint64_t seed)
{
  config.validate();
  diff::Rng rng(seed);
  Model m;
  m.config = config;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> spread(0.15, 0.85);
  Tensor embed({config.num_queries, config.embed_dim});
  for (double & v : embed.data) {
    v = u(rng);
  }
  m.query_embed = Value::parameter(embed);
  // Newborn reference points start scattered over the inner 70% of the
  // volume at roughly vehicle-centre height.
  const geom::PerceptionVolume volume;
  const double z = volume.normalize({0.0, 0.0, 1.0})[2];
  Tensor ref({config.num_queries, 3});
  for (std::size_t q = 0; q < config.num_queries; ++q) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double r = spread(rng);
      ref.data[q * 3 + k] = std::log(r / (1.0 - r));
    }
    ref.data[q * 3 + 2] = std::log(z / (1.0 - z));
  }
  m.query_ref = Value::parameter(ref);
  m.pillars = pillars::make_pillar_encoder(config.embed_dim, rng);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    m.layers.push_back(qgdf::make_qgdf_params(config.qgdf(), rng));
  }
  m.temporal = track::make_temporal_params(config.embed_dim, rng);
  m.heads = heads::make_head_params(config.embed_dim, rng);
  return m;
}

void visit_params(Model & model, const diff::ParamVisitor & visit)
{
  visit("queries.embed", model.query_embed);
  visit("queries.ref", model.query_ref);
  pillars::visit_params(model.pillars, "pillars", visit);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    qgdf::visit_params(model.layers[l], "qgdf." + std::to_string(l), visit);
  }
  track::visit_params(model.temporal, "temporal", visit);
  heads::visit_params(model.heads, "heads", visit);
}

std::size_t parameter_count(Model & model)
{
  std::size_t n = 0;
  visit_params(model, [&](const std::string &, Value & v) { n += v.size(); });
  return n;
}

pillars::BevMap build_bev(
  const Model & model, const pillars::PointCloud & cloud, bool no_lidar, pillars::Pillars * layout)
{
  if (no_lidar) {
    return pillars::absent_bev();
  }
  pillars::PillarConfig pc;
  pc.cell_size = model.config.bev_cell;
  auto p = pillars::pillarize(cloud, pc);
  auto bev = pillars::encode_pillars_to_bev(p, model.pillars);
  if (layout) {
    *layout = std::move(p);
  }
  return bev;
}

Forward forward_frame(
  const Model & model, const qgdf::FeaturePyramid & pyramid, const pillars::BevMap & bev,
  const track::TrackBank & bank, bool training, diff::Rng * rng, qgdf::DetachedGateInputs * detached)
{
  const std::size_t e = model.config.embed_dim;
  const std::size_t nt = bank.tracks.size();
  Forward f;
  f.num_tracks = nt;
  Value newborn_ref = diff::sigmoid(model.query_ref);
  if (nt == 0) {
    f.input = {model.query_embed, newborn_ref};
  } else {
    Tensor embed({nt, e});
    Tensor ref({nt, 3});
    for (std::size_t t = 0; t < nt; ++t) {
      const auto & tr = bank.tracks[t];
      if (tr.embed.size() != e) {
        throw std::invalid_argument("forward_frame: track embedding has the wrong width");
      }
      std::copy(tr.embed.begin(), tr.embed.end(), embed.data.begin() + static_cast<std::ptrdiff_t>(t * e));
      for (std::size_t k = 0; k < 3; ++k) {
        ref.data[t * 3 + k] = tr.ref[k];
      }
    }
    f.input = {
      diff::concat({Value::constant(embed), model.query_embed}, 0),
      diff::concat({Value::constant(ref), newborn_ref}, 0)};
  }
  f.stack = qgdf::qgdf_stack(f.input, pyramid, bev, model.layers, training, rng, {}, detached);
  std::vector<const std::deque<std::vector<double>> *> histories(f.input.size(), nullptr);
  for (std::size_t t = 0; t < nt; ++t) {
    histories[t] = &bank.tracks[t].history;
  }
  f.refreshed = track::bank_attend(f.stack.queries.embed, histories, model.temporal);
  f.out = heads::decode(f.refreshed, f.input.ref, model.heads);
  return f;
}

Forward forward_frame(
  const Model & model, const sim::FrameInputs & inputs, const track::TrackBank & bank, bool training,
  diff::Rng * rng, bool no_lidar)
{
  pillars::Pillars layout;
  const auto bev = build_bev(model, inputs.cloud, no_lidar, &layout);
  Forward f = forward_frame(model, inputs.pyramid, bev, bank, training, rng);
  f.pillars = std::move(layout);
  return f;
}

std::vector<heads::GtAgent> frame_targets(const sim::SceneRecord & scene, std::size_t frame)
{
  std::vector<heads::GtAgent> gts;
  for (const auto & a : scene.frames.at(frame).agents) {
    heads::GtAgent g;
    g.id = a.id;
    g.cls = a.cls;
    g.box = a.box();
    sim::future_of(sim::track_of(scene, a.id), frame, &g.future, &g.future_valid);
    gts.push_back(g);
  }
  return gts;
}

namespace
{

std::vector<double> row_of(const Value & v, std::size_t r)
{
  const std::size_t w = v.dim(1);
  const auto d = v.data().subspan(r * w, w);
  return {d.begin(), d.end()};
}

// Where the query should look next frame: the mode-averaged first forecast
// step, at the decoded box height.
geom::Vec3 next_ref(const heads::Decoded & out, std::size_t q, const geom::PerceptionVolume & volume)
{
  const auto traj = out.trajectories.data();
  double x = 0.0;
  double y = 0.0;
  for (std::size_t k = 0; k < kNumModes; ++k) {
    x += traj[((q * kNumModes + k) * kHorizon) * 2];
    y += traj[((q * kNumModes + k) * kHorizon) * 2 + 1];
  }
  const auto box = out.box_of(q);
  auto r = volume.normalize({x / kNumModes, y / kNumModes, box[2]});
  for (double & v : r) {
    v = std::clamp(v, 0.01, 0.99);
  }
  return r;
}

std::vector<int> argmax_all(const heads::Decoded & out)
{
  std::vector<int> p(out.size());
  for (std::size_t q = 0; q < out.size(); ++q) {
    p[q] = out.argmax(q);
  }
  return p;
}

std::vector<track::QueryOutcome> outcomes_of(
  const Forward & fwd, const std::vector<int> & predicted, const geom::PerceptionVolume & volume)
{
  std::vector<track::QueryOutcome> outcomes(fwd.size());
  for (std::size_t q = 0; q < fwd.size(); ++q) {
    auto & o = outcomes[q];
    if (q < fwd.num_tracks) {
      o.track_index = q;
    }
    o.predicted = predicted[q];
    o.state = row_of(fwd.stack.queries.embed, q);
    o.embed = o.state;
    o.ref = next_ref(fwd.out, q, volume);
  }
  return outcomes;
}

}  // namespace

FrameLoss frame_loss(
  const Forward & fwd, const std::vector<heads::GtAgent> & gts, const track::TrackBank & bank,
  const geom::PerceptionVolume & volume)
{
  FrameLoss fl;
  const std::size_t n = fwd.size();
  std::vector<std::optional<int>> carried(n);
  for (std::size_t t = 0; t < fwd.num_tracks; ++t) {
    carried[t] = bank.tracks[t].gt_id;
  }
  const auto predicted = argmax_all(fwd.out);
  std::vector<int> ids;
  for (const auto & g : gts) {
    ids.push_back(g.id);
  }
  fl.plan = track::plan_frame(carried, predicted, ids);
  std::vector<std::vector<double>> cost;
  for (const std::size_t q : fl.plan.open_queries) {
    std::vector<double> row;
    for (const std::size_t g : fl.plan.open_gts) {
      row.push_back(track::match_cost(gts[g].cls, gts[g].box, fwd.out.probs_of(q), fwd.out.box_of(q)));
    }
    cost.push_back(std::move(row));
  }
  fl.gt_of = track::complete_assignment(fl.plan, cost, n);
  fl.losses = heads::compute_losses(fwd.out, fl.gt_of, gts);

  auto outcomes = outcomes_of(fwd, predicted, volume);
  for (std::size_t q = 0; q < n; ++q) {
    if (fl.gt_of[q]) {
      outcomes[q].gt_id = gts[*fl.gt_of[q]].id;
    }
  }
  fl.next_bank = track::lifecycle_update(bank, outcomes, true);
  return fl;
}

track::TrackBank eval_bank_update(
  const Forward & fwd, const track::TrackBank & bank, std::vector<std::optional<int>> * ids,
  const geom::PerceptionVolume & volume)
{
  const auto predicted = argmax_all(fwd.out);
  auto next = track::lifecycle_update(bank, outcomes_of(fwd, predicted, volume), false);
  if (ids) {
    ids->assign(fwd.size(), std::nullopt);
    std::size_t j = 0;
    for (std::size_t q = 0; q < fwd.size(); ++q) {
      if (predicted[q] != kEmptyClass) {
        (*ids)[q] = next.tracks.at(j++).id;
      }
    }
  }
  return next;
}

}  // namespace pnp::pipe

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

#include "pnp/heads.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "pnp/diffcore/ops.hpp"

namespace pnp::heads
{

using diff::Tensor;
using diff::Value;

namespace
{

constexpr std::size_t kTrajOutputs = kNumModes * kHorizon * 2;

// Right-multiplying a row of step displacements by this matrix gives
// cumulative positions within every (mode, axis) track.
const Value & cumulative_matrix()
{
  static const Value m = [] {
    Tensor t({kTrajOutputs, kTrajOutputs});
    for (std::size_t k = 0; k < kNumModes; ++k) {
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t from = 0; from < kHorizon; ++from) {
          for (std::size_t to = from; to < kHorizon; ++to) {
            const std::size_t i = (k * kHorizon + from) * 2 + a;
            const std::size_t j = (k * kHorizon + to) * 2 + a;
            t.data[i * kTrajOutputs + j] = 1.0;
          }
        }
      }
    }
    return Value::constant(t);
  }();
  return m;
}

}  // namespace

HeadParams make_head_params(std::size_t embed_dim, diff::Rng & rng)
{
  HeadParams p;
  p.classifier = diff::make_linear(embed_dim, kNumOutputs, rng);
  p.box = diff::make_ffn({embed_dim, embed_dim, 8}, rng);
  p.trajectory = diff::make_ffn({embed_dim, 2 * embed_dim, kTrajOutputs}, rng);
  return p;
}

void visit_params(HeadParams & p, const std::string & prefix, const diff::ParamVisitor & visit)
{
  diff::visit_params(p.classifier, prefix + ".classifier", visit);
  diff::visit_params(p.box, prefix + ".box", visit);
  diff::visit_params(p.trajectory, prefix + ".trajectory", visit);
}

int Decoded::argmax(std::size_t q) const
{
  const auto p = probs_of(q);
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.size(); ++c) {
    if (p[c] > p[best]) {
      best = c;
    }
  }
  return static_cast<int>(best);
}

std::pair<double, int> Decoded::score(std::size_t q) const
{
  const auto p = probs_of(q);
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (p[c] > p[best]) {
      best = c;
    }
  }
  return {p[best], static_cast<int>(best)};
}

BoxVec Decoded::box_of(std::size_t q) const
{
  BoxVec b{};
  for (std::size_t i = 0; i < 8; ++i) {
    b[i] = box.data()[q * 8 + i];
  }
  return b;
}

std::span<const double> Decoded::probs_of(std::size_t q) const
{
  return probs.data().subspan(q * kNumOutputs, kNumOutputs);
}

Decoded decode_detection(
  const Value & q, const Value & ref, const HeadParams & params, const geom::PerceptionVolume & volume)
{
  if (q.rank() != 2 || ref.rank() != 2 || ref.dim(0) != q.dim(0) || ref.dim(1) != 3) {
    throw std::invalid_argument(
      "decode_detection: queries " + diff::shape_str(q.shape()) + " vs refs " +
      diff::shape_str(ref.shape()));
  }
  Decoded out;
  out.logits = diff::linear_apply(q, params.classifier);
  out.probs = diff::softmax(out.logits);
  const Value raw = diff::ffn_apply(q, params.box);
  const Value centre_norm =
    diff::sigmoid(diff::inverse_sigmoid(ref) + diff::slice(raw, 1, 0, 3));
  const Value span = Value::constant({3}, {volume.extent(0), volume.extent(1), volume.extent(2)});
  const Value origin = Value::constant({3}, {volume.min[0], volume.min[1], volume.min[2]});
  const Value centre = centre_norm * span + origin;
  const Value size = diff::exp(diff::slice(raw, 1, 3, 6));
  out.box = diff::concat({centre, size, diff::slice(raw, 1, 6, 8)}, 1);
  return out;
}

Value decode_trajectories(const Value & q, const Value & centre_xy, const HeadParams & params)
{
  const std::size_t n = q.dim(0);
  if (params.trajectory.out_dim() != kTrajOutputs) {
    throw std::invalid_argument("trajectory head must predict K * T * 2 outputs");
  }
  const Value steps = diff::ffn_apply(q, params.trajectory);
  const Value offsets = diff::matmul(steps, cumulative_matrix());
  return diff::reshape(offsets, {n, kNumModes, kHorizon, 2}) +
         diff::reshape(centre_xy, {n, 1, 1, 2});
}

Decoded decode(
  const Value & q, const Value & ref, const HeadParams & params, const geom::PerceptionVolume & volume)
{
  Decoded out = decode_detection(q, ref, params, volume);
  out.trajectories = decode_trajectories(q, diff::stop_gradient(diff::slice(out.box, 1, 0, 2)), params);
  return out;
}

std::size_t select_hypothesis(
  std::span<const double> traj, const Trajectory & gt, const StepMask & valid)
{
  if (traj.size() % (kHorizon * 2) != 0 || traj.empty()) {
    throw std::invalid_argument("select_hypothesis: trajectory set must be K x T x 2");
  }
  bool any = false;
  for (bool v : valid) {
    any |= v;
  }
  if (!any) {
    throw std::invalid_argument("select_hypothesis: no valid ground-truth step");
  }
  const std::size_t modes = traj.size() / (kHorizon * 2);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < modes; ++k) {
    double d = 0.0;
    for (std::size_t t = 0; t < kHorizon; ++t) {
      if (!valid[t]) {
        continue;
      }
      const double dx = traj[(k * kHorizon + t) * 2] - gt[t][0];
      const double dy = traj[(k * kHorizon + t) * 2 + 1] - gt[t][1];
      d += std::sqrt(dx * dx + dy * dy);
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

Losses compute_losses(
  const Decoded & out, const std::vector<std::optional<std::size_t>> & gt_of,
  const std::vector<GtAgent> & gts, const std::vector<std::size_t> * fixed_modes)
{
  const std::size_t n = out.size();
  if (gt_of.size() != n) {
    throw std::invalid_argument("compute_losses: one assignment slot per query is required");
  }
  Tensor onehot({n, kNumOutputs});
  std::vector<std::size_t> matched_rows;
  std::vector<std::size_t> traj_rows;
  std::vector<double> box_target;
  std::vector<double> traj_target;
  std::vector<double> traj_mask;
  Losses losses;
  std::size_t matched = 0;
  for (std::size_t q = 0; q < n; ++q) {
    if (!gt_of[q]) {
      onehot.data[q * kNumOutputs + kEmptyClass] = 1.0;
      continue;
    }
    const GtAgent & g = gts.at(*gt_of[q]);
    onehot.data[q * kNumOutputs + static_cast<std::size_t>(g.cls)] = 1.0;
    if (g.cls == kEmptyClass) {
      continue;
    }
    matched_rows.push_back(q);
    box_target.insert(box_target.end(), g.box.begin(), g.box.end());

    bool any = false;
    for (bool v : g.future_valid) {
      any |= v;
    }
    if (!any) {
      continue;
    }
    // Forecasts are scored as motion from the predicted centre, so a
    // misplaced box is charged to the box term only.
    const auto centre = out.box_of(q);
    Trajectory future = g.future;
    for (auto & p : future) {
      p[0] += centre[0] - g.box[0];
      p[1] += centre[1] - g.box[1];
    }
    std::size_t k = 0;
    if (fixed_modes) {
      k = fixed_modes->at(matched);
    } else {
      const auto all = out.trajectories.data().subspan(q * kNumModes * kHorizon * 2, kNumModes * kHorizon * 2);
      k = select_hypothesis(all, future, g.future_valid);
    }
    ++matched;
    losses.selected.push_back(k);
    traj_rows.push_back(q * kNumModes + k);
    for (std::size_t t = 0; t < kHorizon; ++t) {
      const double m = g.future_valid[t] ? 1.0 : 0.0;
      traj_target.push_back(future[t][0] * m);
      traj_target.push_back(future[t][1] * m);
      traj_mask.push_back(m);
      traj_mask.push_back(m);
    }
  }

  losses.cls = -diff::sum(diff::log_softmax(out.logits) * Value::constant(onehot));
  if (matched_rows.empty()) {
    losses.coord = Value::scalar(0.0);
  } else {
    const Value pred = diff::index_rows(out.box, matched_rows);
    const Value target = Value::constant({matched_rows.size(), 8}, box_target);
    losses.coord = diff::sum(diff::abs(pred - target));
  }
  if (traj_rows.empty()) {
    losses.trajectory = Value::scalar(0.0);
  } else {
    const Value flat = diff::reshape(out.trajectories, {n * kNumModes, kHorizon * 2});
    const Value pred = diff::index_rows(flat, traj_rows);
    const Value mask = Value::constant({traj_rows.size(), kHorizon * 2}, traj_mask);
    const Value target = Value::constant({traj_rows.size(), kHorizon * 2}, traj_target);
    losses.trajectory = diff::sum(diff::abs(pred * mask - target));
  }
  losses.total = losses.cls + losses.coord + losses.trajectory;
  return losses;
}

}  // namespace pnp::heads

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

#ifndef PNP__HEADS_HPP_
#define PNP__HEADS_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pnp/agents.hpp"
#include "pnp/diffcore/ffn.hpp"
#include "pnp/diffcore/value.hpp"
#include "pnp/geometry.hpp"

namespace pnp::heads
{

struct HeadParams
{
  diff::Linear classifier;  // E -> 8
  diff::FfnParams box;      // E -> E -> 8: centre offsets (3), log sizes (3), sin, cos
  diff::FfnParams trajectory;  // E -> 2E -> K * T * 2 step displacements
};

HeadParams make_head_params(std::size_t embed_dim, diff::Rng & rng);
void visit_params(HeadParams & params, const std::string & prefix, const diff::ParamVisitor & visit);

/// Decoded outputs for N queries.
struct Decoded
{
  diff::Value logits;  // N x 8
  diff::Value probs;   // N x 8
  diff::Value box;     // N x 8, (cx, cy, cz, l, w, h, sin, cos) in metres
  diff::Value trajectories;  // N x K x T x 2 absolute BEV positions in metres

  std::size_t size() const { return logits.dim(0); }
  int argmax(std::size_t q) const;
  /// Largest probability over the real classes, and its class.
  std::pair<double, int> score(std::size_t q) const;
  BoxVec box_of(std::size_t q) const;
  std::span<const double> probs_of(std::size_t q) const;
};

/// q is N x E, ref N x 3 normalized.
Decoded decode_detection(
  const diff::Value & q, const diff::Value & ref, const HeadParams & params,
  const geom::PerceptionVolume & volume = {});

/// Trajectories as cumulative displacements from `centre_xy` (N x 2).
diff::Value decode_trajectories(
  const diff::Value & q, const diff::Value & centre_xy, const HeadParams & params);

/// Detection plus trajectories.
Decoded decode(
  const diff::Value & q, const diff::Value & ref, const HeadParams & params,
  const geom::PerceptionVolume & volume = {});

using Trajectory = std::array<std::array<double, 2>, kHorizon>;
using StepMask = std::array<bool, kHorizon>;

/// traj holds K x T x 2 values. Summed l2 over valid steps; lowest index wins
/// ties. Throws when no step is valid.
std::size_t select_hypothesis(
  std::span<const double> traj, const Trajectory & gt, const StepMask & valid);

struct GtAgent
{
  int id = 0;
  int cls = 0;
  BoxVec box{};
  Trajectory future{};
  StepMask future_valid{};
};

struct Losses
{
  diff::Value cls;
  diff::Value coord;
  diff::Value trajectory;
  diff::Value total;
  std::vector<std::size_t> selected;  // k̂ per matched query with a valid future, in query order
};

/// gt_of[q] is the index into `gts` matched to query q, if any. `fixed_modes`,
/// when given, replaces the argmin selection (laid out like Losses::selected)
/// so selection can be held fixed.
Losses compute_losses(
  const Decoded & out, const std::vector<std::optional<std::size_t>> & gt_of,
  const std::vector<GtAgent> & gts, const std::vector<std::size_t> * fixed_modes = nullptr);

}  // namespace pnp::heads

#endif  // PNP__HEADS_HPP_

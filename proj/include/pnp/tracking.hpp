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

#ifndef PNP__TRACKING_HPP_
#define PNP__TRACKING_HPP_

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pnp/agents.hpp"
#include "pnp/diffcore/ffn.hpp"
#include "pnp/diffcore/value.hpp"
#include "pnp/geometry.hpp"

namespace pnp::track
{

constexpr std::size_t kBankDepth = 4;

/// -p(c) + L1(box) for a real class; 0 for the empty class.
double match_cost(int gt_class, const BoxVec & gt_box, std::span<const double> probs,
                  const BoxVec & pred_box);

struct Assignment
{
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, column), sorted by row
  std::vector<std::size_t> unmatched_rows;
  std::vector<std::size_t> unmatched_cols;

  double total_cost(const std::vector<std::vector<double>> & cost) const;
};

/// Minimum-cost one-to-one assignment (Hungarian). Rows are queries, columns
/// ground truths; min(rows, cols) pairs are produced.
Assignment assign(const std::vector<std::vector<double>> & cost);

struct Track
{
  int id = -1;
  std::optional<int> gt_id;           // assigned ground-truth agent (training)
  std::vector<double> embed;          // carried query embedding
  geom::Vec3 ref{};                   // normalized reference point
  std::deque<std::vector<double>> history;  // oldest first
  int age = 0;
};

struct TrackBank
{
  std::vector<Track> tracks;
  std::size_t depth = kBankDepth;
  int next_id = 0;
};

/// Appends a state, evicting the oldest once `depth` are stored.
void push_state(Track & track, std::vector<double> state, std::size_t depth = kBankDepth);

/// Per-frame matching bookkeeping over track queries followed by newborns.
struct FramePlan
{
  std::vector<std::pair<std::size_t, std::size_t>> persistent;  // (query, gt index)
  std::vector<std::size_t> released;     // track queries that lost their assignment
  std::vector<std::size_t> open_queries;  // rows of the cost matrix
  std::vector<std::size_t> open_gts;      // columns of the cost matrix
};

/// query_gt_ids: the carried assignment of each query (nullopt for newborns);
/// predicted: argmax class of each query this frame; frame_gt_ids: ids of the
/// ground-truth agents present this frame. A carried assignment survives when
/// its agent is still present and the query does not predict the empty class.
FramePlan plan_frame(
  const std::vector<std::optional<int>> & query_gt_ids, const std::vector<int> & predicted,
  const std::vector<int> & frame_gt_ids);

/// Matches open queries to open ground truths with `cost` (open_queries x
/// open_gts) and returns the ground-truth index of every query.
std::vector<std::optional<std::size_t>> complete_assignment(
  const FramePlan & plan, const std::vector<std::vector<double>> & cost, std::size_t num_queries);

/// Everything needed to decide what a query leaves in the bank.
struct QueryOutcome
{
  std::optional<std::size_t> track_index;  // position in the previous bank, if a track query
  std::optional<int> gt_id;                // final assignment this frame (training)
  int predicted = kEmptyClass;
  std::vector<double> embed;
  geom::Vec3 ref{};
  std::vector<double> state;  // pushed into the history
};

/// With `training`, queries that end the frame assigned are kept; otherwise
/// queries whose argmax is not the empty class are kept. Kept newborns get
/// fresh ids; kept tracks keep their id and history.
TrackBank lifecycle_update(
  const TrackBank & bank, const std::vector<QueryOutcome> & outcomes, bool training);

struct TemporalParams
{
  diff::FfnParams ffn;  // E -> 2E -> E
};

TemporalParams make_temporal_params(std::size_t embed_dim, diff::Rng & rng);
void visit_params(TemporalParams & params, const std::string & prefix, const diff::ParamVisitor & visit);

/// q is N x E; histories[i] holds query i's stored states (at most kBankDepth,
/// each of length E). q̃_i = softmax(q_i K_i^T / sqrt(E)) K_i, zero when the
/// history is empty, and q'_i = FFN(q_i + q̃_i).
diff::Value bank_attend(
  const diff::Value & q, const std::vector<const std::deque<std::vector<double>> *> & histories,
  const TemporalParams & params);

}  // namespace pnp::track

#endif  // PNP__TRACKING_HPP_

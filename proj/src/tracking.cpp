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

#include "pnp/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "pnp/diffcore/ops.hpp"

namespace pnp::track
{

using diff::Tensor;
using diff::Value;

double match_cost(
  int gt_class, const BoxVec & gt_box, std::span<const double> probs, const BoxVec & pred_box)
{
  if (gt_class == kEmptyClass) {
    return 0.0;
  }
  if (gt_class < 0 || static_cast<std::size_t>(gt_class) >= probs.size()) {
    throw std::invalid_argument("match_cost: class " + std::to_string(gt_class) + " out of range");
  }
  return -probs[static_cast<std::size_t>(gt_class)] + box_l1(gt_box, pred_box);
}

double Assignment::total_cost(const std::vector<std::vector<double>> & cost) const
{
  double s = 0.0;
  for (const auto & [r, c] : pairs) {
    s += cost[r][c];
  }
  return s;
}

namespace
{

// Shortest augmenting path with potentials; requires rows <= cols.
// Returns the column of every row.
std::vector<std::size_t> hungarian_rows(const std::vector<std::vector<double>> & a)
{
  const std::size_t n = a.size();
  const std::size_t m = a[0].size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0);
  std::vector<std::size_t> way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) {
          continue;
        }
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) {
      col_of[p[j] - 1] = j - 1;
    }
  }
  return col_of;
}

}  // namespace

Assignment assign(const std::vector<std::vector<double>> & cost)
{
  Assignment out;
  const std::size_t rows = cost.size();
  const std::size_t cols = rows == 0 ? 0 : cost[0].size();
  for (std::size_t r = 0; r < rows; ++r) {
    if (cost[r].size() != cols) {
      throw std::invalid_argument("assign: cost matrix is not rectangular");
    }
    for (double c : cost[r]) {
      if (!std::isfinite(c)) {
        throw std::invalid_argument("assign: non-finite cost in row " + std::to_string(r));
      }
    }
  }
  if (rows == 0 || cols == 0) {
    for (std::size_t r = 0; r < rows; ++r) {
      out.unmatched_rows.push_back(r);
    }
    for (std::size_t c = 0; c < cols; ++c) {
      out.unmatched_cols.push_back(c);
    }
    return out;
  }
  std::vector<bool> row_used(rows, false);
  std::vector<bool> col_used(cols, false);
  if (rows <= cols) {
    const auto col_of = hungarian_rows(cost);
    for (std::size_t r = 0; r < rows; ++r) {
      out.pairs.emplace_back(r, col_of[r]);
    }
  } else {
    std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        t[c][r] = cost[r][c];
      }
    }
    const auto row_of = hungarian_rows(t);
    for (std::size_t c = 0; c < cols; ++c) {
      out.pairs.emplace_back(row_of[c], c);
    }
    std::sort(out.pairs.begin(), out.pairs.end());
  }
  for (const auto & [r, c] : out.pairs) {
    row_used[r] = true;
    col_used[c] = true;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_used[r]) {
      out.unmatched_rows.push_back(r);
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    if (!col_used[c]) {
      out.unmatched_cols.push_back(c);
    }
  }
  return out;
}

void push_state(Track & track, std::vector<double> state, std::size_t depth)
{
  track.history.push_back(std::move(state));
  while (track.history.size() > depth) {
    track.history.pop_front();
  }
}

FramePlan plan_frame(
  const std::vector<std::optional<int>> & query_gt_ids, const std::vector<int> & predicted,
  const std::vector<int> & frame_gt_ids)
{
  if (predicted.size() != query_gt_ids.size()) {
    throw std::invalid_argument("plan_frame: one predicted class per query is required");
  }
  FramePlan plan;
  std::vector<bool> gt_taken(frame_gt_ids.size(), false);
  for (std::size_t q = 0; q < query_gt_ids.size(); ++q) {
    const auto & id = query_gt_ids[q];
    if (!id) {
      plan.open_queries.push_back(q);
      continue;
    }
    const auto it = std::find(frame_gt_ids.begin(), frame_gt_ids.end(), *id);
    const bool present = it != frame_gt_ids.end();
    const auto gi = static_cast<std::size_t>(it - frame_gt_ids.begin());
    if (present && predicted[q] != kEmptyClass && !gt_taken[gi]) {
      plan.persistent.emplace_back(q, gi);
      gt_taken[gi] = true;
    } else {
      plan.released.push_back(q);
      plan.open_queries.push_back(q);
    }
  }
  for (std::size_t g = 0; g < frame_gt_ids.size(); ++g) {
    if (!gt_taken[g]) {
      plan.open_gts.push_back(g);
    }
  }
  return plan;
}

std::vector<std::optional<std::size_t>> complete_assignment(
  const FramePlan & plan, const std::vector<std::vector<double>> & cost, std::size_t num_queries)
{
  if (cost.size() != plan.open_queries.size()) {
    throw std::invalid_argument("complete_assignment: cost rows must match the open queries");
  }
  std::vector<std::optional<std::size_t>> gt_of(num_queries);
  for (const auto & [q, g] : plan.persistent) {
    gt_of.at(q) = g;
  }
  if (!plan.open_gts.empty()) {
    const auto open = assign(cost);
    for (const auto & [r, c] : open.pairs) {
      gt_of.at(plan.open_queries[r]) = plan.open_gts[c];
    }
  }
  return gt_of;
}

TrackBank lifecycle_update(
  const TrackBank & bank, const std::vector<QueryOutcome> & outcomes, bool training)
{
  TrackBank next;
  next.depth = bank.depth;
  next.next_id = bank.next_id;
  for (const auto & o : outcomes) {
    const bool keep = training ? o.gt_id.has_value() : o.predicted != kEmptyClass;
    if (!keep) {
      continue;
    }
    Track t;
    if (o.track_index) {
      t = bank.tracks.at(*o.track_index);
      ++t.age;
    } else {
      t.id = next.next_id++;
    }
    t.gt_id = training ? o.gt_id : std::nullopt;
    t.embed = o.embed;
    t.ref = o.ref;
    push_state(t, o.state, next.depth);
    next.tracks.push_back(std::move(t));
  }
  return next;
}

TemporalParams make_temporal_params(std::size_t embed_dim, diff::Rng & rng)
{
  return {diff::make_ffn({embed_dim, 2 * embed_dim, embed_dim}, rng)};
}

void visit_params(TemporalParams & params, const std::string & prefix, const diff::ParamVisitor & visit)
{
  diff::visit_params(params.ffn, prefix + ".ffn", visit);
}

Value bank_attend(
  const Value & q, const std::vector<const std::deque<std::vector<double>> *> & histories,
  const TemporalParams & params)
{
  if (q.rank() != 2 || histories.size() != q.dim(0)) {
    throw std::invalid_argument("bank_attend: one history per query row is required");
  }
  const std::size_t n = q.dim(0);
  const std::size_t e = q.dim(1);
  const std::size_t slots = kBankDepth;
  Tensor keys({n, slots, e});
  Tensor mask({n, slots});
  for (std::size_t i = 0; i < n; ++i) {
    const auto * h = histories[i];
    if (h == nullptr) {
      continue;
    }
    if (h->size() > slots) {
      throw std::invalid_argument("bank_attend: history longer than the bank depth");
    }
    for (std::size_t s = 0; s < h->size(); ++s) {
      const auto & state = (*h)[s];
      if (state.size() != e) {
        throw std::invalid_argument("bank_attend: stored state has the wrong width");
      }
      std::copy(state.begin(), state.end(), keys.data.begin() + static_cast<std::ptrdiff_t>((i * slots + s) * e));
      mask.data[i * slots + s] = 1.0;
    }
  }
  const Value k = Value::constant(keys);
  const Value scores =
    diff::sum_axis(diff::reshape(q, {n, 1, e}) * k, 2) * (1.0 / std::sqrt(static_cast<double>(e)));
  const Value attn = diff::masked_softmax(scores, mask);
  const Value attended = diff::sum_axis(diff::reshape(attn, {n, slots, 1}) * k, 1);
  return diff::ffn_apply(q + attended, params.ffn);
}

}  // namespace pnp::track

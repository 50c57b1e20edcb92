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

#ifndef PNP__METRICS_HPP_
#define PNP__METRICS_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "pnp/agents.hpp"

namespace pnp::metrics
{

constexpr double kMatchDistance = 2.0;
constexpr double kMissDistance = 2.0;
constexpr double kFpPenalty = 0.5;
constexpr std::array<double, 4> kMapThresholds{0.5, 1.0, 2.0, 4.0};

struct PredRecord
{
  int cls = 0;
  double score = 0.0;
  std::array<double, 2> centre{};
  /// K x T x 2 absolute positions, any K >= 1.
  std::vector<double> trajectory;
  int track_id = -1;
};

struct GtRecord
{
  int id = 0;
  int cls = 0;
  std::array<double, 2> centre{};
  std::array<std::array<double, 2>, kHorizon> future{};
  std::array<bool, kHorizon> future_valid{};
};

/// One evaluated frame.
struct EvalRecord
{
  std::vector<PredRecord> preds;
  std::vector<GtRecord> gts;
};

/// gt_of[p] for each prediction: same-class greedy matching in descending
/// score order (ties by index), each prediction taking the nearest free
/// ground truth within `threshold` (inclusive).
std::vector<std::optional<std::size_t>> match_frame(
  const EvalRecord & record, double threshold = kMatchDistance);

struct Displacement
{
  std::optional<double> min_ade;
  std::optional<double> min_fde;
  std::optional<double> miss_rate;
  std::size_t pairs = 0;
};

/// Matched pairs whose ground truth has a full 12-step future.
Displacement displacement_metrics(
  const std::vector<EvalRecord> & records, double threshold = kMatchDistance);

struct Epa
{
  std::optional<double> mean;
  std::array<std::optional<double>, kNumClasses> per_class{};
};

Epa epa(
  const std::vector<EvalRecord> & records, double threshold = kMatchDistance,
  double penalty = kFpPenalty);

struct Prf
{
  double precision = 0.0;
  double recall = 0.0;
  double fp_ratio = 0.0;
};

/// Predictions below `min_score` are dropped first.
Prf detection_prf(
  const std::vector<EvalRecord> & records, double threshold = kMatchDistance,
  double min_score = 0.0);

/// All-point interpolated AP averaged over classes with ground truth and the
/// four centre-distance thresholds. Empty when no ground truth exists.
std::optional<double> map_score(const std::vector<EvalRecord> & records);

/// Area under the interpolated precision/recall curve for one ranked list.
/// `hits` is in rank order.
double average_precision(const std::vector<bool> & hits, std::size_t num_gt);

struct Report
{
  std::optional<double> min_ade;
  std::optional<double> min_fde;
  std::optional<double> miss_rate;
  std::optional<double> epa;
  double fp_ratio = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> map;
  std::array<std::optional<double>, kNumClasses> epa_per_class{};
};

Report evaluate(const std::vector<EvalRecord> & records);

}  // namespace pnp::metrics

#endif  // PNP__METRICS_HPP_

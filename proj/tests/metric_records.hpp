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


// Random and hand-built evaluation records shared by the metric tests.

#ifndef PNP__TESTS__METRIC_RECORDS_HPP_
#define PNP__TESTS__METRIC_RECORDS_HPP_

#include <random>

#include "pnp/metrics.hpp"

namespace records
{

using namespace pnp;
using metrics::EvalRecord;
using metrics::GtRecord;
using metrics::PredRecord;

/// Agent moving along +x at `vx` m/s with every future step valid.
inline GtRecord gt_at(int id, int cls, double x, double y, double vx = 1.0)
{
  GtRecord g;
  g.id = id;
  g.cls = cls;
  g.centre = {x, y};
  for (std::size_t t = 0; t < kHorizon; ++t) {
    g.future[t] = {x + vx * 0.5 * static_cast<double>(t + 1), y};
    g.future_valid[t] = true;
  }
  return g;
}

/// Prediction on top of `g`; hypothesis k is shifted by offset + 10 k in x.
inline PredRecord pred_for(const GtRecord & g, double score, double offset = 0.0, std::size_t modes = 1)
{
  PredRecord p;
  p.cls = g.cls;
  p.score = score;
  p.centre = g.centre;
  for (std::size_t k = 0; k < modes; ++k) {
    for (std::size_t t = 0; t < kHorizon; ++t) {
      p.trajectory.push_back(g.future[t][0] + offset + 10.0 * static_cast<double>(k));
      p.trajectory.push_back(g.future[t][1]);
    }
  }
  return p;
}

/// Prediction with a flat trajectory and no nearby agent.
inline PredRecord stray(int cls, double score, double x, double y)
{
  PredRecord p;
  p.cls = cls;
  p.score = score;
  p.centre = {x, y};
  p.trajectory.assign(kHorizon * 2, 0.0);
  return p;
}

/// A frame with up to six agents and six predictions, most of them placed
/// near an agent of the same class.
inline EvalRecord random_record(std::mt19937_64 & rng, std::size_t modes)
{
  std::uniform_real_distribution<double> pos(-6.0, 6.0);
  std::uniform_real_distribution<double> jitter(-1.8, 1.8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 2);
  std::uniform_int_distribution<int> count(0, 6);
  EvalRecord r;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    auto g = gt_at(i, cls(rng), pos(rng), pos(rng), jitter(rng));
    for (auto & step : g.future) {
      step[0] += jitter(rng);
      step[1] += jitter(rng);
    }
    g.future_valid[11] = unit(rng) > 0.15;
    r.gts.push_back(g);
  }
  const int m = count(rng);
  for (int i = 0; i < m; ++i) {
    PredRecord p;
    p.cls = cls(rng);
    p.score = unit(rng);
    p.centre = {pos(rng), pos(rng)};
    if (!r.gts.empty() && unit(rng) < 0.7) {
      const auto & g = r.gts[static_cast<std::size_t>(i) % r.gts.size()];
      p.cls = g.cls;
      p.centre = {g.centre[0] + jitter(rng), g.centre[1] + jitter(rng)};
    }
    for (std::size_t k = 0; k < modes * kHorizon * 2; ++k) {
      p.trajectory.push_back(pos(rng));
    }
    r.preds.push_back(p);
  }
  return r;
}

}  // namespace records

#endif  // PNP__TESTS__METRIC_RECORDS_HPP_

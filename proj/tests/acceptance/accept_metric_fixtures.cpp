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

// Criterion 6: hand-worked metric cases hold exactly.

#include <cmath>
#include <string>

#include "../metric_records.hpp"
#include "pnp/metrics.hpp"
#include "verdict.hpp"

using namespace pnp;
using metrics::EvalRecord;
using metrics::GtRecord;
using records::gt_at;
using records::pred_for;
using records::stray;

int main()
{
  acceptance::Verdict verdict(6, "metric fixtures");
  return verdict.run([&] {
    // Four cars, two found, one false positive far away:
    // (2 - 0.5 * 1) / 4 = 0.375.
    const std::vector<GtRecord> cars{gt_at(1, 0, 0, 0), gt_at(2, 0, 10, 0), gt_at(3, 0, 20, 0), gt_at(4, 0, 30, 0)};
    const EvalRecord epa_case{{pred_for(cars[0], 0.9), pred_for(cars[1], 0.8), stray(0, 0.7, -30, -30)}, cars};
    const auto epa = metrics::epa({epa_case});
    verdict.require(epa.mean == 0.375, "EPA case gives " + acceptance::fmt(epa.mean.value_or(-1.0)) + ", expected 0.375");

    // Frame one: 3 hits and 1 stray (1/4); frame two: 1 hit and 1 stray
    // (1/2). The per-frame mean is 0.375.
    const std::vector<GtRecord> a_gts{gt_at(1, 0, 0, 0), gt_at(2, 0, 10, 0), gt_at(3, 0, 20, 0)};
    const EvalRecord a{
      {pred_for(a_gts[0], 0.9), pred_for(a_gts[1], 0.8), pred_for(a_gts[2], 0.7), stray(0, 0.6, 40, 40)}, a_gts};
    const std::vector<GtRecord> b_gts{gt_at(4, 1, 0, 0)};
    const EvalRecord b{{pred_for(b_gts[0], 0.9), stray(1, 0.2, -40, 0)}, b_gts};
    const auto prf = metrics::detection_prf({a, b});
    verdict.require(prf.fp_ratio == 0.375, "FP ratio case gives " + acceptance::fmt(prf.fp_ratio) + ", expected 0.375");

    // A final error of exactly 2 m does not exceed the threshold; 2 m plus
    // the smallest representable step and 3 m do.
    const auto g = gt_at(1, 0, 5, 5);
    const auto at_two = metrics::displacement_metrics({EvalRecord{{pred_for(g, 0.9, 2.0)}, {g}}});
    verdict.require(at_two.min_fde && *at_two.min_fde == 2.0, "2 m case has minFDE exactly 2");
    verdict.require(at_two.miss_rate && *at_two.miss_rate == 0.0, "2.0 m is not a miss");
    auto past = pred_for(g, 0.9, 2.0);
    past.trajectory[(kHorizon - 1) * 2] = std::nextafter(past.trajectory[(kHorizon - 1) * 2], 1e9);
    const auto beyond = metrics::displacement_metrics({EvalRecord{{past}, {g}}});
    verdict.require(beyond.min_fde && *beyond.min_fde > 2.0, "nudged case is past 2 m");
    verdict.require(beyond.miss_rate && *beyond.miss_rate == 1.0, "just past 2 m is a miss");
    const auto three = metrics::displacement_metrics({EvalRecord{{pred_for(g, 0.9, 3.0)}, {g}}});
    verdict.require(three.miss_rate && *three.miss_rate == 1.0, "3 m is a miss");

    return "EPA " + acceptance::fmt(epa.mean.value_or(-1.0)) + ", FP ratio " + acceptance::fmt(prf.fp_ratio) +
           ", 2.0 m final error counted as a hit";
  });
}

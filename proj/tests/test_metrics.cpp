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

#include "doctest.h"
#include "metric_records.hpp"
#include "oracles.hpp"
#include "pnp/metrics.hpp"

using namespace pnp;
using metrics::EvalRecord;
using metrics::GtRecord;
using metrics::PredRecord;
using records::gt_at;
using records::pred_for;
using records::random_record;
using records::stray;

TEST_CASE("displacement: worked examples")
{
  auto g = gt_at(1, 0, 5, 5);
  auto exact = metrics::displacement_metrics({EvalRecord{{pred_for(g, 0.9)}, {g}}});
  CHECK(exact.min_ade == 0.0);
  CHECK(exact.min_fde == 0.0);
  CHECK(exact.miss_rate == 0.0);

  auto three = metrics::displacement_metrics({EvalRecord{{pred_for(g, 0.9, 3.0)}, {g}}});
  CHECK(*three.min_ade == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(*three.min_fde == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(three.miss_rate == 1.0);

  auto two = metrics::displacement_metrics({EvalRecord{{pred_for(g, 0.9, 2.0)}, {g}}});
  CHECK(two.min_fde == 2.0);
  CHECK(two.miss_rate == 0.0);

  auto none = metrics::displacement_metrics({EvalRecord{{}, {g}}});
  CHECK_FALSE(none.min_ade.has_value());
  CHECK_FALSE(none.miss_rate.has_value());
}

TEST_CASE("displacement: equals the per-hypothesis oracle")
{
  std::mt19937_64 rng(11);
  for (std::size_t modes : {std::size_t{1}, std::size_t{6}}) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<EvalRecord> recs{random_record(rng, modes), random_record(rng, modes)};
      const auto got = metrics::displacement_metrics(recs);
      const auto want = oracle::displacement(recs);
      REQUIRE(got.pairs == want.n);
      if (want.n == 0) {
        CHECK_FALSE(got.min_ade.has_value());
        continue;
      }
      CHECK(std::abs(*got.min_ade - want.ade) < 1e-9);
      CHECK(std::abs(*got.min_fde - want.fde) < 1e-9);
      CHECK(std::abs(*got.miss_rate - want.mr) < 1e-9);
    }
  }
}

TEST_CASE("matching agrees with the candidate-list oracle")
{
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto r = random_record(rng, 1);
    const auto got = metrics::match_frame(r);
    const auto want = oracle::greedy_pairs(r.preds, r.gts, 2.0);
    for (std::size_t p = 0; p < r.preds.size(); ++p) {
      REQUIRE(got[p].has_value() == (want[p] >= 0));
      if (got[p]) {
        REQUIRE(static_cast<long>(*got[p]) == want[p]);
      }
    }
  }
}

TEST_CASE("epa examples")
{
  std::vector<GtRecord> gts{gt_at(1, 0, 0, 0), gt_at(2, 0, 10, 0), gt_at(3, 0, 20, 0), gt_at(4, 0, 30, 0)};
  EvalRecord r{{pred_for(gts[0], 0.9), pred_for(gts[1], 0.8), stray(0, 0.7, -30, -30)}, gts};
  CHECK(metrics::epa({r}).mean == 0.375);

  EvalRecord all{{pred_for(gts[0], 0.9), pred_for(gts[1], 0.8), pred_for(gts[2], 0.7), pred_for(gts[3], 0.6)}, gts};
  CHECK(metrics::epa({all}).mean == 1.0);
  CHECK(metrics::epa({EvalRecord{{}, gts}}).mean == 0.0);

  // Classes without ground truth drop out; clamping at zero.
  EvalRecord mixed{{pred_for(gts[0], 0.9), stray(3, 0.5, 5, 5), stray(3, 0.5, 6, 6)}, {gts[0], gt_at(9, 3, -20, 20)}};
  const auto e = metrics::epa({mixed});
  CHECK(e.per_class[0] == 1.0);
  CHECK(e.per_class[3] == 0.0);
  CHECK_FALSE(e.per_class[1].has_value());
  CHECK(e.mean == 0.5);
}

TEST_CASE("precision, recall and fp ratio")
{
  std::vector<GtRecord> a_gts{gt_at(1, 0, 0, 0), gt_at(2, 0, 10, 0), gt_at(3, 0, 20, 0)};
  EvalRecord a{{pred_for(a_gts[0], 0.9), pred_for(a_gts[1], 0.8), pred_for(a_gts[2], 0.7), stray(0, 0.6, 40, 40)}, a_gts};
  std::vector<GtRecord> b_gts{gt_at(4, 1, 0, 0)};
  EvalRecord b{{pred_for(b_gts[0], 0.9), stray(1, 0.2, -40, 0)}, b_gts};
  const auto prf = metrics::detection_prf({a, b});
  CHECK(prf.fp_ratio == 0.375);
  CHECK(prf.precision == 4.0 / 6.0);
  CHECK(prf.recall == 1.0);

  EvalRecord perfect{{pred_for(a_gts[0], 0.9), pred_for(a_gts[1], 0.8), pred_for(a_gts[2], 0.7)}, a_gts};
  const auto p = metrics::detection_prf({perfect});
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  CHECK(p.fp_ratio == 0.0);

  const auto empty = metrics::detection_prf({EvalRecord{{}, a_gts}});
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.fp_ratio == 0.0);

  // A score cut removes the low-scoring stray in b.
  CHECK(metrics::detection_prf({a, b}, 2.0, 0.5).fp_ratio == 0.125);
}

TEST_CASE("map")
{
  // Ranked hit, miss, hit against two ground truths at every threshold.
  std::vector<GtRecord> gts{gt_at(1, 2, 0, 0), gt_at(2, 2, 10, 0)};
  EvalRecord r{{pred_for(gts[0], 0.9), stray(2, 0.8, -30, 30), pred_for(gts[1], 0.7)}, gts};
  const double ap = 0.5 * 1.0 + 0.0 * 0.5 + 0.5 * (2.0 / 3.0);
  CHECK(*metrics::map_score({r}) == doctest::Approx(ap).epsilon(1e-15));

  EvalRecord perfect{{pred_for(gts[0], 0.9), pred_for(gts[1], 0.7)}, gts};
  CHECK(metrics::map_score({perfect}) == 1.0);
  CHECK(metrics::map_score({EvalRecord{{}, gts}}) == 0.0);
  CHECK_FALSE(metrics::map_score({EvalRecord{{stray(0, 0.5, 0, 0)}, {}}}).has_value());

  // A 1.5 m centre error only counts at the 2 m and 4 m thresholds.
  auto shifted = pred_for(gts[0], 0.9);
  shifted.centre[0] += 1.5;
  EvalRecord one{{shifted}, {gts[0]}};
  CHECK(metrics::map_score({one}) == 0.5);

  CHECK(metrics::average_precision({false, true}, 1) == 0.5);
  CHECK(metrics::average_precision({}, 3) == 0.0);
  CHECK_THROWS(metrics::average_precision({true}, 0));
}

TEST_CASE("metric invariants")
{
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EvalRecord> recs{random_record(rng, 6), random_record(rng, 6), random_record(rng, 6)};
    const auto base = metrics::evaluate(recs);
    auto shuffled = recs;
    for (auto & r : shuffled) {
      std::shuffle(r.preds.begin(), r.preds.end(), rng);
      std::shuffle(r.gts.begin(), r.gts.end(), rng);
    }
    const auto perm = metrics::evaluate(shuffled);
    CHECK(base.min_ade == perm.min_ade);
    CHECK(base.min_fde == perm.min_fde);
    CHECK(base.miss_rate == perm.miss_rate);
    CHECK(base.epa == perm.epa);
    CHECK(base.precision == perm.precision);
    CHECK(base.recall == perm.recall);
    CHECK(base.fp_ratio == perm.fp_ratio);
    CHECK(base.map == perm.map);
    for (double v : {base.precision, base.recall, base.fp_ratio}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (base.epa) {
      CHECK(*base.epa >= 0.0);
      CHECK(*base.epa <= 1.0);
    }
    if (base.miss_rate) {
      CHECK(*base.miss_rate >= 0.0);
      CHECK(*base.miss_rate <= 1.0);
    }
  }
}

TEST_CASE("doubling false positives")
{
  std::vector<GtRecord> gts{gt_at(1, 0, 0, 0), gt_at(2, 0, 10, 0), gt_at(3, 0, 20, 0), gt_at(4, 0, 30, 0)};
  EvalRecord r{{pred_for(gts[0], 0.9), pred_for(gts[1], 0.8), pred_for(gts[2], 0.8), stray(0, 0.7, -30, -30)}, gts};
  EvalRecord doubled = r;
  doubled.preds.push_back(stray(0, 0.6, -40, -40));
  const auto a = metrics::evaluate({r});
  const auto b = metrics::evaluate({doubled});
  CHECK(*b.epa < *a.epa);
  CHECK(b.precision < a.precision);
  CHECK(b.recall == a.recall);
}

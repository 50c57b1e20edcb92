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

#include "pnp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pnp::metrics
{

namespace
{

double dist(const std::array<double, 2> & a, const std::array<double, 2> & b)
{
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

std::vector<std::size_t> score_order(const std::vector<PredRecord> & preds)
{
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  return order;
}

void check_class(int cls)
{
  if (cls < 0 || static_cast<std::size_t>(cls) >= kNumClasses) {
    throw std::invalid_argument("metrics: class " + std::to_string(cls) + " out of range");
  }
}

// Order-independent sum: values are added in ascending order.
double canonical_sum(std::vector<double> values)
{
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) {
    s += v;
  }
  return s;
}

bool full_future(const GtRecord & g)
{
  return std::all_of(g.future_valid.begin(), g.future_valid.end(), [](bool v) { return v; });
}

}  // namespace

std::vector<std::optional<std::size_t>> match_frame(const EvalRecord & record, double threshold)
{
  std::vector<std::optional<std::size_t>> gt_of(record.preds.size());
  std::vector<bool> taken(record.gts.size(), false);
  for (const std::size_t p : score_order(record.preds)) {
    const auto & pred = record.preds[p];
    check_class(pred.cls);
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < record.gts.size(); ++g) {
      if (taken[g] || record.gts[g].cls != pred.cls) {
        continue;
      }
      const double d = dist(pred.centre, record.gts[g].centre);
      if (d <= threshold && d < best_d) {
        best_d = d;
        best = g;
      }
    }
    if (best) {
      taken[*best] = true;
      gt_of[p] = best;
    }
  }
  return gt_of;
}

Displacement displacement_metrics(const std::vector<EvalRecord> & records, double threshold)
{
  Displacement out;
  std::vector<double> ades;
  std::vector<double> fdes;
  std::size_t misses = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto & rec = records[r];
    const auto gt_of = match_frame(rec, threshold);
    for (std::size_t p = 0; p < rec.preds.size(); ++p) {
      if (!gt_of[p] || !full_future(rec.gts[*gt_of[p]])) {
        continue;
      }
      const auto & traj = rec.preds[p].trajectory;
      const auto & gt = rec.gts[*gt_of[p]];
      if (traj.empty() || traj.size() % (kHorizon * 2) != 0) {
        throw std::invalid_argument(
          "displacement_metrics: record " + std::to_string(r) + " prediction " + std::to_string(p) +
          " trajectory is not K x 12 x 2");
      }
      double best_ade = std::numeric_limits<double>::infinity();
      double best_fde = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k * kHorizon * 2 < traj.size(); ++k) {
        double ade = 0.0;
        double last = 0.0;
        for (std::size_t t = 0; t < kHorizon; ++t) {
          const std::size_t i = (k * kHorizon + t) * 2;
          last = dist({traj[i], traj[i + 1]}, gt.future[t]);
          ade += last;
        }
        best_ade = std::min(best_ade, ade / static_cast<double>(kHorizon));
        best_fde = std::min(best_fde, last);
      }
      ades.push_back(best_ade);
      fdes.push_back(best_fde);
      misses += best_fde > kMissDistance ? 1 : 0;
      ++out.pairs;
    }
  }
  if (out.pairs > 0) {
    const double n = static_cast<double>(out.pairs);
    out.min_ade = canonical_sum(ades) / n;
    out.min_fde = canonical_sum(fdes) / n;
    out.miss_rate = static_cast<double>(misses) / n;
  }
  return out;
}

Epa epa(const std::vector<EvalRecord> & records, double threshold, double penalty)
{
  std::array<std::size_t, kNumClasses> hits{};
  std::array<std::size_t, kNumClasses> fps{};
  std::array<std::size_t, kNumClasses> gts{};
  for (const auto & rec : records) {
    const auto gt_of = match_frame(rec, threshold);
    for (std::size_t p = 0; p < rec.preds.size(); ++p) {
      auto & bucket = gt_of[p] ? hits : fps;
      ++bucket[static_cast<std::size_t>(rec.preds[p].cls)];
    }
    for (const auto & g : rec.gts) {
      check_class(g.cls);
      ++gts[static_cast<std::size_t>(g.cls)];
    }
  }
  Epa out;
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (gts[c] == 0) {
      continue;
    }
    const double v = std::max(0.0, static_cast<double>(hits[c]) - penalty * static_cast<double>(fps[c])) /
                     static_cast<double>(gts[c]);
    out.per_class[c] = v;
    sum += v;
    ++classes;
  }
  if (classes > 0) {
    out.mean = sum / static_cast<double>(classes);
  }
  return out;
}

Prf detection_prf(const std::vector<EvalRecord> & records, double threshold, double min_score)
{
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t num_gt = 0;
  std::vector<double> ratios;
  for (const auto & full : records) {
    EvalRecord rec;
    rec.gts = full.gts;
    for (const auto & p : full.preds) {
      if (p.score >= min_score) {
        rec.preds.push_back(p);
      }
    }
    const auto gt_of = match_frame(rec, threshold);
    std::size_t scene_tp = 0;
    for (const auto & g : gt_of) {
      scene_tp += g ? 1 : 0;
    }
    const std::size_t scene_fp = rec.preds.size() - scene_tp;
    if (!rec.preds.empty()) {
      ratios.push_back(static_cast<double>(scene_fp) / static_cast<double>(rec.preds.size()));
    }
    tp += scene_tp;
    fp += scene_fp;
    num_gt += rec.gts.size();
  }
  Prf out;
  if (tp + fp > 0) {
    out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (num_gt > 0) {
    out.recall = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  if (!records.empty()) {
    out.fp_ratio = canonical_sum(ratios) / static_cast<double>(records.size());
  }
  return out;
}

double average_precision(const std::vector<bool> & hits, std::size_t num_gt)
{
  if (num_gt == 0) {
    throw std::invalid_argument("average_precision: no ground truth");
  }
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    tp += hits[i] ? 1 : 0;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  // Interpolated precision: best precision at this recall or beyond.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

std::optional<double> map_score(const std::vector<EvalRecord> & records)
{
  struct Ranked
  {
    double score;
    std::size_t record;
    std::size_t pred;
  };
  double sum = 0.0;
  std::size_t terms = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const int cls = static_cast<int>(c);
    std::size_t num_gt = 0;
    std::vector<Ranked> ranked;
    for (std::size_t r = 0; r < records.size(); ++r) {
      for (const auto & g : records[r].gts) {
        num_gt += g.cls == cls ? 1 : 0;
      }
      for (std::size_t p = 0; p < records[r].preds.size(); ++p) {
        check_class(records[r].preds[p].cls);
        if (records[r].preds[p].cls == cls) {
          ranked.push_back({records[r].preds[p].score, r, p});
        }
      }
    }
    if (num_gt == 0) {
      continue;
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked & a, const Ranked & b) {
      return a.score > b.score;
    });
    for (const double threshold : kMapThresholds) {
      std::vector<std::vector<bool>> taken(records.size());
      for (std::size_t r = 0; r < records.size(); ++r) {
        taken[r].assign(records[r].gts.size(), false);
      }
      std::vector<bool> hits;
      for (const auto & item : ranked) {
        const auto & rec = records[item.record];
        const auto & pred = rec.preds[item.pred];
        std::optional<std::size_t> best;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < rec.gts.size(); ++g) {
          if (taken[item.record][g] || rec.gts[g].cls != cls) {
            continue;
          }
          const double d = dist(pred.centre, rec.gts[g].centre);
          if (d <= threshold && d < best_d) {
            best_d = d;
            best = g;
          }
        }
        if (best) {
          taken[item.record][*best] = true;
        }
        hits.push_back(best.has_value());
      }
      sum += average_precision(hits, num_gt);
      ++terms;
    }
  }
  if (terms == 0) {
    return std::nullopt;
  }
  return sum / static_cast<double>(terms);
}

Report evaluate(const std::vector<EvalRecord> & records)
{
  Report out;
  const auto d = displacement_metrics(records);
  out.min_ade = d.min_ade;
  out.min_fde = d.min_fde;
  out.miss_rate = d.miss_rate;
  const auto e = epa(records);
  out.epa = e.mean;
  out.epa_per_class = e.per_class;
  const auto prf = detection_prf(records);
  out.fp_ratio = prf.fp_ratio;
  out.precision = prf.precision;
  out.recall = prf.recall;
  out.map = map_score(records);
  return out;
}

}  // namespace pnp::metrics

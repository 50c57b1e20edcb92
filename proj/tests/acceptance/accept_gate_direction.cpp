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

// Criterion 8: one trained checkpoint leans more on LiDAR when its camera
// features are degraded.

#include <string>

#include "toy_run.hpp"
#include "verdict.hpp"

using namespace pnp;

namespace
{

constexpr double kDegradedNoise = 4.0;  // camera feature noise multiplier

std::string bins_line(const pipe::GateReport & g)
{
  std::string line;
  for (const auto & b : g.bins) {
    if (b.count > 0) {
      line += " " + b.label + ":" + acceptance::fmt(b.mean_gate);
    }
  }
  return line;
}

}  // namespace

int main()
{
  acceptance::Verdict verdict(8, "gate-adaptivity direction");
  return verdict.run([&] {
    const auto run = acceptance::train_toy();
    pipe::EvalOptions clean;
    clean.score_threshold = run.config.score_threshold;
    auto degraded = clean;
    degraded.camera_noise = kDegradedNoise;
    const auto a = pipe::evaluate_scenes(run.model, run.held_out, clean);
    const auto b = pipe::evaluate_scenes(run.model, run.held_out, degraded);
    verdict.detail("mean LiDAR gate over all queries: clean " + acceptance::fmt(a.mean_query_gate) + ", camera noise x4 " +
                   acceptance::fmt(b.mean_query_gate));
    verdict.detail("mean LiDAR gate over reported predictions: clean " + acceptance::fmt(a.gates.mean_gate) +
                   ", camera noise x4 " + acceptance::fmt(b.gates.mean_gate));
    verdict.detail("clean bins:" + bins_line(a.gates));
    verdict.detail("noisy bins:" + bins_line(b.gates));
    verdict.require(b.mean_query_gate > a.mean_query_gate, "mean LiDAR gate does not rise under camera degradation");
    // The gate is not pinned at its initial one half, so the comparison is
    // between two learned values.
    verdict.require(a.mean_query_gate != 0.5, "the gate moved during training");
    return "mean LiDAR gate " + acceptance::fmt(a.mean_query_gate) + " clean -> " + acceptance::fmt(b.mean_query_gate) +
           " with camera noise x4";
  });
}

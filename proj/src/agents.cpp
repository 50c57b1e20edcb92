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

#include "pnp/agents.hpp"

#include <cmath>

namespace pnp
{

namespace
{
constexpr std::array<std::string_view, kNumOutputs> kNames{
  "car", "truck", "bus", "trailer", "motorcycle", "bicycle", "pedestrian", "empty"};
}  // namespace

std::string_view class_name(int cls)
{
  if (cls < 0 || cls >= static_cast<int>(kNumOutputs)) {
    return "invalid";
  }
  return kNames[static_cast<std::size_t>(cls)];
}

int class_from_name(std::string_view name)
{
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

BoxVec make_box(double cx, double cy, double cz, double l, double w, double h, double yaw)
{
  return {cx, cy, cz, l, w, h, std::sin(yaw), std::cos(yaw)};
}

double box_l1(const BoxVec & a, const BoxVec & b)
{
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::abs(a[i] - b[i]);
  }
  return s;
}

}  // namespace pnp

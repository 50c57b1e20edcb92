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

#ifndef PNP__AGENTS_HPP_
#define PNP__AGENTS_HPP_

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace pnp
{

constexpr std::size_t kNumClasses = 7;
/// Index of the empty (no-object) class among the kNumClasses + 1 outputs.
constexpr int kEmptyClass = 7;
constexpr std::size_t kNumOutputs = kNumClasses + 1;

constexpr std::size_t kNumModes = 6;
constexpr std::size_t kHorizon = 12;
constexpr double kFrameDt = 0.5;

/// (cx, cy, cz, l, w, h, sin yaw, cos yaw), metres and unit vector.
using BoxVec = std::array<double, 8>;

std::string_view class_name(int cls);
/// -1 when unknown.
int class_from_name(std::string_view name);

BoxVec make_box(
  double cx, double cy, double cz, double l, double w, double h, double yaw);

double box_l1(const BoxVec & a, const BoxVec & b);

}  // namespace pnp

#endif  // PNP__AGENTS_HPP_

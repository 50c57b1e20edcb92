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

#ifndef PNP__DIFFCORE__GRAD_CHECK_HPP_
#define PNP__DIFFCORE__GRAD_CHECK_HPP_

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pnp/diffcore/value.hpp"

namespace pnp::diff
{

struct GradCheckOptions
{
  double eps = 1e-6;        // central difference step
  double tol = 1e-4;        // max accepted relative error
  double abs_floor = 1e-6;  // denominators never drop below this
  // Entries whose one-sided slopes over +-margin disagree by more than
  // kink_tol (relative) sit near a kink and are excluded.
  double margin = 1e-4;
  double kink_tol = 1e-2;
  std::size_t stride = 1;  // check every stride-th entry of each input
};

struct InputReport
{
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_entry = 0;
  std::vector<std::size_t> failures;
  std::vector<std::size_t> excluded;
};

struct GradCheckReport
{
  std::vector<InputReport> inputs;
  bool analytic_finite = true;
  double tol = 0.0;

  bool passed() const;
  double max_rel_error() const;
  std::size_t total_checked() const;
  std::size_t total_excluded() const;
  std::string summary() const;
};

struct CheckedInput
{
  std::string name;
  Value value;
};

/// `loss` must rebuild a scalar from the current contents of the inputs on
/// every call. Inputs are perturbed in place and restored afterwards.
GradCheckReport grad_check(
  const std::function<Value()> & loss, std::vector<CheckedInput> inputs,
  const GradCheckOptions & options = {});

}  // namespace pnp::diff

#endif  // PNP__DIFFCORE__GRAD_CHECK_HPP_

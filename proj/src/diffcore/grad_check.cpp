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

#include "pnp/diffcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pnp::diff
{

bool GradCheckReport::passed() const
{
  if (!analytic_finite) {
    return false;
  }
  return std::all_of(inputs.begin(), inputs.end(), [](const InputReport & r) {
    return r.failures.empty();
  });
}

double GradCheckReport::max_rel_error() const
{
  double m = 0.0;
  for (const auto & r : inputs) {
    m = std::max(m, r.max_rel_error);
  }
  return m;
}

std::size_t GradCheckReport::total_checked() const
{
  std::size_t n = 0;
  for (const auto & r : inputs) {
    n += r.checked;
  }
  return n;
}

std::size_t GradCheckReport::total_excluded() const
{
  std::size_t n = 0;
  for (const auto & r : inputs) {
    n += r.excluded.size();
  }
  return n;
}

std::string GradCheckReport::summary() const
{
  std::ostringstream os;
  os << (passed() ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error()
     << " checked=" << total_checked() << " excluded=" << total_excluded();
  if (!analytic_finite) {
    os << " (non-finite analytic gradient)";
  }
  for (const auto & r : inputs) {
    if (!r.failures.empty()) {
      os << "\n  " << r.name << ": " << r.failures.size() << " failing entries, worst #"
         << r.worst_entry << " rel=" << r.max_rel_error;
    }
  }
  return os.str();
}

GradCheckReport grad_check(
  const std::function<Value()> & loss, std::vector<CheckedInput> inputs,
  const GradCheckOptions & options)
{
  GradCheckReport report;
  report.tol = options.tol;
  for (auto & in : inputs) {
    if (!in.value.requires_grad()) {
      throw std::invalid_argument("grad_check input '" + in.name + "' does not require grad");
    }
    in.value.zero_grad();
  }
  const Value base = loss();
  if (base.size() != 1) {
    throw std::invalid_argument("grad_check loss must be scalar");
  }
  const double f0 = base.item();
  base.backward();

  std::vector<std::vector<double>> analytic;
  for (auto & in : inputs) {
    auto g = in.value.grad();
    std::vector<double> a(in.value.size(), 0.0);
    std::copy(g.begin(), g.end(), a.begin());
    for (double v : a) {
      if (!std::isfinite(v)) {
        report.analytic_finite = false;
      }
    }
    analytic.push_back(std::move(a));
  }

  auto eval_at = [&](Value & v, std::size_t i, double x) {
    v.mutable_data()[i] = x;
    return loss().item();
  };

  const std::size_t stride = std::max<std::size_t>(1, options.stride);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    InputReport rep;
    rep.name = inputs[k].name;
    Value & v = inputs[k].value;
    for (std::size_t i = 0; i < v.size(); i += stride) {
      const double x0 = v.data()[i];
      const double fl = eval_at(v, i, x0 - options.margin);
      const double fr = eval_at(v, i, x0 + options.margin);
      const double slope_l = (f0 - fl) / options.margin;
      const double slope_r = (fr - f0) / options.margin;
      const double slope_scale =
        std::max({std::abs(slope_l), std::abs(slope_r), options.abs_floor, 1.0});
      if (std::abs(slope_l - slope_r) > options.kink_tol * slope_scale) {
        v.mutable_data()[i] = x0;
        rep.excluded.push_back(i);
        continue;
      }
      const double fp = eval_at(v, i, x0 + options.eps);
      const double fm = eval_at(v, i, x0 - options.eps);
      v.mutable_data()[i] = x0;
      const double numeric = (fp - fm) / (2.0 * options.eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_error || !std::isfinite(rel)) {
        rep.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        rep.worst_entry = i;
      }
      if (!(rel <= options.tol)) {
        rep.failures.push_back(i);
      }
    }
    report.inputs.push_back(std::move(rep));
  }
  return report;
}

}  // namespace pnp::diff

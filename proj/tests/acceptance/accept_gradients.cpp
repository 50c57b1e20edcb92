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

// Criterion 1: analytic gradients of every op and of a full three-layer
// fusion stack agree with central finite differences.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "../qgdf_fixture.hpp"
#include "pnp/diffcore/ffn.hpp"
#include "pnp/diffcore/grad_check.hpp"
#include "pnp/diffcore/ops.hpp"
#include "verdict.hpp"

using namespace pnp;
using namespace pnp::diff;

namespace
{

constexpr double kTolerance = 1e-4;  // max relative error
constexpr double kTimeBudget = 60.0;  // seconds

Value param(Shape shape, Rng & rng, double lo = -1.0, double hi = 1.0)
{
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double & v : t.data) {
    v = u(rng);
  }
  return Value::parameter(std::move(t));
}

Value weights_like(const Value & y, Rng & rng)
{
  return Value::constant(param(y.shape(), rng).tensor());
}

}  // namespace

int main()
{
  acceptance::Verdict verdict(1, "gradient suite");
  return verdict.run([&] {
    Rng rng(101);
    GradCheckOptions opt;
    opt.tol = kTolerance;
    double worst = 0.0;
    std::size_t checked = 0;
    std::size_t ops = 0;

    // Each op is probed through a random linear functional of its output so
    // that every output entry reaches the checked scalar.
    const auto check = [&](const std::string & name, const std::function<Value()> & out,
                           std::vector<CheckedInput> inputs) {
      const Value w = weights_like(out(), rng);
      const auto report = grad_check([&] { return sum(out() * w); }, std::move(inputs), opt);
      verdict.require(report.passed(), name + ": " + report.summary());
      verdict.require(report.total_excluded() == 0, name + ": entries excluded at a kink");
      verdict.require(report.max_rel_error() < kTolerance, name + ": relative error " + acceptance::fmt(report.max_rel_error()));
      worst = std::max(worst, report.max_rel_error());
      checked += report.total_checked();
      ++ops;
    };

    const Value a = param({3, 4}, rng);
    const Value b = param({3, 4}, rng);
    const Value pos = param({3, 4}, rng, 0.5, 2.0);
    const Value row = param({1, 4}, rng);
    const Value m = param({4, 2}, rng);

    check("add", [&] { return a + b; }, {{"a", a}, {"b", b}});
    check("add broadcast", [&] { return a + row; }, {{"a", a}, {"row", row}});
    check("sub", [&] { return a - b; }, {{"a", a}, {"b", b}});
    check("mul", [&] { return a * b; }, {{"a", a}, {"b", b}});
    check("mul broadcast", [&] { return a * row; }, {{"a", a}, {"row", row}});
    check("div", [&] { return a / pos; }, {{"a", a}, {"den", pos}});
    check("neg", [&] { return -a; }, {{"a", a}});
    check("scalar ops", [&] { return (2.0 - a) * 1.5 - (a / 4.0 + 1.0); }, {{"a", a}});
    check("exp", [&] { return exp(a); }, {{"a", a}});
    check("log", [&] { return log(pos); }, {{"a", pos}});
    check("tanh", [&] { return tanh(a); }, {{"a", a}});
    check("sigmoid", [&] { return sigmoid(a); }, {{"a", a}});
    check("relu", [&] { return relu(a); }, {{"a", a}});
    check("abs", [&] { return abs(a); }, {{"a", a}});
    check("square", [&] { return square(a); }, {{"a", a}});
    check("clip", [&] { return clip(a, -0.5, 0.5); }, {{"a", a}});
    const Value prob = param({5}, rng, 0.05, 0.95);
    check("inverse_sigmoid", [&] { return inverse_sigmoid(prob); }, {{"p", prob}});
    check("matmul", [&] { return matmul(a, m); }, {{"a", a}, {"b", m}});
    check("transpose", [&] { return transpose(a); }, {{"a", a}});
    const Value lw = param({4, 3}, rng);
    const Value lb = param({3}, rng);
    check("linear", [&] { return linear(a, lw, lb); }, {{"x", a}, {"weight", lw}, {"bias", lb}});
    check("reshape", [&] { return reshape(a, {2, 6}); }, {{"a", a}});
    check("concat axis 0", [&] { return concat({a, b}, 0); }, {{"a", a}, {"b", b}});
    const Value side = param({3, 2}, rng);
    check("concat axis 1", [&] { return concat({a, side}, 1); }, {{"a", a}, {"b", side}});
    check("slice", [&] { return slice(a, 1, 1, 3); }, {{"a", a}});
    check("index_rows", [&] { return index_rows(a, {2, 0, 2}); }, {{"a", a}});
    check("sum", [&] { return sum(a); }, {{"a", a}});
    check("mean", [&] { return mean(a); }, {{"a", a}});
    check("sum_axis 0", [&] { return sum_axis(a, 0); }, {{"a", a}});
    check("sum_axis 1", [&] { return sum_axis(a, 1); }, {{"a", a}});
    const Value logits = param({3, 5}, rng, -2.0, 2.0);
    check("softmax", [&] { return softmax(logits); }, {{"logits", logits}});
    check("log_softmax", [&] { return log_softmax(logits); }, {{"logits", logits}});
    Tensor mask({3, 5}, 1.0);
    mask.data[1] = 0.0;
    mask.data[7] = 0.0;
    mask.data[8] = 0.0;
    check("masked_softmax", [&] { return masked_softmax(logits, mask); }, {{"logits", logits}});
    const Value gain = param({4}, rng);
    const Value bias = param({4}, rng);
    check("layer_normalize", [&] { return layer_normalize(a, gain, bias); }, {{"x", a}, {"gain", gain}, {"bias", bias}});
    const Value map = param({3, 4, 5}, rng);
    const Value inside = param({7, 2}, rng, -0.95, 0.95);
    const Value wide = param({7, 2}, rng, -1.3, 1.3);
    check("bilinear_sample border", [&] { return bilinear_sample(map, inside, Padding::kBorder); },
          {{"map", map}, {"coords", inside}});
    check("bilinear_sample zeros", [&] { return bilinear_sample(map, wide, Padding::kZeros); },
          {{"map", map}, {"coords", wide}});
    check("dropout", [&] {
      Rng fixed(5);
      return dropout(a, 0.3, true, fixed);
    }, {{"a", a}});
    const Value slots = param({6, 3}, rng);
    check("segment_max", [&] { return segment_max(slots, 3, {2, 3}); }, {{"x", slots}});
    check("scatter_to_grid", [&] { return scatter_to_grid(a, {5, 0, 11}, 3, 4); }, {{"x", a}});
    auto ffn = make_ffn({4, 6, 2}, rng);
    std::vector<CheckedInput> ffn_in{{"x", a}};
    visit_params(ffn, "ffn", [&](const std::string & n, Value & v) { ffn_in.push_back({n, v}); });
    check("ffn_apply", [&] { return ffn_apply(a, ffn); }, ffn_in);
    auto norm = make_norm(4);
    norm.gain = param({4}, rng);
    norm.bias = param({4}, rng);
    std::vector<CheckedInput> norm_in{{"x", a}};
    visit_params(norm, "norm", [&](const std::string & n, Value & v) { norm_in.push_back({n, v}); });
    check("norm_apply", [&] { return norm_apply(a, norm); }, norm_in);

    // stop_gradient has no finite-difference counterpart: its analytic
    // gradient is zero by definition while the forward is the identity.
    {
      Value x = param({2, 3}, rng);
      const Value y = stop_gradient(x);
      verdict.require(y.tensor().data == x.tensor().data, "stop_gradient forward is the identity");
      x.zero_grad();
      sum(y * 3.0 + x).backward();
      bool ones = true;
      for (double g : x.grad()) {
        ones &= g == 1.0;
      }
      verdict.require(ones, "stop_gradient blocks its branch of the gradient");
      ++ops;
    }

    // Full stack: N_q = 3, N_cam = 2, L = 2, E = 8, P = 4, three layers. The
    // gate reads a detached copy of the query, so those copies are recorded
    // once and replayed as constants while differencing.
    auto cfg = fixture::small_config(8, 2, 2);
    cfg.dropout = 0.0;
    std::vector<qgdf::QgdfParams> layers;
    for (int l = 0; l < 3; ++l) {
      layers.push_back(qgdf::make_qgdf_params(cfg, rng));
      layers.back().gate.layers.back() = make_linear(8, 2, rng);
    }
    auto pyramid = fixture::random_pyramid(2, 2, 8, rng, true);
    auto bev = fixture::random_bev(8, 16, rng);
    bev.features = Value::parameter(bev.features.tensor());
    qgdf::Queries q{Value::parameter(fixture::random_tensor({3, 8}, rng)), Value::constant(fixture::front_refs(3, rng))};
    std::vector<CheckedInput> inputs{{"queries", q.embed}, {"bev", bev.features}};
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t l = 0; l < 2; ++l) {
        inputs.push_back({"camera" + std::to_string(c) + ".level" + std::to_string(l), pyramid.maps[c][l]});
      }
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      qgdf::visit_params(layers[l], "layer" + std::to_string(l), [&](const std::string & n, Value & v) {
        inputs.push_back({n, v});
      });
    }
    qgdf::DetachedGateInputs detached;
    qgdf::qgdf_stack(q, pyramid, bev, layers, false, nullptr, {}, &detached);
    detached.frozen = true;
    const Value w = Value::constant(fixture::random_tensor({3, 8}, rng));
    const auto stack = grad_check(
      [&] { return mean(qgdf::qgdf_stack(q, pyramid, bev, layers, false, nullptr, {}, &detached).queries.embed * w); },
      inputs, opt);
    verdict.require(stack.passed(), "qgdf stack: " + stack.summary());
    verdict.require(stack.max_rel_error() < kTolerance, "qgdf stack relative error");
    verdict.detail("qgdf stack: " + std::to_string(stack.total_checked()) + " entries, " +
                   std::to_string(stack.total_excluded()) + " at kinks, max relative error " +
                   acceptance::fmt(stack.max_rel_error()));
    // Kinks (ReLU inputs within the difference margin of zero) must stay rare.
    verdict.require(stack.total_excluded() * 100 <= stack.total_checked(), "qgdf stack kink exclusions under 1%");
    worst = std::max(worst, stack.max_rel_error());
    checked += stack.total_checked();

    verdict.require(verdict.seconds() < kTimeBudget, "runtime under 60 s");
    return std::to_string(ops) + " ops and a 3-layer stack, " + std::to_string(checked) +
           " entries, max relative error " + acceptance::fmt(worst) + " < 1e-4";
  });
}

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

#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pnp/diffcore/grad_check.hpp"
#include "pnp/diffcore/ops.hpp"
#include "qgdf_fixture.hpp"

using namespace pnp;
using diff::Tensor;
using diff::Value;

namespace
{

bool identical(const Value & a, const Value & b)
{
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

void zero_linear(diff::Linear & l)
{
  std::fill(l.weight.mutable_data().begin(), l.weight.mutable_data().end(), 0.0);
  std::fill(l.bias.mutable_data().begin(), l.bias.mutable_data().end(), 0.0);
}

Value layer_norm_of(const Value & x, const diff::Linear & proj, const diff::NormAffine & norm)
{
  return diff::norm_apply(diff::linear_apply(x, proj), norm);
}

}  // namespace

TEST_CASE("image branch: single valid pair gets all the weight")
{
  diff::Rng rng(1);
  auto cfg = fixture::small_config(8, 2, 1);
  auto params = qgdf::make_qgdf_params(cfg, rng);
  auto pyr = fixture::random_pyramid(2, 1, 8, rng);
  qgdf::Queries q{Value::constant(fixture::random_tensor({3, 8}, rng)),
                  Value::constant(fixture::front_refs(3, rng))};
  auto out = qgdf::image_branch(q, pyr, params);
  auto proj = geom::project_to_cameras(q.ref, pyr.calibs);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(out.mask.data[i * 2] == 1.0);
    REQUIRE(out.mask.data[i * 2 + 1] == 0.0);
    CHECK(out.weights.data()[i * 2] == 1.0);
    CHECK(out.weights.data()[i * 2 + 1] == 0.0);
    const double gx = proj.sample_coords[0].data()[2 * i];
    const double gy = proj.sample_coords[0].data()[2 * i + 1];
    auto want = oracle::bilinear(pyr.maps[0][0].tensor(), gx, gy, true);
    for (std::size_t ch = 0; ch < 8; ++ch) {
      CHECK(out.feature.data()[i * 8 + ch] == doctest::Approx(want[ch]).epsilon(1e-12));
    }
  }
  auto want_q = layer_norm_of(out.feature, params.image_proj, params.image_norm);
  CHECK(identical(out.q_bar, want_q));
}

TEST_CASE("image branch: query behind every camera")
{
  diff::Rng rng(2);
  auto cfg = fixture::small_config(8, 1, 2);
  auto params = qgdf::make_qgdf_params(cfg, rng);
  auto pyr = fixture::random_pyramid(1, 2, 8, rng, true);
  geom::PerceptionVolume vol;
  auto r = vol.normalize({-10.0, 0.0, 1.0});
  Value embed = Value::parameter(fixture::random_tensor({1, 8}, rng));
  qgdf::Queries q{embed, Value::constant({1, 3}, {r[0], r[1], r[2]})};
  auto out = qgdf::image_branch(q, pyr, params);
  for (double v : out.q_bar.data()) {
    CHECK(v == 0.0);
  }
  diff::sum(out.q_bar).backward();
  for (double g : embed.grad()) {
    CHECK(std::isfinite(g));
  }
  for (double g : pyr.maps[0][0].grad()) {
    CHECK(g == 0.0);
  }
}

TEST_CASE("image branch: equal logits average two valid levels")
{
  diff::Rng rng(3);
  auto cfg = fixture::small_config(8, 1, 2);
  auto params = qgdf::make_qgdf_params(cfg, rng);
  zero_linear(params.image_logits.layers.back());
  auto pyr = fixture::random_pyramid(1, 2, 8, rng);
  qgdf::Queries q{Value::constant(fixture::random_tensor({2, 8}, rng)),
                  Value::constant(fixture::front_refs(2, rng))};
  auto out = qgdf::image_branch(q, pyr, params);
  auto proj = geom::project_to_cameras(q.ref, pyr.calibs);
  for (std::size_t i = 0; i < 2; ++i) {
    const double gx = proj.sample_coords[0].data()[2 * i];
    const double gy = proj.sample_coords[0].data()[2 * i + 1];
    auto a = oracle::bilinear(pyr.maps[0][0].tensor(), gx, gy, true);
    auto b = oracle::bilinear(pyr.maps[0][1].tensor(), gx, gy, true);
    for (std::size_t ch = 0; ch < 8; ++ch) {
      CHECK(out.feature.data()[i * 8 + ch] == doctest::Approx(0.5 * (a[ch] + b[ch])).epsilon(1e-12));
    }
  }
}

TEST_CASE("image branch: errors")
{
  diff::Rng rng(4);
  auto params = qgdf::make_qgdf_params(fixture::small_config(8, 2, 2), rng);
  qgdf::Queries q{Value::constant(fixture::random_tensor({2, 8}, rng)),
                  Value::constant(fixture::front_refs(2, rng))};
  qgdf::FeaturePyramid empty;
  CHECK_THROWS_AS(qgdf::image_branch(q, empty, params), std::invalid_argument);
  auto three = fixture::random_pyramid(3, 2, 8, rng);
  CHECK_THROWS_AS(qgdf::image_branch(q, three, params), std::invalid_argument);
}

TEST_CASE("lidar branch: absent, constant field, centre lookup, clip containment")
{
  diff::Rng rng(5);
  auto params = qgdf::make_qgdf_params(fixture::small_config(), rng);
  qgdf::Queries q{Value::constant(fixture::random_tensor({4, 8}, rng)),
                  Value::constant(fixture::front_refs(4, rng))};

  auto absent = qgdf::lidar_branch(q, pillars::absent_bev(), params);
  CHECK(absent.q_bar.shape() == diff::Shape{4, 8});
  for (double v : absent.q_bar.data()) {
    CHECK(v == 0.0);
  }

  pillars::BevMap flat = fixture::random_bev(8, 16, rng);
  Tensor constant({8, 16, 16});
  for (std::size_t ch = 0; ch < 8; ++ch) {
    for (std::size_t i = 0; i < 256; ++i) {
      constant.data[ch * 256 + i] = 0.3 * static_cast<double>(ch) - 1.0;
    }
  }
  flat.features = Value::constant(constant);
  auto a = qgdf::lidar_branch(q, flat, params);
  auto other = params;
  other.offsets = diff::make_linear(8, 8, rng);
  auto b = qgdf::lidar_branch(q, flat, other);
  for (std::size_t i = 0; i < a.q_bar.size(); ++i) {
    CHECK(a.q_bar.data()[i] == doctest::Approx(b.q_bar.data()[i]).epsilon(1e-12));
  }

  auto centred = params;
  centred.offsets = diff::make_zero_linear(8, 8);
  auto bev = fixture::random_bev(8, 15, rng);
  qgdf::Queries mid{q.embed, Value::constant({4, 3}, std::vector<double>(12, 0.5))};
  auto c = qgdf::lidar_branch(mid, bev, centred);
  for (double v : c.grid.data()) {
    CHECK(v == 0.0);
  }
  auto look = oracle::bilinear(bev.features.tensor(), 0.0, 0.0, true);
  // Odd grid: the centre is the stored value of cell (7, 7).
  CHECK(look[2] == bev.features.data()[2 * 225 + 7 * 15 + 7]);
  Tensor ctx({4, 8});
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t ch = 0; ch < 8; ++ch) {
      ctx.data[i * 8 + ch] = look[ch];
    }
  }
  auto want = layer_norm_of(Value::constant(ctx), centred.lidar_proj, centred.lidar_norm);
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(c.q_bar.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
  }

  auto wild = params;
  wild.offset_scale = 3.0;
  qgdf::Queries edge{Value::constant(fixture::random_tensor({50, 8}, rng, 20.0)),
                     Value::constant(fixture::random_tensor({50, 3}, rng, 1.0))};
  auto d = qgdf::lidar_branch(edge, bev, wild);
  for (double v : d.grid.data()) {
    REQUIRE(v >= -1.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("gated fuse")
{
  diff::Rng rng(6);
  auto params = qgdf::make_qgdf_params(fixture::small_config(), rng);
  Value qi = Value::constant(fixture::random_tensor({5, 8}, rng));
  Value ql = Value::constant(fixture::random_tensor({5, 8}, rng));
  qgdf::Queries q{Value::parameter(fixture::random_tensor({5, 8}, rng)),
                  Value::constant(fixture::front_refs(5, rng))};
  auto zero = qgdf::gated_fuse(qi, ql, q, params);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(zero.gamma.data()[2 * i] == 0.5);
    CHECK(zero.gamma.data()[2 * i + 1] == 0.5);
  }
  params.gate = diff::make_ffn({24, 8, 2}, rng);
  auto out = qgdf::gated_fuse(qi, ql, q, params);
  for (std::size_t i = 0; i < 5; ++i) {
    const double g0 = out.gamma.data()[2 * i];
    const double g1 = out.gamma.data()[2 * i + 1];
    CHECK(g0 + g1 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g0 > 0.0);
    CHECK(g1 > 0.0);
  }
  // No gradient reaches the queries through the gate input.
  diff::sum(diff::square(out.gamma)).backward();
  for (double g : q.embed.grad()) {
    CHECK(g == 0.0);
  }
  auto no_lidar = qgdf::gated_fuse(qi, Value::zeros({5, 8}), q, params);
  Value manual = diff::ffn_apply(
    diff::concat({diff::slice(no_lidar.gamma, 1, 0, 1) * qi, Value::zeros({5, 1}) * qi}, 1),
    params.fuse);
  CHECK(identical(no_lidar.fused, manual));
}

TEST_CASE("residual update")
{
  diff::Rng rng(7);
  auto params = qgdf::make_qgdf_params(fixture::small_config(), rng);
  // Parameter structs share their nodes on copy, so replace rather than mutate.
  auto zero_pos = params;
  zero_pos.position = diff::make_ffn({3, 8, 8}, rng);
  for (auto & l : zero_pos.position.layers) {
    l = diff::make_zero_linear(l.in_dim(), l.out_dim());
  }
  qgdf::Queries q{Value::parameter(fixture::random_tensor({3, 8}, rng)),
                  Value::parameter(fixture::front_refs(3, rng))};
  auto same = qgdf::residual_update(Value::zeros({3, 8}), q, zero_pos, false, nullptr);
  CHECK(identical(same, q.embed));

  Value fused = Value::parameter(fixture::random_tensor({3, 8}, rng));
  auto e1 = qgdf::residual_update(fused, q, params, false, nullptr);
  auto e2 = qgdf::residual_update(fused, q, params, false, nullptr);
  CHECK(identical(e1, e2));
  CHECK_THROWS(qgdf::residual_update(fused, q, params, true, nullptr));

  const Value w = Value::constant(fixture::random_tensor({3, 8}, rng));
  auto report = diff::grad_check(
    [&] { return diff::sum(qgdf::residual_update(fused, q, params, false, nullptr) * w); },
    {{"embed", q.embed}, {"fused", fused}, {"ref", q.ref}});
  CHECK_MESSAGE(report.passed(), report.summary());
  for (const auto & in : report.inputs) {
    CHECK(in.checked > 0);
  }
  bool ref_nonzero = false;
  for (double g : q.ref.grad()) {
    ref_nonzero |= g != 0.0;
  }
  CHECK(ref_nonzero);
}

TEST_CASE("qgdf layer: shapes, masked camera invariance, lidar absence")
{
  diff::Rng rng(8);
  auto params = qgdf::make_qgdf_params(fixture::small_config(), rng);
  params.gate = diff::make_ffn({24, 8, 2}, rng);
  auto pyr = fixture::random_pyramid(2, 2, 8, rng);
  auto bev = fixture::random_bev(8, 16, rng);
  qgdf::Queries q{Value::constant(fixture::random_tensor({4, 8}, rng)),
                  Value::constant(fixture::front_refs(4, rng))};
  auto base = qgdf::qgdf_layer(q, pyr, bev, params, false, nullptr);
  CHECK(base.queries.embed.shape() == q.embed.shape());

  // Camera 1 faces away from every query.
  auto perturbed = pyr;
  for (auto & m : perturbed.maps[1]) {
    m = Value::constant(fixture::random_tensor(m.shape(), rng, 50.0));
  }
  auto again = qgdf::qgdf_layer(q, perturbed, bev, params, false, nullptr);
  CHECK(identical(base.image.q_bar, again.image.q_bar));
  CHECK(identical(base.fuse.fused, again.fuse.fused));
  CHECK(identical(base.queries.embed, again.queries.embed));

  auto absent = qgdf::qgdf_layer(q, pyr, pillars::absent_bev(), params, false, nullptr);
  auto img = qgdf::image_branch(q, pyr, params);
  auto fuse = qgdf::gated_fuse(img.q_bar, Value::zeros({4, 8}), q, params);
  auto manual = qgdf::residual_update(fuse.fused, q, params, false, nullptr);
  CHECK(identical(absent.queries.embed, manual));
  CHECK(identical(absent.fuse.gamma, fuse.gamma));
}

TEST_CASE("qgdf stack: gradient check on a small configuration")
{
  diff::Rng rng(9);
  auto cfg = fixture::small_config(8, 2, 2);
  std::vector<qgdf::QgdfParams> layers;
  for (int l = 0; l < 3; ++l) {
    layers.push_back(qgdf::make_qgdf_params(cfg, rng));
    layers.back().gate.layers.back() = diff::make_linear(8, 2, rng);
  }
  auto pyr = fixture::random_pyramid(2, 2, 8, rng);
  auto bev = fixture::random_bev(8, 16, rng);
  qgdf::Queries q{Value::parameter(fixture::random_tensor({3, 8}, rng)),
                  Value::constant(fixture::front_refs(3, rng))};
  const Value w = Value::constant(fixture::random_tensor({3, 8}, rng));
  std::vector<diff::CheckedInput> inputs{{"embed", q.embed}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    qgdf::visit_params(layers[l], "layer" + std::to_string(l), [&](const std::string & n, Value & v) {
      inputs.push_back({n, v});
    });
  }
  // The detached gate inputs are recorded once and held fixed, so finite
  // differences see the function that backprop differentiates.
  qgdf::DetachedGateInputs detached;
  qgdf::qgdf_stack(q, pyr, bev, layers, false, nullptr, {}, &detached);
  detached.frozen = true;
  auto report = diff::grad_check(
    [&] {
      auto out = qgdf::qgdf_stack(q, pyr, bev, layers, false, nullptr, {}, &detached);
      return diff::mean(out.queries.embed * w);
    },
    inputs);
  CHECK_MESSAGE(report.passed(), report.summary());
  CHECK(report.total_checked() > 2500);

  // Live detached inputs give the same forward value at the base point.
  auto live = qgdf::qgdf_stack(q, pyr, bev, layers, false, nullptr);
  auto replay = qgdf::qgdf_stack(q, pyr, bev, layers, false, nullptr, {}, &detached);
  CHECK(identical(live.queries.embed, replay.queries.embed));
}

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

#include "pnp/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace pnp::diff
{

namespace
{

// Gradient buffer of parent i, or nullptr when it does not need one.
double * parent_grad(Node & self, std::size_t i)
{
  Node & p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer().data() : nullptr;
}

const double * parent_data(Node & self, std::size_t i)
{
  return self.parents[i]->value.data.data();
}

struct BroadcastPlan
{
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> aligned_strides(const Shape & in, const Shape & out)
{
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t step = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t src = in.size() - 1 - k;
    const std::size_t dst = rank - 1 - k;
    strides[dst] = in[src] == 1 ? 0 : step;
    step *= in[src];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape & a, const Shape & b)
{
  const std::size_t rank = std::max(a.size(), b.size());
  BroadcastPlan plan;
  plan.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument(
        "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    plan.out[rank - 1 - k] = std::max(da, db);
  }
  plan.stride_a = aligned_strides(a, plan.out);
  plan.stride_b = aligned_strides(b, plan.out);
  return plan;
}

template <class F>
void broadcast_loop(const BroadcastPlan & p, F && f)
{
  const std::size_t rank = p.out.size();
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  const std::size_t total = numel(p.out);
  if (total == 0) {
    return;
  }
  const std::size_t inner = p.out[rank - 1];
  const std::size_t sa = p.stride_a[rank - 1];
  const std::size_t sb = p.stride_b[rank - 1];
  const std::size_t outer = total / inner;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ao = 0;
  std::size_t bo = 0;
  std::size_t o = 0;
  for (std::size_t k = 0; k < outer; ++k) {
    for (std::size_t j = 0; j < inner; ++j) {
      f(o + j, ao + j * sa, bo + j * sb);
    }
    o += inner;
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ao += p.stride_a[d];
      bo += p.stride_b[d];
      if (idx[d] < p.out[d]) {
        break;
      }
      ao -= p.stride_a[d] * p.out[d];
      bo -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

// Binary elementwise op; da/db receive (a, b, out) and return the partials.
template <class Fwd, class Da, class Db>
Value binary(const Value & a, const Value & b, Fwd fwd, Da da, Db db)
{
  auto plan = plan_broadcast(a.shape(), b.shape());
  Tensor out(plan.out);
  const double * pa = a.data().data();
  const double * pb = b.data().data();
  broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
    out.data[o] = fwd(pa[i], pb[j]);
  });
  return Value::make(std::move(out), {a, b}, [plan, da, db](Node & self) {
    const double * va = parent_data(self, 0);
    const double * vb = parent_data(self, 1);
    const double * y = self.value.data.data();
    const double * g = self.grad.data();
    double * ga = parent_grad(self, 0);
    double * gb = parent_grad(self, 1);
    broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) {
        ga[i] += g[o] * da(va[i], vb[j], y[o]);
      }
      if (gb) {
        gb[j] += g[o] * db(va[i], vb[j], y[o]);
      }
    });
  });
}

// Unary elementwise op; df receives (x, y) and returns dy/dx.
template <class Fwd, class Df>
Value unary(const Value & x, Fwd fwd, Df df)
{
  Tensor out(x.shape());
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    out.data[i] = fwd(in[i]);
  }
  return Value::make(std::move(out), {x}, [df](Node & self) {
    const double * vx = parent_data(self, 0);
    double * gx = parent_grad(self, 0);
    const auto & y = self.value.data;
    for (std::size_t i = 0; i < y.size(); ++i) {
      gx[i] += self.grad[i] * df(vx[i], y[i]);
    }
  });
}

void check_finite(double v, const char * what)
{
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

struct AxisSplit
{
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};

AxisSplit split_axis(const Shape & s, std::size_t axis)
{
  if (axis >= s.size()) {
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) {
    r.outer *= s[i];
  }
  for (std::size_t i = axis + 1; i < s.size(); ++i) {
    r.inner *= s[i];
  }
  return r;
}

}  // namespace

Value add(const Value & a, const Value & b)
{
  return binary(
    a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
    [](double, double, double) { return 1.0; });
}

Value sub(const Value & a, const Value & b)
{
  return binary(
    a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
    [](double, double, double) { return -1.0; });
}

Value mul(const Value & a, const Value & b)
{
  return binary(
    a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
    [](double x, double, double) { return x; });
}

Value div(const Value & a, const Value & b)
{
  return binary(
    a, b, [](double x, double y) { return x / y; },
    [](double, double y, double) { return 1.0 / y; },
    [](double, double y, double out) { return -out / y; });
}

Value neg(const Value & x)
{
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Value operator+(const Value & a, const Value & b) { return add(a, b); }
Value operator-(const Value & a, const Value & b) { return sub(a, b); }
Value operator*(const Value & a, const Value & b) { return mul(a, b); }
Value operator/(const Value & a, const Value & b) { return div(a, b); }
Value operator-(const Value & x) { return neg(x); }

Value operator+(const Value & a, double s)
{
  return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}
Value operator+(double s, const Value & a) { return a + s; }
Value operator-(const Value & a, double s) { return a + (-s); }
Value operator-(double s, const Value & a)
{
  return unary(a, [s](double v) { return s - v; }, [](double, double) { return -1.0; });
}
Value operator*(const Value & a, double s)
{
  return unary(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}
Value operator*(double s, const Value & a) { return a * s; }
Value operator/(const Value & a, double s) { return a * (1.0 / s); }

Value exp(const Value & x)
{
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Value log(const Value & x)
{
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Value tanh(const Value & x)
{
  return unary(
    x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Value sigmoid(const Value & x)
{
  return unary(
    x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
    [](double, double y) { return y * (1.0 - y); });
}

Value relu(const Value & x)
{
  return unary(
    x, [](double v) { return v > 0.0 ? v : 0.0; },
    [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Value abs(const Value & x)
{
  return unary(
    x, [](double v) { return std::abs(v); },
    [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Value square(const Value & x)
{
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Value clip(const Value & x, double lo, double hi)
{
  return unary(
    x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
    [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Value inverse_sigmoid(const Value & p, double eps)
{
  const double lo = eps;
  const double hi = 1.0 - eps;
  return unary(
    p,
    [lo, hi](double v) {
      const double c = std::clamp(v, lo, hi);
      return std::log(c / (1.0 - c));
    },
    [lo, hi](double v, double) {
      if (v < lo || v > hi) {
        return 0.0;
      }
      return 1.0 / (v * (1.0 - v));
    });
}

Value matmul(const Value & a, const Value & b)
{
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument(
      "matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t m = b.dim(1);
  Tensor out({n, m});
  const double * pa = a.data().data();
  const double * pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double * row = out.data.data() + i * m;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = pa[i * k + t];
      const double * brow = pb + t * m;
      for (std::size_t j = 0; j < m; ++j) {
        row[j] += av * brow[j];
      }
    }
  }
  return Value::make(std::move(out), {a, b}, [n, k, m](Node & self) {
    const double * va = parent_data(self, 0);
    const double * vb = parent_data(self, 1);
    double * ga = parent_grad(self, 0);
    double * gb = parent_grad(self, 1);
    const double * g = self.grad.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double * grow = g + i * m;
      for (std::size_t t = 0; t < k; ++t) {
        const double * brow = vb + t * m;
        if (ga) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            acc += grow[j] * brow[j];
          }
          ga[i * k + t] += acc;
        }
        if (gb) {
          const double av = va[i * k + t];
          double * gbrow = gb + t * m;
          for (std::size_t j = 0; j < m; ++j) {
            gbrow[j] += av * grow[j];
          }
        }
      }
    }
  });
}

Value transpose(const Value & x)
{
  if (x.rank() != 2) {
    throw std::invalid_argument("transpose expects rank 2, got " + shape_str(x.shape()));
  }
  const std::size_t r = x.dim(0);
  const std::size_t c = x.dim(1);
  Tensor out({c, r});
  const auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out.data[j * r + i] = in[i * c + j];
    }
  }
  return Value::make(std::move(out), {x}, [r, c](Node & self) {
    double * gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        gx[i * c + j] += self.grad[j * r + i];
      }
    }
  });
}

Value linear(const Value & x, const Value & weight, const Value & bias)
{
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != weight.dim(0) ||
      bias.size() != weight.dim(1)) {
    throw std::invalid_argument(
      "linear shape mismatch: x " + shape_str(x.shape()) + ", weight " +
      shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t in = weight.dim(0);
  const std::size_t outd = weight.dim(1);
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  Tensor out(out_shape);
  const double * px = x.data().data();
  const double * pw = weight.data().data();
  const double * pb = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double * row = out.data.data() + r * outd;
    std::copy(pb, pb + outd, row);
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = px[r * in + i];
      if (xv == 0.0) {
        continue;
      }
      const double * wrow = pw + i * outd;
      for (std::size_t j = 0; j < outd; ++j) {
        row[j] += xv * wrow[j];
      }
    }
  }
  return Value::make(std::move(out), {x, weight, bias}, [rows, in, outd](Node & self) {
    const double * vx = parent_data(self, 0);
    const double * vw = parent_data(self, 1);
    double * gx = parent_grad(self, 0);
    double * gw = parent_grad(self, 1);
    double * gb = parent_grad(self, 2);
    const double * g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double * grow = g + r * outd;
      if (gb) {
        for (std::size_t j = 0; j < outd; ++j) {
          gb[j] += grow[j];
        }
      }
      for (std::size_t i = 0; i < in; ++i) {
        const double * wrow = vw + i * outd;
        if (gx) {
          double acc = 0.0;
          for (std::size_t j = 0; j < outd; ++j) {
            acc += grow[j] * wrow[j];
          }
          gx[r * in + i] += acc;
        }
        if (gw) {
          const double xv = vx[r * in + i];
          if (xv != 0.0) {
            double * gwrow = gw + i * outd;
            for (std::size_t j = 0; j < outd; ++j) {
              gwrow[j] += xv * grow[j];
            }
          }
        }
      }
    }
  });
}

Value reshape(const Value & x, Shape shape)
{
  if (numel(shape) != x.size()) {
    throw std::invalid_argument(
      "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return Value::make(std::move(out), {x}, [](Node & self) {
    double * gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      gx[i] += self.grad[i];
    }
  });
}

Value concat(const std::vector<Value> & parts, std::size_t axis)
{
  if (parts.empty()) {
    throw std::invalid_argument("concat of zero values");
  }
  const Shape & ref = parts.front().shape();
  Shape out_shape = ref;
  out_shape.at(axis) = 0;
  std::vector<std::size_t> widths;
  for (const auto & p : parts) {
    if (p.rank() != ref.size()) {
      throw std::invalid_argument("concat rank mismatch");
    }
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.dim(d) != ref[d]) {
        throw std::invalid_argument(
          "concat shape mismatch: " + shape_str(p.shape()) + " vs " + shape_str(ref));
      }
    }
    out_shape[axis] += p.dim(axis);
    widths.push_back(split_axis(p.shape(), axis).len * split_axis(p.shape(), axis).inner);
  }
  const std::size_t outer = split_axis(ref, axis).outer;
  std::size_t total_width = 0;
  for (auto w : widths) {
    total_width += w;
  }
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double * src = parts[k].data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(
        src + o * widths[k], src + (o + 1) * widths[k],
        out.data.begin() + static_cast<std::ptrdiff_t>(o * total_width + offset));
    }
    offset += widths[k];
  }
  return Value::make(std::move(out), parts, [widths, outer, total_width](Node & self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      double * gp = parent_grad(self, k);
      if (gp) {
        for (std::size_t o = 0; o < outer; ++o) {
          const double * g = self.grad.data() + o * total_width + off;
          for (std::size_t j = 0; j < widths[k]; ++j) {
            gp[o * widths[k] + j] += g[j];
          }
        }
      }
      off += widths[k];
    }
  });
}

Value slice(const Value & x, std::size_t axis, std::size_t begin, std::size_t end)
{
  const auto split = split_axis(x.shape(), axis);
  if (begin > end || end > split.len) {
    throw std::invalid_argument(
      "slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
      shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t in_w = split.len * split.inner;
  const std::size_t out_w = (end - begin) * split.inner;
  const std::size_t off = begin * split.inner;
  Tensor out(out_shape);
  const double * src = x.data().data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy(
      src + o * in_w + off, src + o * in_w + off + out_w,
      out.data.begin() + static_cast<std::ptrdiff_t>(o * out_w));
  }
  return Value::make(std::move(out), {x}, [split, in_w, out_w, off](Node & self) {
    double * gx = parent_grad(self, 0);
    for (std::size_t o = 0; o < split.outer; ++o) {
      for (std::size_t j = 0; j < out_w; ++j) {
        gx[o * in_w + off + j] += self.grad[o * out_w + j];
      }
    }
  });
}

Value index_rows(const Value & x, const std::vector<std::size_t> & rows)
{
  if (x.rank() == 0) {
    throw std::invalid_argument("index_rows on a scalar");
  }
  const std::size_t n = x.dim(0);
  const std::size_t w = n == 0 ? 0 : x.size() / n;
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  const double * src = x.data().data();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= n) {
      throw std::invalid_argument("index_rows: row " + std::to_string(rows[k]) + " out of range");
    }
    std::copy(
      src + rows[k] * w, src + (rows[k] + 1) * w,
      out.data.begin() + static_cast<std::ptrdiff_t>(k * w));
  }
  return Value::make(std::move(out), {x}, [rows, w](Node & self) {
    double * gx = parent_grad(self, 0);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      for (std::size_t j = 0; j < w; ++j) {
        gx[rows[k] * w + j] += self.grad[k * w + j];
      }
    }
  });
}

Value sum(const Value & x)
{
  double s = 0.0;
  for (double v : x.data()) {
    s += v;
  }
  return Value::make(Tensor(Shape{}, std::vector<double>{s}), {x}, [](Node & self) {
    double * gx = parent_grad(self, 0);
    const double g = self.grad[0];
    const std::size_t n = self.parents[0]->value.data.size();
    for (std::size_t i = 0; i < n; ++i) {
      gx[i] += g;
    }
  });
}

Value mean(const Value & x)
{
  if (x.size() == 0) {
    throw std::invalid_argument("mean of empty value");
  }
  return sum(x) * (1.0 / static_cast<double>(x.size()));
}

Value sum_axis(const Value & x, std::size_t axis)
{
  const auto split = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  const double * src = x.data().data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t l = 0; l < split.len; ++l) {
      const double * row = src + (o * split.len + l) * split.inner;
      double * dst = out.data.data() + o * split.inner;
      for (std::size_t i = 0; i < split.inner; ++i) {
        dst[i] += row[i];
      }
    }
  }
  return Value::make(std::move(out), {x}, [split](Node & self) {
    double * gx = parent_grad(self, 0);
    for (std::size_t o = 0; o < split.outer; ++o) {
      const double * g = self.grad.data() + o * split.inner;
      for (std::size_t l = 0; l < split.len; ++l) {
        double * dst = gx + (o * split.len + l) * split.inner;
        for (std::size_t i = 0; i < split.inner; ++i) {
          dst[i] += g[i];
        }
      }
    }
  });
}

Value masked_softmax(const Value & logits, const Tensor & mask)
{
  if (mask.shape != logits.shape()) {
    throw std::invalid_argument(
      "masked_softmax mask " + shape_str(mask.shape) + " does not match logits " +
      shape_str(logits.shape()));
  }
  if (logits.rank() == 0) {
    throw std::invalid_argument("masked_softmax on a scalar");
  }
  const std::size_t w = logits.shape().back();
  const std::size_t rows = w == 0 ? 0 : logits.size() / w;
  Tensor out(logits.shape());
  const double * x = logits.data().data();
  std::vector<char> valid(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    valid[i] = mask.data[i] != 0.0 ? 1 : 0;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double * xr = x + r * w;
    const char * vr = valid.data() + r * w;
    double * yr = out.data.data() + r * w;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < w; ++j) {
      if (vr[j]) {
        mx = std::max(mx, xr[j]);
      }
    }
    if (!std::isfinite(mx)) {
      continue;  // fully masked row stays zero
    }
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      if (vr[j]) {
        yr[j] = std::exp(xr[j] - mx);
        s += yr[j];
      }
    }
    for (std::size_t j = 0; j < w; ++j) {
      yr[j] /= s;
    }
  }
  return Value::make(std::move(out), {logits}, [rows, w](Node & self) {
    double * gx = parent_grad(self, 0);
    const double * y = self.value.data.data();
    const double * g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        dot += g[r * w + j] * y[r * w + j];
      }
      for (std::size_t j = 0; j < w; ++j) {
        // y == 0 on masked entries, so they receive exactly zero.
        gx[r * w + j] += y[r * w + j] * (g[r * w + j] - dot);
      }
    }
  });
}

Value softmax(const Value & x) { return masked_softmax(x, Tensor(x.shape(), 1.0)); }

Value log_softmax(const Value & x)
{
  if (x.rank() == 0) {
    throw std::invalid_argument("log_softmax on a scalar");
  }
  const std::size_t w = x.shape().back();
  const std::size_t rows = w == 0 ? 0 : x.size() / w;
  Tensor out(x.shape());
  const double * px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double * xr = px + r * w;
    const double mx = *std::max_element(xr, xr + w);
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      s += std::exp(xr[j] - mx);
    }
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < w; ++j) {
      out.data[r * w + j] = xr[j] - lse;
    }
  }
  return Value::make(std::move(out), {x}, [rows, w](Node & self) {
    double * gx = parent_grad(self, 0);
    const double * y = self.value.data.data();
    const double * g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        gs += g[r * w + j];
      }
      for (std::size_t j = 0; j < w; ++j) {
        gx[r * w + j] += g[r * w + j] - std::exp(y[r * w + j]) * gs;
      }
    }
  });
}

Value layer_normalize(const Value & x, const Value & gain, const Value & bias, double eps)
{
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw std::invalid_argument("layer_normalize needs a non-empty last axis");
  }
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d) {
    throw std::invalid_argument(
      "layer_normalize affine size mismatch: " + std::to_string(gain.size()) + "/" +
      std::to_string(bias.size()) + " vs " + std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  // The variance is stabilized by eps^2 so that non-degenerate vectors come
  // out with unit variance to well below eps.
  const double stab = eps * eps;
  Tensor out(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  const double * px = x.data().data();
  const double * pg = gain.data().data();
  const double * pb = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double * xr = px + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mu += xr[j];
    }
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      var += (xr[j] - mu) * (xr[j] - mu);
    }
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + stab);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * inv_std[r];
      xhat[r * d + j] = h;
      out.data[r * d + j] = pg[j] * h + pb[j];
    }
  }
  return Value::make(
    std::move(out), {x, gain, bias},
    [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node & self) {
      double * gx = parent_grad(self, 0);
      double * gg = parent_grad(self, 1);
      double * gb = parent_grad(self, 2);
      const double * pg = parent_data(self, 1);
      const double * g = self.grad.data();
      std::vector<double> gh(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const double * gr = g + r * d;
        const double * hr = xhat.data() + r * d;
        double m1 = 0.0;
        double m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          if (gg) {
            gg[j] += gr[j] * hr[j];
          }
          if (gb) {
            gb[j] += gr[j];
          }
          gh[j] = gr[j] * pg[j];
          m1 += gh[j];
          m2 += gh[j] * hr[j];
        }
        if (gx) {
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            gx[r * d + j] += inv_std[r] * (gh[j] - m1 - hr[j] * m2);
          }
        }
      }
    });
}

Value bilinear_sample(const Value & map, const Value & coords, Padding padding)
{
  if (map.rank() != 3 || map.size() == 0) {
    throw std::invalid_argument("bilinear_sample needs a non-empty C x H x W map");
  }
  if (coords.rank() != 2 || coords.dim(1) != 2) {
    throw std::invalid_argument(
      "bilinear_sample coords must be N x 2, got " + shape_str(coords.shape()));
  }
  const std::size_t c = map.dim(0);
  const std::size_t h = map.dim(1);
  const std::size_t w = map.dim(2);
  const std::size_t n = coords.dim(0);
  const std::size_t plane = h * w;

  // Per-sample corner indices, weights and d(index)/d(coord) factors.
  struct Tap
  {
    long x0, y0, x1, y1;
    double wx, wy;
    double dix, diy;
  };
  std::vector<Tap> taps(n);
  const double * pc = coords.data().data();
  for (std::size_t k = 0; k < n; ++k) {
    const double gx = pc[2 * k];
    const double gy = pc[2 * k + 1];
    check_finite(gx, "bilinear_sample");
    check_finite(gy, "bilinear_sample");
    double ix = (gx + 1.0) * 0.5 * static_cast<double>(w - 1);
    double iy = (gy + 1.0) * 0.5 * static_cast<double>(h - 1);
    double dix = 0.5 * static_cast<double>(w - 1);
    double diy = 0.5 * static_cast<double>(h - 1);
    Tap t{};
    if (padding == Padding::kBorder) {
      const double mx = static_cast<double>(w - 1);
      const double my = static_cast<double>(h - 1);
      if (ix < 0.0 || ix > mx) {
        ix = std::clamp(ix, 0.0, mx);
        dix = 0.0;
      }
      if (iy < 0.0 || iy > my) {
        iy = std::clamp(iy, 0.0, my);
        diy = 0.0;
      }
      t.x0 = w > 1 ? std::min(static_cast<long>(std::floor(ix)), static_cast<long>(w) - 2) : 0;
      t.y0 = h > 1 ? std::min(static_cast<long>(std::floor(iy)), static_cast<long>(h) - 2) : 0;
      t.x1 = w > 1 ? t.x0 + 1 : 0;
      t.y1 = h > 1 ? t.y0 + 1 : 0;
      t.wx = w > 1 ? ix - static_cast<double>(t.x0) : 0.0;
      t.wy = h > 1 ? iy - static_cast<double>(t.y0) : 0.0;
    } else {
      t.x0 = static_cast<long>(std::floor(ix));
      t.y0 = static_cast<long>(std::floor(iy));
      t.x1 = t.x0 + 1;
      t.y1 = t.y0 + 1;
      t.wx = ix - static_cast<double>(t.x0);
      t.wy = iy - static_cast<double>(t.y0);
    }
    t.dix = dix;
    t.diy = diy;
    taps[k] = t;
  }

  auto inside = [w, h](long x, long y) {
    return x >= 0 && y >= 0 && x < static_cast<long>(w) && y < static_cast<long>(h);
  };

  Tensor out({n, c});
  const double * pm = map.data().data();
  for (std::size_t k = 0; k < n; ++k) {
    const Tap & t = taps[k];
    const double w00 = (1.0 - t.wx) * (1.0 - t.wy);
    const double w01 = t.wx * (1.0 - t.wy);
    const double w10 = (1.0 - t.wx) * t.wy;
    const double w11 = t.wx * t.wy;
    const bool i00 = inside(t.x0, t.y0);
    const bool i01 = inside(t.x1, t.y0);
    const bool i10 = inside(t.x0, t.y1);
    const bool i11 = inside(t.x1, t.y1);
    const std::size_t o00 = i00 ? static_cast<std::size_t>(t.y0) * w + static_cast<std::size_t>(t.x0) : 0;
    const std::size_t o01 = i01 ? static_cast<std::size_t>(t.y0) * w + static_cast<std::size_t>(t.x1) : 0;
    const std::size_t o10 = i10 ? static_cast<std::size_t>(t.y1) * w + static_cast<std::size_t>(t.x0) : 0;
    const std::size_t o11 = i11 ? static_cast<std::size_t>(t.y1) * w + static_cast<std::size_t>(t.x1) : 0;
    double * dst = out.data.data() + k * c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double * pl = pm + ch * plane;
      double v = 0.0;
      if (i00) v += w00 * pl[o00];
      if (i01) v += w01 * pl[o01];
      if (i10) v += w10 * pl[o10];
      if (i11) v += w11 * pl[o11];
      dst[ch] = v;
    }
  }

  return Value::make(std::move(out), {map, coords}, [taps, c, w, h, plane, inside](Node & self) {
    const double * pm = parent_data(self, 0);
    double * gm = parent_grad(self, 0);
    double * gc = parent_grad(self, 1);
    const double * g = self.grad.data();
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const Tap & t = taps[k];
      const double * gk = g + k * c;
      const bool i00 = inside(t.x0, t.y0);
      const bool i01 = inside(t.x1, t.y0);
      const bool i10 = inside(t.x0, t.y1);
      const bool i11 = inside(t.x1, t.y1);
      const std::size_t o00 = i00 ? static_cast<std::size_t>(t.y0) * w + static_cast<std::size_t>(t.x0) : 0;
      const std::size_t o01 = i01 ? static_cast<std::size_t>(t.y0) * w + static_cast<std::size_t>(t.x1) : 0;
      const std::size_t o10 = i10 ? static_cast<std::size_t>(t.y1) * w + static_cast<std::size_t>(t.x0) : 0;
      const std::size_t o11 = i11 ? static_cast<std::size_t>(t.y1) * w + static_cast<std::size_t>(t.x1) : 0;
      if (gm) {
        const double w00 = (1.0 - t.wx) * (1.0 - t.wy);
        const double w01 = t.wx * (1.0 - t.wy);
        const double w10 = (1.0 - t.wx) * t.wy;
        const double w11 = t.wx * t.wy;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double * pl = gm + ch * plane;
          if (i00) pl[o00] += w00 * gk[ch];
          if (i01) pl[o01] += w01 * gk[ch];
          if (i10) pl[o10] += w10 * gk[ch];
          if (i11) pl[o11] += w11 * gk[ch];
        }
      }
      if (gc && (t.dix != 0.0 || t.diy != 0.0)) {
        double dwx = 0.0;
        double dwy = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double * pl = pm + ch * plane;
          const double v00 = i00 ? pl[o00] : 0.0;
          const double v01 = i01 ? pl[o01] : 0.0;
          const double v10 = i10 ? pl[o10] : 0.0;
          const double v11 = i11 ? pl[o11] : 0.0;
          dwx += gk[ch] * ((1.0 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
          dwy += gk[ch] * ((1.0 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
        }
        gc[2 * k] += dwx * t.dix;
        gc[2 * k + 1] += dwy * t.diy;
      }
    }
  });
}

Value stop_gradient(const Value & x) { return Value::constant(x.tensor()); }

Value dropout(const Value & x, double rate, bool training, Rng & rng)
{
  if (!training || rate <= 0.0) {
    return x;
  }
  if (rate >= 1.0) {
    return Value::zeros(x.shape());
  }
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor m(x.shape());
  const double scale = 1.0 / (1.0 - rate);
  for (auto & v : m.data) {
    v = keep(rng) ? scale : 0.0;
  }
  return mul(x, Value::constant(std::move(m)));
}

Value segment_max(const Value & x, std::size_t slots, const std::vector<std::size_t> & counts)
{
  if (x.rank() != 2 || x.dim(0) != slots * counts.size()) {
    throw std::invalid_argument(
      "segment_max expects " + std::to_string(slots * counts.size()) + " rows, got " +
      shape_str(x.shape()));
  }
  const std::size_t groups = counts.size();
  const std::size_t c = x.dim(1);
  Tensor out({groups, c});
  std::vector<std::size_t> arg(groups * c, std::numeric_limits<std::size_t>::max());
  const double * px = x.data().data();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t cnt = std::min(counts[gi], slots);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t bi = arg[gi * c + ch];
      for (std::size_t s = 0; s < cnt; ++s) {
        const std::size_t row = gi * slots + s;
        if (px[row * c + ch] > best) {
          best = px[row * c + ch];
          bi = row;
        }
      }
      if (cnt > 0) {
        out.data[gi * c + ch] = best;
        arg[gi * c + ch] = bi;
      }
    }
  }
  return Value::make(std::move(out), {x}, [arg = std::move(arg), c](Node & self) {
    double * gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] != std::numeric_limits<std::size_t>::max()) {
        gx[arg[i] * c + i % c] += self.grad[i];
      }
    }
  });
}

Value scatter_to_grid(
  const Value & x, const std::vector<std::size_t> & cells, std::size_t height, std::size_t width)
{
  if (x.rank() != 2 || x.dim(0) != cells.size()) {
    throw std::invalid_argument(
      "scatter_to_grid expects " + std::to_string(cells.size()) + " rows, got " +
      shape_str(x.shape()));
  }
  const std::size_t c = x.dim(1);
  const std::size_t area = height * width;
  Tensor out({c, height, width});
  std::vector<bool> used(area, false);
  const double * px = x.data().data();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] >= area || used[cells[i]]) {
      throw std::invalid_argument(
        "scatter_to_grid: cell " + std::to_string(cells[i]) + " out of range or repeated");
    }
    used[cells[i]] = true;
    for (std::size_t ch = 0; ch < c; ++ch) {
      out.data[ch * area + cells[i]] = px[i * c + ch];
    }
  }
  return Value::make(std::move(out), {x}, [cells, c, area](Node & self) {
    double * gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        gx[i * c + ch] += self.grad[ch * area + cells[i]];
      }
    }
  });
}

}  // namespace pnp::diff

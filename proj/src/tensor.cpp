// Copyright 2026 The mrmllm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mrmllm/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "mrmllm/error.hpp"

namespace mrml {

namespace {

using detail::ImplPtr;
using detail::Node;
using detail::Buffer;
using detail::TensorImpl;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw InvalidArgument(std::string(op) + ": " + detail);
}

[[noreturn]] void shape_fail2(const char* op, const Shape& a, const Shape& b) {
  shape_fail(op, "incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_2d(const char* op, const Tensor& t) {
  if (t.ndim() != 2) shape_fail(op, "expected a 2-D tensor, got " + shape_str(t.shape()));
}

ImplPtr new_impl(Shape shape, Buffer data) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

/// Wraps a freshly computed value, recording a graph node when any input
/// participates in differentiation.
Tensor make_result(Shape shape, Buffer data,
                   std::initializer_list<Tensor> inputs, const char* op,
                   detail::BackwardFn fn) {
  auto impl = new_impl(std::move(shape), std::move(data));
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      auto node = std::make_shared<Node>();
      node->op = op;
      for (const auto& t : inputs) node->inputs.push_back(t.impl());
      node->backward = std::move(fn);
      impl->requires_grad = true;
      impl->grad_fn = std::move(node);
    }
  }
  return Tensor(std::move(impl));
}

Tensor make_result_v(Shape shape, Buffer data,
                     std::span<const Tensor> inputs, const char* op,
                     detail::BackwardFn fn) {
  auto impl = new_impl(std::move(shape), std::move(data));
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      auto node = std::make_shared<Node>();
      node->op = op;
      for (const auto& t : inputs) node->inputs.push_back(t.impl());
      node->backward = std::move(fn);
      impl->requires_grad = true;
      impl->grad_fn = std::move(node);
    }
  }
  return Tensor(std::move(impl));
}

enum class Broadcast { kSame, kRow };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (a.ndim() == 2) {
    const bool row1 = b.ndim() == 1 && b.dim(0) == a.dim(1);
    const bool row2 = b.ndim() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1);
    if (row1 || row2) return Broadcast::kRow;
  }
  shape_fail2(op, a.shape(), b.shape());
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : impl_(new_impl({0}, {})) {}

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), Buffer(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), Buffer(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw InvalidArgument("Tensor::from: shape " + shape_str(shape) + " needs " +
                          std::to_string(shape_numel(shape)) + " values, got " +
                          std::to_string(values.size()));
  }
  return Tensor(new_impl(std::move(shape), Buffer(values.begin(), values.end())));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::identity(std::size_t n) {
  auto t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  auto t = zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = stddev * rng.normal();
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw InvalidArgument("Tensor::dim: axis " + std::to_string(axis) +
                          " out of range for " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw InvalidArgument("Tensor::rows: not 2-D " + shape_str(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw InvalidArgument("Tensor::cols: not 2-D " + shape_str(shape()));
  return impl_->shape[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data.at(r * cols() + c);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw InvalidArgument("Tensor::item: tensor " + shape_str(shape()) +
                          " is not a scalar");
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<const double> Tensor::grad() const {
  return {impl_->grad_buffer(), impl_->data.size()};
}

std::span<double> Tensor::mutable_grad() {
  return {impl_->grad_buffer(), impl_->data.size()};
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  return Tensor(new_impl(impl_->shape, impl_->data));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) shape_fail2("matmul", a.shape(), b.shape());
  Buffer out(n * m);
  MapMat(out.data(), n, m).noalias() =
      ConstMapMat(a.data().data(), n, k) * ConstMapMat(b.data().data(), k, m);
  return make_result({n, m}, std::move(out), {a, b}, "matmul",
                     [n, k, m](TensorImpl& o, std::span<const ImplPtr> in) {
                       ConstMapMat go(o.grad.data(), n, m);
                       if (in[0]->requires_grad) {
                         MapMat(in[0]->grad_buffer(), n, k).noalias() +=
                             go * ConstMapMat(in[1]->data.data(), k, m).transpose();
                       }
                       if (in[1]->requires_grad) {
                         MapMat(in[1]->grad_buffer(), k, m).noalias() +=
                             ConstMapMat(in[0]->data.data(), n, k).transpose() * go;
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  const auto n = a.rows(), m = a.cols();
  Buffer out(n * m);
  MapMat(out.data(), m, n) = ConstMapMat(a.data().data(), n, m).transpose();
  return make_result({m, n}, std::move(out), {a}, "transpose",
                     [n, m](TensorImpl& o, std::span<const ImplPtr> in) {
                       MapMat(in[0]->grad_buffer(), n, m) +=
                           ConstMapMat(o.grad.data(), m, n).transpose();
                     });
}

namespace {

// Row broadcasting treats `a` as rows x m with `b` a single row of m values.
Tensor add_impl(const Tensor& a, const Tensor& b, double sign, const char* op) {
  const auto kind = broadcast_kind(op, a, b);
  const double* x = a.data().data();
  const double* y = b.data().data();
  const auto n = a.numel();
  const auto m = kind == Broadcast::kRow ? b.numel() : n;
  Buffer out(n);
  for (std::size_t r = 0; r < n; r += m) {
    for (std::size_t j = 0; j < m; ++j) out[r + j] = x[r + j] + sign * y[j];
  }
  return make_result(a.shape(), std::move(out), {a, b}, op,
                     [m, sign](TensorImpl& o, std::span<const ImplPtr> in) {
                       const auto n = o.data.size();
                       const double* g = o.grad.data();
                       if (in[0]->requires_grad) {
                         double* ga = in[0]->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                       }
                       if (in[1]->requires_grad) {
                         double* gb = in[1]->grad_buffer();
                         for (std::size_t r = 0; r < n; r += m) {
                           for (std::size_t j = 0; j < m; ++j) gb[j] += sign * g[r + j];
                         }
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_impl(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_impl(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind("mul", a, b);
  const double* x = a.data().data();
  const double* y = b.data().data();
  const auto n = a.numel();
  const auto m = kind == Broadcast::kRow ? b.numel() : n;
  Buffer out(n);
  for (std::size_t r = 0; r < n; r += m) {
    for (std::size_t j = 0; j < m; ++j) out[r + j] = x[r + j] * y[j];
  }
  return make_result(a.shape(), std::move(out), {a, b}, "mul",
                     [m](TensorImpl& o, std::span<const ImplPtr> in) {
                       const auto n = o.data.size();
                       const double* g = o.grad.data();
                       const double* xa = in[0]->data.data();
                       const double* xb = in[1]->data.data();
                       if (in[0]->requires_grad) {
                         double* ga = in[0]->grad_buffer();
                         for (std::size_t r = 0; r < n; r += m) {
                           for (std::size_t j = 0; j < m; ++j) ga[r + j] += g[r + j] * xb[j];
                         }
                       }
                       if (in[1]->requires_grad) {
                         double* gb = in[1]->grad_buffer();
                         for (std::size_t r = 0; r < n; r += m) {
                           for (std::size_t j = 0; j < m; ++j) gb[j] += g[r + j] * xa[r + j];
                         }
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  Buffer out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, "scale",
                     [factor](TensorImpl& o, std::span<const ImplPtr> in) {
                       double* ga = in[0]->grad_buffer();
                       for (std::size_t i = 0; i < o.data.size(); ++i) ga[i] += factor * o.grad[i];
                     });
}

Tensor scale(const Tensor& a, const Tensor& factor) {
  if (factor.numel() != 1) shape_fail2("scale", a.shape(), factor.shape());
  const double f = factor.item();
  Buffer out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= f;
  return make_result(a.shape(), std::move(out), {a, factor}, "scale",
                     [](TensorImpl& o, std::span<const ImplPtr> in) {
                       const double fv = in[1]->data[0];
                       if (in[0]->requires_grad) {
                         double* ga = in[0]->grad_buffer();
                         for (std::size_t i = 0; i < o.data.size(); ++i) ga[i] += fv * o.grad[i];
                       }
                       if (in[1]->requires_grad) {
                         double acc = 0.0;
                         const auto& xa = in[0]->data;
                         for (std::size_t i = 0; i < o.data.size(); ++i) acc += xa[i] * o.grad[i];
                         in[1]->grad_buffer()[0] += acc;
                       }
                     });
}

namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) shape_fail("concat", "axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
    if (!ok) shape_fail2("concat", ref, s);
    out_shape[axis] += s[axis];
  }
  const auto split = split_at(out_shape, axis);
  const auto out_row = out_shape[axis] * split.inner;
  Buffer out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto width = p.shape()[axis] * split.inner;
    offsets.push_back(offset);
    const auto& src = p.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(src.begin() + o * width, width, out.begin() + o * out_row + offset);
    }
    offset += width;
  }
  return make_result_v(
      std::move(out_shape), std::move(out), parts, "concat",
      [split, out_row, offsets](TensorImpl& o, std::span<const ImplPtr> in) {
        for (std::size_t p = 0; p < in.size(); ++p) {
          if (!in[p]->requires_grad) continue;
          const auto width = in[p]->data.size() / std::max<std::size_t>(split.outer, 1);
          double* g = in[p]->grad_buffer();
          for (std::size_t r = 0; r < split.outer; ++r) {
            const double* src = o.grad.data() + r * out_row + offsets[p];
            for (std::size_t i = 0; i < width; ++i) g[r * width + i] += src[i];
          }
        }
      });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.ndim()) shape_fail("slice", "axis out of range for " + shape_str(a.shape()));
  if (begin > end || end > a.dim(axis)) {
    shape_fail("slice", "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") invalid for " + shape_str(a.shape()));
  }
  const auto split = split_at(a.shape(), axis);
  const auto in_row = a.dim(axis) * split.inner;
  const auto width = (end - begin) * split.inner;
  const auto start = begin * split.inner;
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  Buffer out(split.outer * width);
  const auto& src = a.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(src.begin() + o * in_row + start, width, out.begin() + o * width);
  }
  return make_result(std::move(out_shape), std::move(out), {a}, "slice",
                     [split, in_row, width, start](TensorImpl& o, std::span<const ImplPtr> in) {
                       double* g = in[0]->grad_buffer();
                       for (std::size_t r = 0; r < split.outer; ++r) {
                         for (std::size_t i = 0; i < width; ++i) {
                           g[r * in_row + start + i] += o.grad[r * width + i];
                         }
                       }
                     });
}

Tensor softmax(const Tensor& a) {
  if (a.ndim() == 0 || a.shape().back() == 0) shape_fail("softmax", "empty last axis " + shape_str(a.shape()));
  const auto m = a.shape().back();
  const auto rows = a.numel() / m;
  const auto& x = a.data();
  Buffer out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * m;
    double* yr = out.data() + r * m;
    const double mx = *std::max_element(xr, xr + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < m; ++j) yr[j] /= total;
  }
  return make_result(a.shape(), std::move(out), {a}, "softmax",
                     [rows, m](TensorImpl& o, std::span<const ImplPtr> in) {
                       double* g = in[0]->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = o.data.data() + r * m;
                         const double* gy = o.grad.data() + r * m;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < m; ++j) dot += gy[j] * y[j];
                         for (std::size_t j = 0; j < m; ++j) g[r * m + j] += y[j] * (gy[j] - dot);
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.ndim() == 0 || x.shape().back() == 0) shape_fail("layer_norm", "empty last axis " + shape_str(x.shape()));
  const auto m = x.shape().back();
  if (gain.numel() != m) shape_fail2("layer_norm", x.shape(), gain.shape());
  if (bias.numel() != m) shape_fail2("layer_norm", x.shape(), bias.shape());
  const auto rows = x.numel() / m;
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = bias.data();
  Buffer out(xv.size());
  Buffer xhat(xv.size());
  Buffer rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * m;
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += xr[j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(m);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      const double h = (xr[j] - mu) * rstd[r];
      xhat[r * m + j] = h;
      out[r * m + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
      [rows, m, xhat = std::move(xhat), rstd = std::move(rstd)](
          TensorImpl& o, std::span<const ImplPtr> in) {
        const auto& g = in[1]->data;
        const double inv_m = 1.0 / static_cast<double>(m);
        if (in[0]->requires_grad) {
          double* gx = in[0]->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gy = o.grad.data() + r * m;
            const double* h = xhat.data() + r * m;
            double sum_d = 0.0, sum_dh = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              const double d = gy[j] * g[j];
              sum_d += d;
              sum_dh += d * h[j];
            }
            for (std::size_t j = 0; j < m; ++j) {
              const double d = gy[j] * g[j];
              gx[r * m + j] += rstd[r] * (d - inv_m * sum_d - h[j] * inv_m * sum_dh);
            }
          }
        }
        if (in[1]->requires_grad) {
          double* gg = in[1]->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < m; ++j) gg[j] += o.grad[r * m + j] * xhat[r * m + j];
          }
        }
        if (in[2]->requires_grad) {
          double* gb = in[2]->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < m; ++j) gb[j] += o.grad[r * m + j];
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  const auto& xv = x.data();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  }
  return make_result(x.shape(), std::move(out), {x}, "gelu",
                     [](TensorImpl& o, std::span<const ImplPtr> in) {
                       const auto& xv = in[0]->data;
                       double* g = in[0]->grad_buffer();
                       const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
                       for (std::size_t i = 0; i < xv.size(); ++i) {
                         const double cdf = 0.5 * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
                         const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xv[i] * xv[i]);
                         g[i] += o.grad[i] * (cdf + xv[i] * pdf);
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_2d("embedding", table);
  const auto vocab = table.rows(), d = table.cols();
  std::vector<int> idv(ids.begin(), ids.end());
  Buffer out(idv.size() * d);
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
      shape_fail("embedding", "id " + std::to_string(idv[i]) + " out of range for table " +
                                  shape_str(table.shape()));
    }
    std::copy_n(table.data().begin() + static_cast<std::size_t>(idv[i]) * d, d, out.begin() + i * d);
  }
  const auto n = idv.size();
  return make_result({n, d}, std::move(out), {table}, "embedding",
                     [d, idv = std::move(idv)](TensorImpl& o, std::span<const ImplPtr> in) {
                       double* g = in[0]->grad_buffer();
                       for (std::size_t i = 0; i < idv.size(); ++i) {
                         const auto row = static_cast<std::size_t>(idv[i]) * d;
                         for (std::size_t j = 0; j < d; ++j) g[row + j] += o.grad[i * d + j];
                       }
                     });
}

Tensor masked_fill(const Tensor& x, std::span<const unsigned char> mask, double value) {
  if (mask.size() != x.numel()) {
    shape_fail("masked_fill", "mask of " + std::to_string(mask.size()) +
                                  " entries for tensor " + shape_str(x.shape()));
  }
  std::vector<unsigned char> mv(mask.begin(), mask.end());
  Buffer out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mv[i]) out[i] = value;
  }
  return make_result(x.shape(), std::move(out), {x}, "masked_fill",
                     [mv = std::move(mv)](TensorImpl& o, std::span<const ImplPtr> in) {
                       double* g = in[0]->grad_buffer();
                       for (std::size_t i = 0; i < mv.size(); ++i) {
                         if (!mv[i]) g[i] += o.grad[i];
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, {x}, "sum",
                     [](TensorImpl& o, std::span<const ImplPtr> in) {
                       double* g = in[0]->grad_buffer();
                       for (std::size_t i = 0; i < in[0]->data.size(); ++i) g[i] += o.grad[0];
                     });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) shape_fail("mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_rows(const Tensor& x) {
  require_2d("mean_rows", x);
  if (x.rows() == 0) shape_fail("mean_rows", "no rows in " + shape_str(x.shape()));
  const auto n = x.rows(), m = x.cols();
  Buffer out(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[j] += x.data()[r * m + j];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= inv;
  return make_result({1, m}, std::move(out), {x}, "mean_rows",
                     [n, m, inv](TensorImpl& o, std::span<const ImplPtr> in) {
                       double* g = in[0]->grad_buffer();
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t j = 0; j < m; ++j) g[r * m + j] += inv * o.grad[j];
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_2d("cross_entropy", logits);
  const auto n = logits.rows(), vocab = logits.cols();
  if (targets.size() != n) {
    shape_fail("cross_entropy", std::to_string(targets.size()) + " targets for logits " +
                                    shape_str(logits.shape()));
  }
  std::vector<int> tv(targets.begin(), targets.end());
  Buffer probs(n * vocab, 0.0);
  std::size_t counted = 0;
  double total = 0.0;
  const auto& x = logits.data();
  for (std::size_t r = 0; r < n; ++r) {
    if (tv[r] < 0) continue;
    if (static_cast<std::size_t>(tv[r]) >= vocab) {
      shape_fail("cross_entropy", "target " + std::to_string(tv[r]) + " >= vocab " + std::to_string(vocab));
    }
    ++counted;
    const double* xr = x.data() + r * vocab;
    const double mx = *std::max_element(xr, xr + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += (probs[r * vocab + j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < vocab; ++j) probs[r * vocab + j] /= z;
    total -= xr[tv[r]] - mx - std::log(z);
  }
  if (counted == 0) throw InvalidArgument("cross_entropy: no positions to score");
  const double inv = 1.0 / static_cast<double>(counted);
  return make_result({1}, {total * inv}, {logits}, "cross_entropy",
                     [n, vocab, inv, tv = std::move(tv), probs = std::move(probs)](
                         TensorImpl& o, std::span<const ImplPtr> in) {
                       double* g = in[0]->grad_buffer();
                       const double go = o.grad[0] * inv;
                       for (std::size_t r = 0; r < n; ++r) {
                         if (tv[r] < 0) continue;
                         for (std::size_t j = 0; j < vocab; ++j) g[r * vocab + j] += go * probs[r * vocab + j];
                         g[r * vocab + static_cast<std::size_t>(tv[r])] -= go;
                       }
                     });
}

Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionOptions& options) {
  require_2d("cross_attention", q);
  require_2d("cross_attention", k);
  require_2d("cross_attention", v);
  const auto nq = q.rows(), nk = k.rows(), d = q.cols();
  const auto heads = options.heads;
  if (k.cols() != d) shape_fail2("cross_attention", q.shape(), k.shape());
  if (v.rows() != nk || v.cols() != d) shape_fail2("cross_attention", k.shape(), v.shape());
  if (heads == 0 || d % heads != 0) {
    shape_fail("cross_attention", "model width " + std::to_string(d) + " not divisible by " +
                                      std::to_string(heads) + " heads");
  }
  const bool has_mask = !options.key_valid.empty();
  if (has_mask && options.key_valid.size() != nk) {
    shape_fail("cross_attention", "key mask of " + std::to_string(options.key_valid.size()) +
                                      " entries for " + std::to_string(nk) + " keys");
  }
  if (options.causal && nq != nk) shape_fail2("cross_attention(causal)", q.shape(), k.shape());
  if (nq == 0) return make_result({0, d}, {}, {q, k, v}, "cross_attention",
                                  [](TensorImpl&, std::span<const ImplPtr>) {});
  std::vector<unsigned char> valid(nk, 1);
  if (has_mask) std::copy(options.key_valid.begin(), options.key_valid.end(), valid.begin());
  if (std::none_of(valid.begin(), valid.end(), [](unsigned char c) { return c != 0; })) {
    throw InvalidArgument("cross_attention: every key is masked");
  }
  const bool causal = options.causal;
  const auto dh = d / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

  ConstMapMat Q(q.data().data(), nq, d), K(k.data().data(), nk, d), V(v.data().data(), nk, d);
  Buffer out(nq * d);
  MapMat O(out.data(), nq, d);
  // Attention probabilities per head, kept for the backward pass.
  auto probs = std::make_shared<Buffer>(heads * nq * nk);
  for (std::size_t h = 0; h < heads; ++h) {
    MapMat P(probs->data() + h * nq * nk, nq, nk);
    P.noalias() = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose();
    for (std::size_t i = 0; i < nq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        double& s = P(i, j);
        s = (valid[j] && (!causal || j <= i)) ? s * scl : kMaskedLogit;
        mx = std::max(mx, s);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < nk; ++j) total += (P(i, j) = std::exp(P(i, j) - mx));
      for (std::size_t j = 0; j < nk; ++j) P(i, j) /= total;
    }
    O.middleCols(h * dh, dh).noalias() = P * V.middleCols(h * dh, dh);
  }
  return make_result(
      {nq, d}, std::move(out), {q, k, v}, "cross_attention",
      [nq, nk, d, heads, dh, scl, probs](TensorImpl& o, std::span<const ImplPtr> in) {
        ConstMapMat Q(in[0]->data.data(), nq, d), K(in[1]->data.data(), nk, d),
            V(in[2]->data.data(), nk, d), GO(o.grad.data(), nq, d);
        RowMat dP(nq, nk);
        for (std::size_t h = 0; h < heads; ++h) {
          ConstMapMat P(probs->data() + h * nq * nk, nq, nk);
          const auto go_h = GO.middleCols(h * dh, dh);
          if (in[2]->requires_grad) {
            MapMat(in[2]->grad_buffer(), nk, d).middleCols(h * dh, dh).noalias() += P.transpose() * go_h;
          }
          if (!in[0]->requires_grad && !in[1]->requires_grad) continue;
          dP.noalias() = go_h * V.middleCols(h * dh, dh).transpose();
          for (std::size_t i = 0; i < nq; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < nk; ++j) dot += dP(i, j) * P(i, j);
            for (std::size_t j = 0; j < nk; ++j) dP(i, j) = scl * P(i, j) * (dP(i, j) - dot);
          }
          if (in[0]->requires_grad) {
            MapMat(in[0]->grad_buffer(), nq, d).middleCols(h * dh, dh).noalias() +=
                dP * K.middleCols(h * dh, dh);
          }
          if (in[1]->requires_grad) {
            MapMat(in[1]->grad_buffer(), nk, d).middleCols(h * dh, dh).noalias() +=
                dP.transpose() * Q.middleCols(h * dh, dh);
          }
        }
      });
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw InvalidArgument("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  const auto& root = loss.impl();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      TensorImpl* child = node->grad_fn->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->grad_fn) continue;
    t->grad_buffer();
    t->grad_fn->backward(*t, t->grad_fn->inputs);
  }
}

}  // namespace mrml

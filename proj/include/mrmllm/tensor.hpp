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

// Dense double-precision tensors with define-by-run reverse-mode
// differentiation.
//
// A Tensor is a cheap handle onto shared storage. Every operation that reads
// at least one tensor with requires_grad() (while gradient recording is
// enabled) records a node holding its inputs and a backward closure. The
// nodes form the compute graph; backward() orders it topologically from the
// loss and runs each closure once.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "mrmllm/rng.hpp"

namespace mrml {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node;

/// Cache-line aligned storage, so vectorized kernels see the same alignment
/// on every run and produce bit-identical sums.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // lazily sized to data.size()
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  double* grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad.data();
  }
};

using ImplPtr = std::shared_ptr<TensorImpl>;
using BackwardFn =
    std::function<void(TensorImpl& out, std::span<const ImplPtr> inputs)>;

struct Node {
  const char* op = "";
  std::vector<ImplPtr> inputs;
  BackwardFn backward;
};

}  // namespace detail

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }
  /// Row count / column count of a 2-D tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  /// Writable view. Writing into a tensor that already feeds a recorded
  /// graph invalidates that graph's gradients.
  std::span<double> mutable_data() { return impl_->data; }
  double at(std::size_t flat) const { return impl_->data.at(flat); }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  /// Accumulated gradient; zeros when nothing has reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  void zero_grad();
  /// Drops the gradient buffer entirely (optimizers skip such tensors).
  void clear_grad();

  /// Deep copy of values only; the copy is a graph leaf.
  Tensor clone() const;
  /// Same storage values, detached from the graph (copy).
  Tensor detach() const { return clone(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const detail::ImplPtr& impl() const { return impl_; }
  explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

 private:
  detail::ImplPtr impl_;
};

/// Disables graph recording for the lifetime of the guard (per thread).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Operation catalog. All shape violations throw InvalidArgument naming the
// operation and the offending shapes.

/// (n x k) * (k x m).
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& a);
/// Elementwise sum. `b` may also be a row vector ({m} or {1, m}) broadcast
/// over the rows of an (n x m) `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product with the same broadcasting rule as add().
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Multiplies by a one-element tensor (differentiable in both arguments).
Tensor scale(const Tensor& a, const Tensor& factor);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
/// Softmax over the last axis.
Tensor softmax(const Tensor& a);
inline constexpr double kLayerNormEps = 1e-5;
/// Normalizes over the last axis, then applies per-feature gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);
/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
/// Rows of `table` (V x d) selected by `ids`.
Tensor embedding(const Tensor& table, std::span<const int> ids);
/// Positions with mask[i] != 0 are replaced by `value` (no gradient there).
Tensor masked_fill(const Tensor& x, std::span<const unsigned char> mask,
                   double value);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column means of a 2-D tensor, shape (1 x m).
Tensor mean_rows(const Tensor& x);
/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits`. Rows whose target is negative are ignored. Requires at least one
/// counted row.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

inline constexpr double kMaskedLogit = -1e9;

struct AttentionOptions {
  std::size_t heads = 1;
  /// Optional key validity (size n_k, nonzero = attend).
  std::span<const unsigned char> key_valid{};
  /// Query i may only see keys j <= i (requires n_q == n_k).
  bool causal = false;
};

/// Multi-head scaled dot-product attention over already projected q, k, v.
/// Each head uses columns [h*d/H, (h+1)*d/H); logits are scaled by
/// 1/sqrt(d/H) and masked logits are set to kMaskedLogit before the softmax.
/// Output heads are concatenated (no output projection). Throws when every
/// key is masked; an empty q yields an empty result.
Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionOptions& options);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// requires_grad tensor reachable from the loss.
void backward(const Tensor& loss);

}  // namespace mrml

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

// Parameter registry and the small transformer pieces shared by the encoders,
// the fusion blocks and the language model.

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mrmllm/rng.hpp"
#include "mrmllm/tensor.hpp"

namespace mrml::nn {

struct Param {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

/// Ordered, uniquely named collection of parameter tensors. Registration order
/// is the serialization order. Frozen parameters never require gradients.
class ParamSet {
 public:
  Tensor add(std::string name, Tensor value, bool frozen);

  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }
  const Param* find(std::string_view name) const;
  Param* find(std::string_view name);
  const Param& at(std::string_view name) const;

  std::vector<Tensor> trainable() const;
  std::vector<Tensor> frozen() const;
  std::size_t trainable_count() const;
  void clear_grads();

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// y = x W + b with W of shape (in x out); b is empty when bias-free.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear make(ParamSet& ps, const std::string& name, std::size_t in,
                     std::size_t out, Rng& rng, bool frozen = false,
                     bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm make(ParamSet& ps, const std::string& name, std::size_t d,
                        bool frozen = false);
  Tensor operator()(const Tensor& x) const;
};

/// Two-layer GELU perceptron.
struct Mlp {
  Linear fc1;
  Linear fc2;

  static Mlp make(ParamSet& ps, const std::string& name, std::size_t d,
                  std::size_t hidden, Rng& rng, bool frozen = false);
  Tensor operator()(const Tensor& x) const;
};

/// Projected multi-head attention: o(attend(q(x_q), k(x_kv), v(x_kv))). The
/// key projection has no bias: it would shift every logit of a query equally.
struct Attention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  static Attention make(ParamSet& ps, const std::string& name, std::size_t d,
                        std::size_t heads, Rng& rng, bool frozen = false);
  Tensor operator()(const Tensor& x_q, const Tensor& x_kv,
                    std::span<const unsigned char> key_valid = {},
                    bool causal = false) const;
};

/// Pre-norm self-attention block: x + attn(ln1 x), then + mlp(ln2 x).
struct SelfBlock {
  LayerNorm ln1;
  Attention attn;
  LayerNorm ln2;
  Mlp mlp;

  static SelfBlock make(ParamSet& ps, const std::string& name, std::size_t d,
                        std::size_t heads, std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x,
                    std::span<const unsigned char> key_valid = {}) const;
};

/// Pre-norm cross-attention block: queries x read a normalized context, then
/// an MLP; both sublayers residual. With skip_attention the attention
/// sublayer is a pure passthrough.
struct CrossBlock {
  LayerNorm ln_q;
  LayerNorm ln_kv;
  Attention attn;
  LayerNorm ln2;
  Mlp mlp;

  static CrossBlock make(ParamSet& ps, const std::string& name, std::size_t d,
                         std::size_t heads, std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& context,
                    std::span<const unsigned char> key_valid = {},
                    bool skip_attention = false) const;
};

}  // namespace mrml::nn

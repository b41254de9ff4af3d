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

#include "mrmllm/nn.hpp"

#include <cmath>

#include "mrmllm/error.hpp"

namespace mrml::nn {

Tensor ParamSet::add(std::string name, Tensor value, bool frozen) {
  if (index_.count(name)) throw InvalidArgument("ParamSet: duplicate parameter " + name);
  value.set_requires_grad(!frozen);
  index_.emplace(name, params_.size());
  params_.push_back({std::move(name), value, frozen});
  return value;
}

const Param* ParamSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

Param* ParamSet::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Param& ParamSet::at(std::string_view name) const {
  const auto* p = find(name);
  if (!p) throw InvalidArgument("ParamSet: no parameter named " + std::string(name));
  return *p;
}

std::vector<Tensor> ParamSet::trainable() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (!p.frozen) out.push_back(p.tensor);
  }
  return out;
}

std::vector<Tensor> ParamSet::frozen() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (p.frozen) out.push_back(p.tensor);
  }
  return out;
}

std::size_t ParamSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (!p.frozen) n += p.tensor.numel();
  }
  return n;
}

void ParamSet::clear_grads() {
  for (auto& p : params_) p.tensor.clear_grad();
}

Linear Linear::make(ParamSet& ps, const std::string& name, std::size_t in,
                    std::size_t out, Rng& rng, bool frozen, bool with_bias) {
  Linear l;
  l.weight = ps.add(name + ".weight",
                    Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))), frozen);
  if (with_bias) l.bias = ps.add(name + ".bias", Tensor::zeros({out}), frozen);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  auto y = matmul(x, weight);
  return bias.numel() ? add(y, bias) : y;
}

LayerNorm LayerNorm::make(ParamSet& ps, const std::string& name, std::size_t d, bool frozen) {
  LayerNorm n;
  n.gain = ps.add(name + ".gain", Tensor::full({d}, 1.0), frozen);
  n.bias = ps.add(name + ".bias", Tensor::zeros({d}), frozen);
  return n;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

Mlp Mlp::make(ParamSet& ps, const std::string& name, std::size_t d, std::size_t hidden,
              Rng& rng, bool frozen) {
  return {Linear::make(ps, name + ".fc1", d, hidden, rng, frozen),
          Linear::make(ps, name + ".fc2", hidden, d, rng, frozen)};
}

Tensor Mlp::operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }

Attention Attention::make(ParamSet& ps, const std::string& name, std::size_t d,
                          std::size_t heads, Rng& rng, bool frozen) {
  if (heads == 0 || d % heads != 0) {
    throw InvalidArgument("Attention " + name + ": width " + std::to_string(d) +
                          " not divisible by " + std::to_string(heads) + " heads");
  }
  Attention a;
  a.q = Linear::make(ps, name + ".q", d, d, rng, frozen);
  a.k = Linear::make(ps, name + ".k", d, d, rng, frozen, false);
  a.v = Linear::make(ps, name + ".v", d, d, rng, frozen);
  a.o = Linear::make(ps, name + ".o", d, d, rng, frozen);
  a.heads = heads;
  return a;
}

Tensor Attention::operator()(const Tensor& x_q, const Tensor& x_kv,
                             std::span<const unsigned char> key_valid, bool causal) const {
  return o(cross_attention(q(x_q), k(x_kv), v(x_kv),
                           {.heads = heads, .key_valid = key_valid, .causal = causal}));
}

SelfBlock SelfBlock::make(ParamSet& ps, const std::string& name, std::size_t d,
                          std::size_t heads, std::size_t hidden, Rng& rng) {
  return {LayerNorm::make(ps, name + ".ln1", d), Attention::make(ps, name + ".attn", d, heads, rng),
          LayerNorm::make(ps, name + ".ln2", d), Mlp::make(ps, name + ".mlp", d, hidden, rng)};
}

Tensor SelfBlock::operator()(const Tensor& x, std::span<const unsigned char> key_valid) const {
  const auto xn = ln1(x);
  auto h = add(x, attn(xn, xn, key_valid));
  return add(h, mlp(ln2(h)));
}

CrossBlock CrossBlock::make(ParamSet& ps, const std::string& name, std::size_t d,
                            std::size_t heads, std::size_t hidden, Rng& rng) {
  return {LayerNorm::make(ps, name + ".ln_q", d), LayerNorm::make(ps, name + ".ln_kv", d),
          Attention::make(ps, name + ".attn", d, heads, rng), LayerNorm::make(ps, name + ".ln2", d),
          Mlp::make(ps, name + ".mlp", d, hidden, rng)};
}

Tensor CrossBlock::operator()(const Tensor& x, const Tensor& context,
                              std::span<const unsigned char> key_valid,
                              bool skip_attention) const {
  auto h = x;
  if (!skip_attention) h = add(h, attn(ln_q(x), ln_kv(context), key_valid));
  return add(h, mlp(ln2(h)));
}

}  // namespace mrml::nn

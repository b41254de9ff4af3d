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


#include "mrmllm/fusion.hpp"

#include "mrmllm/error.hpp"

namespace mrml {

namespace {

void require_width(const char* op, const Tensor& t, std::size_t d) {
  if (t.ndim() != 2 || t.cols() != d) {
    throw InvalidArgument(std::string(op) + ": expected width " + std::to_string(d) + ", got " +
                          shape_str(t.shape()));
  }
}

}  // namespace

FusionParams FusionParams::make(nn::ParamSet& ps, const std::string& name,
                                const ModelConfig& cfg, Rng& rng) {
  const auto d = cfg.d_model;
  FusionParams f;
  f.shared_queries = ps.add(name + ".shared_queries", Tensor::randn({cfg.n_q, d}, rng, 1.0), false);
  f.scene_block = nn::CrossBlock::make(ps, name + ".scene_block", d, cfg.heads, cfg.mlp_hidden(), rng);
  f.object_block = nn::CrossBlock::make(ps, name + ".object_block", d, cfg.heads, cfg.mlp_hidden(), rng);
  f.modality_embed = ps.add(name + ".modality_embed", Tensor::randn({2, d}, rng, 0.1), false);
  f.integrate_block =
      nn::SelfBlock::make(ps, name + ".integrate_block", d, cfg.heads, cfg.mlp_hidden(), rng);
  f.text_block = nn::CrossBlock::make(ps, name + ".text_block", d, cfg.heads, cfg.mlp_hidden(), rng);
  return f;
}

Tensor shared_query_fusion(const Tensor& shared_queries, const SceneDescriptor& scene,
                           const ObjectDescriptors& objects, const FusionParams& params) {
  const auto d = params.modality_embed.cols();
  require_width("shared_query_fusion", shared_queries, d);
  require_width("shared_query_fusion", scene.tokens, d);
  require_width("shared_query_fusion", objects.tokens, d);
  if (objects.valid_mask.size() != objects.tokens.rows()) {
    throw InvalidArgument("shared_query_fusion: mask length " +
                          std::to_string(objects.valid_mask.size()) + " for object tokens " +
                          shape_str(objects.tokens.shape()));
  }
  auto h = params.scene_block(shared_queries, scene.tokens);
  return params.object_block(h, objects.tokens, objects.valid_mask, objects.count() == 0);
}

IntegratedPerception integrate_perception(const SceneDescriptor& scene,
                                          const ObjectDescriptors& objects,
                                          const FusionParams& params) {
  const auto d = params.modality_embed.cols();
  require_width("integrate_perception", scene.tokens, d);
  require_width("integrate_perception", objects.tokens, d);
  if (objects.valid_mask.size() != objects.tokens.rows()) {
    throw InvalidArgument("integrate_perception: mask length does not match object tokens");
  }
  auto s = add(scene.tokens, slice(params.modality_embed, 0, 0, 1));
  auto o = add(objects.tokens, slice(params.modality_embed, 0, 1, 2));
  IntegratedPerception out;
  out.valid.assign(scene.tokens.rows(), 1);
  out.valid.insert(out.valid.end(), objects.valid_mask.begin(), objects.valid_mask.end());
  out.tokens = params.integrate_block(concat({s, o}, 0), out.valid);
  return out;
}

Tensor cross_modal_attention(const Tensor& i_p, const Tensor& text_embed,
                             const FusionParams& params,
                             std::span<const unsigned char> key_valid) {
  const auto d = params.modality_embed.cols();
  require_width("cross_modal_attention", i_p, d);
  require_width("cross_modal_attention", text_embed, d);
  if (text_embed.rows() == 0) return Tensor::zeros({0, d});
  return params.text_block(text_embed, i_p, key_valid);
}

FusedContext fuse_all(const SceneDescriptor& scene, const ObjectDescriptors& objects,
                      const Tensor& text_embed, const FusionParams& params,
                      const Toggles& toggles) {
  FusedContext out;
  if (toggles.visual_forward) {
    out.shared_out = shared_query_fusion(params.shared_queries, scene, objects, params);
  } else {
    out.shared_out = Tensor::zeros(params.shared_queries.shape());
  }
  const auto ip = integrate_perception(scene, objects, params);
  out.m = cross_modal_attention(ip.tokens, text_embed, params, ip.valid);
  return out;
}

}  // namespace mrml

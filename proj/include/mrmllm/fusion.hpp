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


// Shared-query fusion of the scene and object streams, perception-as-modality
// integration, and text-over-perception cross attention.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "mrmllm/encoders.hpp"

namespace mrml {

struct FusionParams {
  Tensor shared_queries;  // n_q x d_model
  nn::CrossBlock scene_block;
  nn::CrossBlock object_block;
  Tensor modality_embed;  // 2 x d_model: row 0 scene, row 1 objects
  nn::SelfBlock integrate_block;
  nn::CrossBlock text_block;

  static FusionParams make(nn::ParamSet& ps, const std::string& name,
                           const ModelConfig& cfg, Rng& rng);
};

/// Integrated image-perception tokens and which of them are real.
struct IntegratedPerception {
  Tensor tokens;  // (n_patches + k_max) x d_model
  std::vector<unsigned char> valid;
};

struct FusedContext {
  Tensor shared_out;  // n_q x d_model
  Tensor m;           // n_L x d_model
};

/// Shared queries read the scene tokens, then the valid object tokens. With
/// no valid object the second attention sublayer is skipped.
Tensor shared_query_fusion(const Tensor& shared_queries, const SceneDescriptor& scene,
                           const ObjectDescriptors& objects, const FusionParams& params);

/// Scene and object tokens concatenated, tagged with their modality embedding
/// and mixed by one self-attention block that ignores object padding.
IntegratedPerception integrate_perception(const SceneDescriptor& scene,
                                          const ObjectDescriptors& objects,
                                          const FusionParams& params);

/// Text embeddings attend over the integrated tokens (padding masked when a
/// mask is given). Empty text gives an empty result.
Tensor cross_modal_attention(const Tensor& i_p, const Tensor& text_embed,
                             const FusionParams& params,
                             std::span<const unsigned char> key_valid = {});

FusedContext fuse_all(const SceneDescriptor& scene, const ObjectDescriptors& objects,
                      const Tensor& text_embed, const FusionParams& params,
                      const Toggles& toggles);

}  // namespace mrml

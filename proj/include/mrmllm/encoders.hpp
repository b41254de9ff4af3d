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


// Visual query streams: scene tokens from a small patch transformer over
// synthetic image features, and object tokens projected from detection
// descriptors.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrmllm/model_config.hpp"
#include "mrmllm/nn.hpp"
#include "mrmllm/perception.hpp"

namespace mrml {

struct SyntheticImage {
  std::string image_id;
  Tensor patches;  // n_patches x d_patch

  /// Deterministic in (image_id, seed).
  static SyntheticImage make(const std::string& image_id, std::uint64_t seed,
                             std::size_t n_patches, std::size_t d_patch);
};

struct SceneDescriptor {
  Tensor tokens;  // n_patches x d_model
};

struct ObjectDescriptors {
  Tensor tokens;                          // k_max x d_model, padding rows zero
  std::vector<unsigned char> valid_mask;  // k_max
  std::size_t count() const;
};

struct SceneEncoder {
  nn::Linear patch_proj;
  Tensor pos_embed;
  std::vector<nn::SelfBlock> blocks;

  static SceneEncoder make(nn::ParamSet& ps, const std::string& name,
                           const ModelConfig& cfg, Rng& rng);
};

struct ObjectProjector {
  nn::Linear fc1;  // d_p -> d_model
  nn::Linear fc2;  // d_model -> d_model
  Tensor class_embed;  // n_classes x d_model

  static ObjectProjector make(nn::ParamSet& ps, const std::string& name,
                              const ModelConfig& cfg, Rng& rng);
};

/// Patch projection + positional embedding + pre-norm self-attention blocks.
SceneDescriptor encode_scene(const SyntheticImage& image,
                             const SceneEncoder& encoder);

/// fc2(gelu(fc1(descriptor))) + class embedding per detection, in canonical
/// order, truncated and zero-padded to k_max.
ObjectDescriptors project_object_descriptors(const perception::DetectionSet& set,
                                             const ObjectProjector& projector,
                                             std::size_t k_max);

}  // namespace mrml

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


#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace mrml {

/// Dimensions shared by the encoders, the fusion blocks and the language
/// model. vocab_size and n_classes come from the vocabulary and class table.
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  std::size_t n_patches = 16;
  std::size_t d_patch = 32;
  std::size_t encoder_blocks = 2;
  std::size_t k_max = 8;
  std::size_t d_p = 32;
  std::size_t n_classes = 6;
  /// Keys the synthetic scene features together with the image id.
  std::uint64_t image_seed = 0;

  std::size_t n_q = 8;

  std::size_t n_layers = 4;
  std::size_t max_seq = 256;
  /// Number of top LM layers that receive the gated adapter.
  std::size_t adapter_layers = 2;
  std::size_t vocab_size = 0;
  /// Detections rendered into the prompt template.
  std::size_t max_objects = 8;

  std::size_t mlp_hidden() const { return d_model * mlp_ratio; }
  bool is_adapter_layer(std::size_t layer) const {
    return layer + adapter_layers >= n_layers;
  }
  /// Throws InvalidArgument naming the first inconsistent field.
  void validate() const;
};

/// Ablation switches for the two reinforcement paths.
struct Toggles {
  bool visual_forward = true;
  bool perception_forward = true;
};

}  // namespace mrml

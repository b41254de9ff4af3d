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


// The full model: encoders, fusion and the adapted language model over one
// parameter registry.

#pragma once

#include <cstdint>
#include <string>

#include "mrmllm/language_model.hpp"

namespace mrml {

struct Model {
  ModelConfig cfg;
  nn::ParamSet params;
  SceneEncoder scene;
  ObjectProjector objects;
  FusionParams fusion;
  LanguageModel lm;

  /// Registers every parameter in a fixed order and draws initial values
  /// from Rng(seed). Base LM weights are frozen; everything else trains.
  static Model make(const ModelConfig& cfg, std::uint64_t seed);

  Model() = default;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
};

/// Scene image, object tokens and text embedding for one prompt, fused.
FusedContext model_context(const Model& model, const std::string& image_id,
                           const perception::DetectionSet& detections,
                           const tok::TokenSeq& prompt_tokens, const Toggles& toggles);

/// Greedy answer to `question` about one image and its detections.
std::string generate_answer(const Model& model, const tok::Vocab& vocab,
                            const std::string& image_id,
                            const perception::DetectionSet& detections,
                            const std::string& question, const Toggles& toggles,
                            std::size_t max_new);

}  // namespace mrml

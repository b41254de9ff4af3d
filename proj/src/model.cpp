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


#include "mrmllm/model.hpp"

namespace mrml {

Model Model::make(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.cfg = cfg;
  m.scene = SceneEncoder::make(m.params, "scene", cfg, rng);
  m.objects = ObjectProjector::make(m.params, "objects", cfg, rng);
  m.fusion = FusionParams::make(m.params, "fusion", cfg, rng);
  m.lm = LanguageModel::make(m.params, "lm", cfg, rng);
  return m;
}

FusedContext model_context(const Model& model, const std::string& image_id,
                           const perception::DetectionSet& detections,
                           const tok::TokenSeq& prompt_tokens, const Toggles& toggles) {
  const auto& cfg = model.cfg;
  const auto image = SyntheticImage::make(image_id, cfg.image_seed, cfg.n_patches, cfg.d_patch);
  const auto scene = encode_scene(image, model.scene);
  const auto objects = project_object_descriptors(detections, model.objects, cfg.k_max);
  Tensor text;
  {
    NoGradGuard frozen;
    text = text_embedding(prompt_tokens, model.lm);
  }
  return fuse_all(scene, objects, text, model.fusion, toggles);
}

std::string generate_answer(const Model& model, const tok::Vocab& vocab,
                            const std::string& image_id,
                            const perception::DetectionSet& detections,
                            const std::string& question, const Toggles& toggles,
                            std::size_t max_new) {
  NoGradGuard no_grad;
  const auto bundle = build_prompt(detections, question, vocab, model.cfg, toggles);
  const auto fused = model_context(model, image_id, detections, bundle.prompt_tokens, toggles);
  return generate_greedy(bundle.prompt_tokens, &fused, model.lm, vocab, max_new);
}

}  // namespace mrml

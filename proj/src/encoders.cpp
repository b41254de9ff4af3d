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


#include "mrmllm/encoders.hpp"

#include <algorithm>
#include <numeric>

#include "mrmllm/error.hpp"

namespace mrml {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw InvalidArgument(std::string("model config: ") + field + " must be positive");
  };
  positive(d_model, "d_model");
  positive(heads, "heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(n_patches, "n_patches");
  positive(d_patch, "d_patch");
  positive(k_max, "k_max");
  positive(d_p, "d_p");
  positive(n_classes, "n_classes");
  positive(n_q, "n_q");
  positive(n_layers, "n_layers");
  positive(max_seq, "max_seq");
  if (d_model % heads != 0) {
    throw InvalidArgument("model config: d_model " + std::to_string(d_model) +
                          " is not divisible by heads " + std::to_string(heads));
  }
  if (adapter_layers > n_layers) {
    throw InvalidArgument("model config: adapter_layers " + std::to_string(adapter_layers) +
                          " exceeds n_layers " + std::to_string(n_layers));
  }
}

SyntheticImage SyntheticImage::make(const std::string& image_id, std::uint64_t seed,
                                    std::size_t n_patches, std::size_t d_patch) {
  std::uint64_t key = fnv1a64(image_id) ^ 0x5ce7e5ce7e5ce7eULL;
  key += seed * 0xd1b54a32d192ed03ULL;
  Rng rng(key);
  return {image_id, Tensor::randn({n_patches, d_patch}, rng)};
}

std::size_t ObjectDescriptors::count() const {
  return static_cast<std::size_t>(std::count(valid_mask.begin(), valid_mask.end(), 1));
}

SceneEncoder SceneEncoder::make(nn::ParamSet& ps, const std::string& name,
                                const ModelConfig& cfg, Rng& rng) {
  SceneEncoder e;
  e.patch_proj = nn::Linear::make(ps, name + ".patch_proj", cfg.d_patch, cfg.d_model, rng);
  e.pos_embed = ps.add(name + ".pos_embed", Tensor::randn({cfg.n_patches, cfg.d_model}, rng, 0.1), false);
  for (std::size_t b = 0; b < cfg.encoder_blocks; ++b) {
    e.blocks.push_back(nn::SelfBlock::make(ps, name + ".block" + std::to_string(b), cfg.d_model,
                                           cfg.heads, cfg.mlp_hidden(), rng));
  }
  return e;
}

ObjectProjector ObjectProjector::make(nn::ParamSet& ps, const std::string& name,
                                      const ModelConfig& cfg, Rng& rng) {
  ObjectProjector p;
  p.fc1 = nn::Linear::make(ps, name + ".fc1", cfg.d_p, cfg.d_model, rng);
  p.fc2 = nn::Linear::make(ps, name + ".fc2", cfg.d_model, cfg.d_model, rng);
  p.class_embed =
      ps.add(name + ".class_embed", Tensor::randn({cfg.n_classes, cfg.d_model}, rng, 0.1), false);
  return p;
}

SceneDescriptor encode_scene(const SyntheticImage& image, const SceneEncoder& encoder) {
  const auto& w = encoder.patch_proj.weight;
  const auto& p = image.patches;
  if (p.ndim() != 2 || p.cols() != w.rows() || p.rows() != encoder.pos_embed.rows()) {
    throw InvalidArgument("encode_scene: image '" + image.image_id + "' patches " +
                          shape_str(p.shape()) + " do not match encoder (" +
                          std::to_string(encoder.pos_embed.rows()) + " patches of width " +
                          std::to_string(w.rows()) + ")");
  }
  auto x = add(encoder.patch_proj(p), encoder.pos_embed);
  for (const auto& block : encoder.blocks) x = block(x);
  return {x};
}

ObjectDescriptors project_object_descriptors(const perception::DetectionSet& set,
                                             const ObjectProjector& projector,
                                             std::size_t k_max) {
  const auto d = projector.fc2.weight.cols();
  const auto d_p = projector.fc1.weight.rows();
  const auto sorted = perception::canonical(set);
  const auto k = std::min(k_max, sorted.detections.size());
  ObjectDescriptors out;
  out.valid_mask.assign(k_max, 0);
  std::fill_n(out.valid_mask.begin(), k, 1);
  if (k == 0) {
    out.tokens = Tensor::zeros({k_max, d});
    return out;
  }
  std::vector<double> desc;
  std::vector<int> classes;
  desc.reserve(k * d_p);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& det = sorted.detections[i];
    if (det.descriptor.size() != d_p) {
      throw InvalidArgument("project_object_descriptors: image '" + set.image_id +
                            "' detection " + std::to_string(i) + " has descriptor length " +
                            std::to_string(det.descriptor.size()) + ", expected " +
                            std::to_string(d_p));
    }
    if (det.class_id < 0 || static_cast<std::size_t>(det.class_id) >= projector.class_embed.rows()) {
      throw InvalidArgument("project_object_descriptors: class id " + std::to_string(det.class_id) +
                            " outside the class embedding");
    }
    desc.insert(desc.end(), det.descriptor.begin(), det.descriptor.end());
    classes.push_back(det.class_id);
  }
  auto rows = projector.fc2(gelu(projector.fc1(Tensor::from({k, d_p}, std::move(desc)))));
  rows = add(rows, embedding(projector.class_embed, classes));
  out.tokens = k == k_max ? rows : concat({rows, Tensor::zeros({k_max - k, d})}, 0);
  return out;
}

}  // namespace mrml

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


#include "mrmllm/gradcheck_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>

#include "mrmllm/gradcheck.hpp"
#include "mrmllm/model.hpp"

namespace mrml {

namespace {

using Inputs = std::vector<Tensor>;

// Fixed random weights turn a tensor output into a generic scalar.
Tensor project(const Tensor& t) {
  std::vector<double> w(t.numel());
  Rng rng(999);
  for (auto& x : w) x = rng.normal();
  return sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

struct OpCase {
  const char* name;
  std::function<Tensor(Inputs&)> f;
  std::vector<Shape> shapes;
};

std::vector<OpCase> op_cases() {
  static const std::vector<unsigned char> mask = {0, 1, 0, 0, 1, 0};
  static const std::vector<int> ids = {2, 0, 2, 1};
  static const std::vector<int> targets = {1, -1, 3};
  static const std::vector<unsigned char> key_valid = {1, 0, 1, 1};
  return {
      {"op.matmul", [](Inputs& in) { return project(matmul(in[0], in[1])); }, {{3, 4}, {4, 2}}},
      {"op.transpose", [](Inputs& in) { return project(transpose(in[0])); }, {{3, 4}}},
      {"op.add", [](Inputs& in) { return project(add(in[0], in[1])); }, {{3, 4}, {4}}},
      {"op.sub", [](Inputs& in) { return project(sub(in[0], in[1])); }, {{3, 4}, {1, 4}}},
      {"op.mul", [](Inputs& in) { return project(mul(in[0], in[1])); }, {{3, 4}, {3, 4}}},
      {"op.scale", [](Inputs& in) { return project(scale(in[0], in[1])); }, {{2, 3}, {1}}},
      {"op.concat", [](Inputs& in) { return project(concat({in[0], in[1]}, 1)); }, {{2, 3}, {2, 2}}},
      {"op.slice", [](Inputs& in) { return project(slice(in[0], 0, 1, 3)); }, {{3, 4}}},
      {"op.softmax", [](Inputs& in) { return project(softmax(in[0])); }, {{3, 5}}},
      {"op.layer_norm", [](Inputs& in) { return project(layer_norm(in[0], in[1], in[2])); },
       {{3, 6}, {6}, {6}}},
      {"op.gelu", [](Inputs& in) { return project(gelu(in[0])); }, {{3, 4}}},
      {"op.embedding", [](Inputs& in) { return project(embedding(in[0], ids)); }, {{3, 4}}},
      {"op.masked_fill", [](Inputs& in) { return project(masked_fill(in[0], mask, -3.0)); }, {{2, 3}}},
      {"op.mean", [](Inputs& in) { return mean(mul(in[0], in[0])); }, {{2, 3}}},
      {"op.mean_rows", [](Inputs& in) { return project(mean_rows(in[0])); }, {{4, 3}}},
      {"op.cross_entropy", [](Inputs& in) { return cross_entropy(in[0], targets); }, {{3, 5}}},
      {"op.attention", [](Inputs& in) {
         return project(cross_attention(in[0], in[1], in[2], {.heads = 2, .key_valid = key_valid}));
       }, {{3, 8}, {4, 8}, {4, 8}}},
      {"op.attention_causal", [](Inputs& in) {
         return project(cross_attention(in[0], in[1], in[2], {.heads = 4, .causal = true}));
       }, {{4, 8}, {4, 8}, {4, 8}}},
  };
}

Inputs trainable_with_prefix(const Model& model, const std::string& prefix) {
  Inputs out;
  for (const auto& p : model.params.params()) {
    if (!p.frozen && p.name.rfind(prefix, 0) == 0) out.push_back(p.tensor);
  }
  return out;
}

// Moves every trainable tensor off its initial value so that scales, biases
// and gates are generic; gates are pushed well away from zero.
void randomize_trainable(Model& model, Rng& rng) {
  for (auto& p : model.params.params()) {
    if (p.frozen) continue;
    const bool gate = p.name.ends_with(".gate");
    for (double& v : p.tensor.mutable_data()) v = (gate ? 0.5 : v) + 0.1 * rng.normal();
  }
}

perception::DetectionSet tiny_detections(const ModelConfig& cfg, std::uint64_t seed, std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < cfg.n_classes; ++c) names.push_back("c" + std::to_string(c));
  return perception::mock_detector("img_grad", seed, k, perception::ClassTable(names), cfg.d_p);
}

tok::TokenSeq random_tokens(std::size_t n, std::size_t vocab, Rng& rng) {
  tok::TokenSeq out(n);
  for (auto& t : out) t = static_cast<int>(rng.below(vocab));
  return out;
}

PromptBundle random_bundle(std::size_t prompt, std::size_t target, std::size_t vocab, Rng& rng) {
  PromptBundle b;
  b.prompt_tokens = random_tokens(prompt, vocab, rng);
  b.target_tokens = random_tokens(target, vocab, rng);
  b.loss_mask.assign(prompt, 0);
  b.loss_mask.resize(prompt + target, 1);
  return b;
}

using ComponentCheck = std::function<GradCheckReport(Model&, Rng&)>;

std::vector<std::pair<const char*, ComponentCheck>> component_cases() {
  std::vector<std::pair<const char*, ComponentCheck>> cases;
  cases.emplace_back("encode_scene", [](Model& m, Rng&) {
    const auto image = SyntheticImage::make("img_grad", 3, m.cfg.n_patches, m.cfg.d_patch);
    auto in = trainable_with_prefix(m, "scene.");
    return grad_check([&] { return project(encode_scene(image, m.scene).tokens); }, in);
  });
  cases.emplace_back("project_object_descriptors", [](Model& m, Rng&) {
    const auto dets = tiny_detections(m.cfg, 5, m.cfg.k_max - 1);
    auto in = trainable_with_prefix(m, "objects.");
    return grad_check(
        [&] { return project(project_object_descriptors(dets, m.objects, m.cfg.k_max).tokens); }, in);
  });
  cases.emplace_back("shared_query_fusion", [](Model& m, Rng& rng) {
    SceneDescriptor scene{Tensor::randn({m.cfg.n_patches, m.cfg.d_model}, rng)};
    ObjectDescriptors objects{Tensor::randn({m.cfg.k_max, m.cfg.d_model}, rng), {}};
    objects.valid_mask.assign(m.cfg.k_max, 1);
    objects.valid_mask.back() = 0;
    auto in = trainable_with_prefix(m, "fusion.shared_queries");
    for (const char* p : {"fusion.scene_block", "fusion.object_block"}) {
      auto more = trainable_with_prefix(m, p);
      in.insert(in.end(), more.begin(), more.end());
    }
    in.push_back(scene.tokens);
    in.push_back(objects.tokens);
    return grad_check(
        [&] { return project(shared_query_fusion(m.fusion.shared_queries, scene, objects, m.fusion)); },
        in);
  });
  cases.emplace_back("integrate_perception", [](Model& m, Rng& rng) {
    SceneDescriptor scene{Tensor::randn({m.cfg.n_patches, m.cfg.d_model}, rng)};
    ObjectDescriptors objects{Tensor::randn({m.cfg.k_max, m.cfg.d_model}, rng), {}};
    objects.valid_mask.assign(m.cfg.k_max, 1);
    objects.valid_mask.back() = 0;
    auto in = trainable_with_prefix(m, "fusion.modality_embed");
    auto block = trainable_with_prefix(m, "fusion.integrate_block");
    in.insert(in.end(), block.begin(), block.end());
    in.push_back(scene.tokens);
    return grad_check([&] { return project(integrate_perception(scene, objects, m.fusion).tokens); },
                      in);
  });
  cases.emplace_back("cross_modal_attention", [](Model& m, Rng& rng) {
    auto i_p = Tensor::randn({m.cfg.n_patches + m.cfg.k_max, m.cfg.d_model}, rng);
    auto text = Tensor::randn({5, m.cfg.d_model}, rng);
    std::vector<unsigned char> valid(m.cfg.n_patches + m.cfg.k_max - 1, 1);
    valid.push_back(0);
    auto in = trainable_with_prefix(m, "fusion.text_block");
    in.push_back(i_p);
    in.push_back(text);
    return grad_check([&] { return project(cross_modal_attention(i_p, text, m.fusion, valid)); }, in);
  });
  cases.emplace_back("lm_forward", [](Model& m, Rng& rng) {
    const auto bundle = random_bundle(6, 3, m.cfg.vocab_size, rng);
    const auto tokens = bundle.sequence();
    FusedContext fused{Tensor::randn({m.cfg.n_q, m.cfg.d_model}, rng),
                       Tensor::randn({6, m.cfg.d_model}, rng)};
    auto in = trainable_with_prefix(m, "lm.");
    in.push_back(fused.shared_out);
    in.push_back(fused.m);
    return grad_check([&] { return lm_loss(lm_forward(tokens, &fused, m.lm), bundle); }, in);
  });
  cases.emplace_back("model_end_to_end", [](Model& m, Rng& rng) {
    const auto dets = tiny_detections(m.cfg, 11, 2);
    const auto bundle = random_bundle(7, 3, m.cfg.vocab_size, rng);
    const auto tokens = bundle.sequence();
    auto in = trainable_with_prefix(m, "");
    return grad_check(
        [&] {
          const auto fused = model_context(m, "img_grad", dets, bundle.prompt_tokens, Toggles{});
          return lm_loss(lm_forward(tokens, &fused, m.lm), bundle);
        },
        in);
  });
  return cases;
}

void record(GradSuiteEntry& e, const GradCheckReport& r) {
  ++e.seeds;
  e.coordinates += r.coordinates;
  e.max_relative_error = std::max(e.max_relative_error, r.max_relative_error);
}

}  // namespace

double GradSuiteReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_relative_error);
  return w;
}

std::string GradSuiteReport::to_table() const {
  std::string out;
  char line[160];
  for (const auto& e : entries) {
    std::snprintf(line, sizeof line, "%-28s seeds %2zu  coords %7zu  max_rel_err %.3e  %s\n",
                  e.name.c_str(), e.seeds, e.coordinates, e.max_relative_error,
                  e.max_relative_error < tolerance ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof line, "worst %.3e (tolerance %.0e)\n", worst(), tolerance);
  return out + line;
}

ModelConfig grad_suite_model_config() {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.n_patches = 3;
  c.d_patch = 4;
  c.encoder_blocks = 1;
  c.k_max = 3;
  c.d_p = 8;
  c.n_classes = 3;
  c.n_q = 2;
  c.n_layers = 2;
  c.adapter_layers = 1;
  c.max_seq = 16;
  c.max_objects = 3;
  c.vocab_size = tok::base_vocab_size() + 4;
  return c;
}

GradSuiteReport run_grad_suite(std::size_t seeds) {
  GradSuiteReport report;
  for (const auto& c : op_cases()) {
    GradSuiteEntry e{c.name};
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
      Rng rng(seed * 7919 + 1);
      Inputs inputs;
      for (const auto& s : c.shapes) inputs.push_back(Tensor::randn(s, rng));
      record(e, grad_check([&] { return c.f(inputs); }, inputs));
    }
    report.entries.push_back(std::move(e));
  }
  const auto cfg = grad_suite_model_config();
  for (const auto& [name, check] : component_cases()) {
    GradSuiteEntry e{name};
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
      auto model = Model::make(cfg, seed + 100);
      Rng rng(seed * 104729 + 17);
      randomize_trainable(model, rng);
      record(e, check(model, rng));
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace mrml

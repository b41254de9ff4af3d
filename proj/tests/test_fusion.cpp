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


#include <algorithm>
#include <random>
#include <vector>

#include "doctest.h"
#include "mrmllm/error.hpp"
#include "mrmllm/model.hpp"
#include "support.hpp"

using namespace mrml;
using mrml::testing::bitwise_equal;
using mrml::testing::max_abs_diff;
using mrml::testing::small_config;

namespace {

constexpr double kTol = 1e-9;

perception::DetectionSet detections(const ModelConfig& cfg, const std::string& id, std::size_t k,
                                    std::uint64_t seed = 1) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < cfg.n_classes; ++i) names.push_back("c" + std::to_string(i));
  return perception::mock_detector(id, seed, k, perception::ClassTable(names), cfg.d_p);
}

struct Inputs {
  SceneDescriptor scene;
  ObjectDescriptors objects;
};

Inputs inputs(const Model& m, const perception::DetectionSet& set, std::size_t k_max) {
  const auto img = SyntheticImage::make(set.image_id, 0, m.cfg.n_patches, m.cfg.d_patch);
  return {encode_scene(img, m.scene), project_object_descriptors(set, m.objects, k_max)};
}

Tensor leading_rows(const Tensor& t, std::size_t n) { return slice(t, 0, 0, n); }

}  // namespace

TEST_CASE("fusion output shapes under default dimensions") {
  ModelConfig cfg;
  cfg.vocab_size = tok::base_vocab_size();
  const auto m = Model::make(cfg, 2);
  const auto text = Tensor::zeros({5, cfg.d_model});
  for (std::size_t k = 0; k <= cfg.k_max; ++k) {
    const auto in = inputs(m, detections(cfg, "img", k), cfg.k_max);
    CHECK(shared_query_fusion(m.fusion.shared_queries, in.scene, in.objects, m.fusion).shape() ==
          Shape{8, 64});
    const auto ip = integrate_perception(in.scene, in.objects, m.fusion);
    CHECK(ip.tokens.shape() == Shape{24, 64});
    const auto fused = fuse_all(in.scene, in.objects, text, m.fusion, Toggles{});
    CHECK(fused.shared_out.shape() == Shape{8, 64});
    CHECK(fused.m.shape() == Shape{5, 64});
  }
}

TEST_CASE("fusion rejects inconsistent widths") {
  const auto cfg = small_config();
  const auto m = Model::make(cfg, 2);
  auto in = inputs(m, detections(cfg, "img", 2), cfg.k_max);
  SceneDescriptor bad{Tensor::zeros({cfg.n_patches, cfg.d_model + 1})};
  CHECK_THROWS_AS(shared_query_fusion(m.fusion.shared_queries, bad, in.objects, m.fusion), InvalidArgument);
  CHECK_THROWS_AS(integrate_perception(bad, in.objects, m.fusion), InvalidArgument);
  CHECK_THROWS_AS(cross_modal_attention(Tensor::zeros({3, cfg.d_model}), Tensor::zeros({2, 5}), m.fusion),
                  InvalidArgument);
  in.objects.valid_mask.pop_back();
  CHECK_THROWS_AS(shared_query_fusion(m.fusion.shared_queries, in.scene, in.objects, m.fusion),
                  InvalidArgument);
}

TEST_CASE("detection order does not change any fusion output") {
  const auto cfg = small_config();
  const auto m = Model::make(cfg, 4);
  Rng rng(21);
  const auto text = Tensor::randn({6, cfg.d_model}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    auto set = detections(cfg, "img_" + std::to_string(trial), 1 + rng.below(cfg.k_max), trial);
    const auto a = inputs(m, set, cfg.k_max);
    std::shuffle(set.detections.begin(), set.detections.end(), std::mt19937(trial));
    const auto b = inputs(m, set, cfg.k_max);
    CHECK(max_abs_diff(shared_query_fusion(m.fusion.shared_queries, a.scene, a.objects, m.fusion),
                       shared_query_fusion(m.fusion.shared_queries, b.scene, b.objects, m.fusion)) < kTol);
    CHECK(max_abs_diff(integrate_perception(a.scene, a.objects, m.fusion).tokens,
                       integrate_perception(b.scene, b.objects, m.fusion).tokens) < kTol);
    const auto fa = fuse_all(a.scene, a.objects, text, m.fusion, Toggles{});
    const auto fb = fuse_all(b.scene, b.objects, text, m.fusion, Toggles{});
    CHECK(max_abs_diff(fa.shared_out, fb.shared_out) < kTol);
    CHECK(max_abs_diff(fa.m, fb.m) < kTol);
  }
}

TEST_CASE("masked padding rows are neutral") {
  const auto cfg = small_config();
  const auto m = Model::make(cfg, 6);
  Rng rng(33);
  const auto text = Tensor::randn({4, cfg.d_model}, rng);
  for (std::size_t k = 1; k < cfg.k_max; ++k) {
    const auto set = detections(cfg, "img_pad", k);
    const auto padded = inputs(m, set, cfg.k_max);
    const auto exact = inputs(m, set, k);
    CHECK(max_abs_diff(shared_query_fusion(m.fusion.shared_queries, padded.scene, padded.objects, m.fusion),
                       shared_query_fusion(m.fusion.shared_queries, exact.scene, exact.objects, m.fusion)) < kTol);
    const auto ip_pad = integrate_perception(padded.scene, padded.objects, m.fusion);
    const auto ip_exact = integrate_perception(exact.scene, exact.objects, m.fusion);
    CHECK(max_abs_diff(leading_rows(ip_pad.tokens, cfg.n_patches + k), ip_exact.tokens) < kTol);
    const auto fp = fuse_all(padded.scene, padded.objects, text, m.fusion, Toggles{});
    const auto fe = fuse_all(exact.scene, exact.objects, text, m.fusion, Toggles{});
    CHECK(max_abs_diff(fp.shared_out, fe.shared_out) < kTol);
    CHECK(max_abs_diff(fp.m, fe.m) < kTol);
  }
}

TEST_CASE("no detections: the object attention sublayer passes through") {
  const auto cfg = small_config();
  const auto m = Model::make(cfg, 8);
  const auto in = inputs(m, {"img_empty", {}}, cfg.k_max);
  const auto out = shared_query_fusion(m.fusion.shared_queries, in.scene, in.objects, m.fusion);
  const auto& blk = m.fusion.object_block;
  const auto h = m.fusion.scene_block(m.fusion.shared_queries, in.scene.tokens);
  const auto expect = add(h, blk.mlp(layer_norm(h, blk.ln2.gain, blk.ln2.bias)));
  CHECK(max_abs_diff(out, expect) < kTol);
  // The scene half of the integrated tokens only sees scene keys.
  const auto ip = integrate_perception(in.scene, in.objects, m.fusion);
  const auto scene_only = m.fusion.integrate_block(
      add(in.scene.tokens, slice(m.fusion.modality_embed, 0, 0, 1)));
  CHECK(max_abs_diff(leading_rows(ip.tokens, cfg.n_patches), scene_only) < kTol);
}

TEST_CASE("cross-modal attention with a single key") {
  const auto cfg = small_config();
  const auto m = Model::make(cfg, 9);
  Rng rng(4);
  const auto key = Tensor::randn({1, cfg.d_model}, rng);
  const auto text = Tensor::randn({5, cfg.d_model}, rng);
  const auto out = cross_modal_attention(key, text, m.fusion);
  CHECK(out.shape() == text.shape());
  const auto& blk = m.fusion.text_block;
  // One key: every query row receives the same attended value.
  const auto value = blk.attn.o(blk.attn.v(layer_norm(key, blk.ln_kv.gain, blk.ln_kv.bias)));
  const auto y = add(text, value);
  const auto expect = add(y, blk.mlp(layer_norm(y, blk.ln2.gain, blk.ln2.bias)));
  CHECK(max_abs_diff(out, expect) < kTol);
  CHECK(cross_modal_attention(key, Tensor::zeros({0, cfg.d_model}), m.fusion).shape() ==
        Shape{0, cfg.d_model});
}

TEST_CASE("visual forward toggle and determinism") {
  const auto cfg = small_config();
  const auto m = Model::make(cfg, 10);
  Rng rng(5);
  const auto text = Tensor::randn({3, cfg.d_model}, rng);
  const auto in = inputs(m, detections(cfg, "img", 2), cfg.k_max);
  const auto a = fuse_all(in.scene, in.objects, text, m.fusion, Toggles{});
  const auto b = fuse_all(in.scene, in.objects, text, m.fusion, Toggles{});
  CHECK(bitwise_equal(a.shared_out, b.shared_out));
  CHECK(bitwise_equal(a.m, b.m));
  const auto off = fuse_all(in.scene, in.objects, text, m.fusion, Toggles{false, true});
  for (double v : off.shared_out.data()) CHECK(v == 0.0);
  CHECK(bitwise_equal(off.m, a.m));
}

TEST_CASE("every fusion parameter receives a gradient") {
  const auto cfg = small_config();
  auto m = Model::make(cfg, 12);
  Rng rng(6);
  const auto text = Tensor::randn({4, cfg.d_model}, rng);
  const auto in = inputs(m, detections(cfg, "img", 3), cfg.k_max);
  const auto fused = fuse_all(in.scene, in.objects, text, m.fusion, Toggles{});
  const auto w1 = Tensor::randn(fused.shared_out.shape(), rng);
  const auto w2 = Tensor::randn(fused.m.shape(), rng);
  backward(add(sum(mul(fused.shared_out, w1)), sum(mul(fused.m, w2))));
  for (const auto& p : m.params.params()) {
    if (p.name.rfind("fusion.", 0) != 0) continue;
    double norm = 0.0;
    for (double g : p.tensor.grad()) norm += g * g;
    INFO(p.name);
    CHECK(norm > 0.0);
  }
}

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


// Small causal decoder with frozen base weights. Every base projection
// carries a trainable per-channel scale and bias (identity at
// initialization), the block norms are trainable, and the top layers mix in a
// zero-gated attention over an adapter prefix built from the fused visual
// context.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mrmllm/fusion.hpp"
#include "mrmllm/tokenizer.hpp"

namespace mrml {

/// y = (x W) * scale + bias with W frozen; bias is empty when bias-free.
struct ScaledLinear {
  Tensor weight;
  Tensor scale;
  Tensor bias;

  static ScaledLinear make(nn::ParamSet& ps, const std::string& name, std::size_t in,
                           std::size_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct Adapter {
  Tensor prefix;  // n_q x d_model
  nn::Linear v_proj;
  nn::Linear p_proj;
  nn::LayerNorm norm;
  Tensor gate;  // one element, zero at initialization
};

struct DecoderLayer {
  nn::LayerNorm ln1;
  ScaledLinear q, k, v, o;
  nn::LayerNorm ln2;
  ScaledLinear fc1, fc2;
  std::optional<Adapter> adapter;
};

struct LanguageModel {
  Tensor tok_embed;  // vocab x d_model
  Tensor pos_embed;  // max_seq x d_model
  std::vector<DecoderLayer> layers;
  nn::LayerNorm final_norm;
  ScaledLinear head;
  std::size_t heads = 1;
  std::size_t max_seq = 0;

  static LanguageModel make(nn::ParamSet& ps, const std::string& name,
                            const ModelConfig& cfg, Rng& rng);
};

struct PromptBundle {
  tok::TokenSeq prompt_tokens;
  tok::TokenSeq target_tokens;
  /// One flag per position of prompt + target; true exactly on targets.
  std::vector<unsigned char> loss_mask;

  tok::TokenSeq sequence() const;
};

/// "<bos> Instruction: <question> <sep> <template> <sep> Response:". With
/// perception_forward off the template and its separator are left out.
std::string prompt_text(const perception::DetectionSet& set, const std::string& question,
                        bool perception_forward, std::size_t max_objects);

/// Tokenized prompt with an empty target. Throws when longer than max_seq.
PromptBundle build_prompt(const perception::DetectionSet& set, const std::string& question,
                          const tok::Vocab& vocab, const ModelConfig& cfg,
                          const Toggles& toggles);

/// Appends " <answer>" followed by <eos> as the target.
void attach_target(PromptBundle& bundle, const std::string& answer, const tok::Vocab& vocab,
                   std::size_t max_seq);

/// Token plus positional embeddings of `tokens`.
Tensor text_embedding(const tok::TokenSeq& tokens, const LanguageModel& lm);

/// Logits (len x vocab). Without `fused` the adapters are bypassed, which is
/// the base language model.
Tensor lm_forward(const tok::TokenSeq& tokens, const FusedContext* fused,
                  const LanguageModel& lm);

/// Mean next-token cross entropy over target positions.
Tensor lm_loss(const Tensor& logits, const PromptBundle& bundle);

/// Argmax decoding (ties to the lowest id) until <eos>, max_new tokens or
/// the context limit. Returns the continuation with one leading space
/// removed.
std::string generate_greedy(const tok::TokenSeq& prompt, const FusedContext* fused,
                            const LanguageModel& lm, const tok::Vocab& vocab,
                            std::size_t max_new);

}  // namespace mrml

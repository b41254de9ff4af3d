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


#include "mrmllm/language_model.hpp"

#include <algorithm>
#include <cmath>

#include "mrmllm/error.hpp"

namespace mrml {

ScaledLinear ScaledLinear::make(nn::ParamSet& ps, const std::string& name, std::size_t in,
                                std::size_t out, Rng& rng, bool with_bias) {
  ScaledLinear l;
  l.weight = ps.add(name + ".weight",
                    Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))), true);
  l.scale = ps.add(name + ".scale", Tensor::full({out}, 1.0), false);
  if (with_bias) l.bias = ps.add(name + ".bias", Tensor::zeros({out}), false);
  return l;
}

Tensor ScaledLinear::operator()(const Tensor& x) const {
  auto y = mul(matmul(x, weight), scale);
  return bias.numel() ? add(y, bias) : y;
}

LanguageModel LanguageModel::make(nn::ParamSet& ps, const std::string& name,
                                  const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.vocab_size == 0) throw InvalidArgument("language model: vocab_size must be positive");
  const auto d = cfg.d_model;
  LanguageModel lm;
  lm.heads = cfg.heads;
  lm.max_seq = cfg.max_seq;
  lm.tok_embed = ps.add(name + ".tok_embed", Tensor::randn({cfg.vocab_size, d}, rng), true);
  lm.pos_embed = ps.add(name + ".pos_embed", Tensor::randn({cfg.max_seq, d}, rng, 0.5), true);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto p = name + ".layer" + std::to_string(l);
    DecoderLayer layer;
    layer.ln1 = nn::LayerNorm::make(ps, p + ".ln1", d);
    layer.q = ScaledLinear::make(ps, p + ".attn.q", d, d, rng);
    layer.k = ScaledLinear::make(ps, p + ".attn.k", d, d, rng, false);
    layer.v = ScaledLinear::make(ps, p + ".attn.v", d, d, rng);
    layer.o = ScaledLinear::make(ps, p + ".attn.o", d, d, rng);
    layer.ln2 = nn::LayerNorm::make(ps, p + ".ln2", d);
    layer.fc1 = ScaledLinear::make(ps, p + ".mlp.fc1", d, cfg.mlp_hidden(), rng);
    layer.fc2 = ScaledLinear::make(ps, p + ".mlp.fc2", cfg.mlp_hidden(), d, rng);
    if (cfg.is_adapter_layer(l)) {
      Adapter a;
      a.prefix = ps.add(p + ".adapter.prefix", Tensor::randn({cfg.n_q, d}, rng, 0.1), false);
      a.v_proj = nn::Linear::make(ps, p + ".adapter.v_proj", d, d, rng);
      a.p_proj = nn::Linear::make(ps, p + ".adapter.p_proj", d, d, rng);
      a.norm = nn::LayerNorm::make(ps, p + ".adapter.norm", d);
      a.gate = ps.add(p + ".adapter.gate", Tensor::zeros({1}), false);
      layer.adapter = std::move(a);
    }
    lm.layers.push_back(std::move(layer));
  }
  lm.final_norm = nn::LayerNorm::make(ps, name + ".final_norm", d, true);
  lm.head = ScaledLinear::make(ps, name + ".head", d, cfg.vocab_size, rng);
  return lm;
}

tok::TokenSeq PromptBundle::sequence() const {
  auto seq = prompt_tokens;
  seq.insert(seq.end(), target_tokens.begin(), target_tokens.end());
  return seq;
}

std::string prompt_text(const perception::DetectionSet& set, const std::string& question,
                        bool perception_forward, std::size_t max_objects) {
  std::string text = "<bos> Instruction: " + question + " <sep> ";
  if (perception_forward) text += perception::render_template(set, max_objects) + " <sep> ";
  return text + "Response:";
}

PromptBundle build_prompt(const perception::DetectionSet& set, const std::string& question,
                          const tok::Vocab& vocab, const ModelConfig& cfg,
                          const Toggles& toggles) {
  PromptBundle b;
  auto& ids = b.prompt_tokens;
  auto append = [&](std::string_view text) {
    const auto part = tok::encode(text, vocab);
    ids.insert(ids.end(), part.begin(), part.end());
  };
  ids.push_back(tok::kBos);
  append(" Instruction: " + question + " ");
  ids.push_back(tok::kSep);
  if (toggles.perception_forward) {
    append(" " + perception::render_template(set, cfg.max_objects) + " ");
    ids.push_back(tok::kSep);
  }
  append(" Response:");
  if (ids.size() > cfg.max_seq) {
    throw InvalidArgument("build_prompt: prompt for image '" + set.image_id + "' has " +
                          std::to_string(ids.size()) + " tokens, max_seq is " +
                          std::to_string(cfg.max_seq));
  }
  b.loss_mask.assign(ids.size(), 0);
  return b;
}

void attach_target(PromptBundle& bundle, const std::string& answer, const tok::Vocab& vocab,
                   std::size_t max_seq) {
  bundle.target_tokens = tok::encode(" " + answer, vocab);
  bundle.target_tokens.push_back(tok::kEos);
  const auto total = bundle.prompt_tokens.size() + bundle.target_tokens.size();
  if (total > max_seq) {
    throw InvalidArgument("attach_target: prompt plus answer is " + std::to_string(total) +
                          " tokens, max_seq is " + std::to_string(max_seq));
  }
  bundle.loss_mask.assign(bundle.prompt_tokens.size(), 0);
  bundle.loss_mask.resize(total, 1);
}

Tensor text_embedding(const tok::TokenSeq& tokens, const LanguageModel& lm) {
  if (tokens.size() > lm.max_seq) {
    throw InvalidArgument("text_embedding: " + std::to_string(tokens.size()) +
                          " tokens exceed max_seq " + std::to_string(lm.max_seq));
  }
  const auto d = lm.tok_embed.cols();
  if (tokens.empty()) return Tensor::zeros({0, d});
  return add(embedding(lm.tok_embed, tokens), slice(lm.pos_embed, 0, 0, tokens.size()));
}

Tensor lm_forward(const tok::TokenSeq& tokens, const FusedContext* fused,
                  const LanguageModel& lm) {
  if (tokens.empty()) throw InvalidArgument("lm_forward: empty token sequence");
  auto x = text_embedding(tokens, lm);
  Tensor pooled;
  if (fused) pooled = mean_rows(fused->m);
  for (const auto& layer : lm.layers) {
    const auto h = layer.ln1(x);
    const auto q = layer.q(h);
    auto attn = cross_attention(q, layer.k(h), layer.v(h), {.heads = lm.heads, .causal = true});
    if (fused && layer.adapter) {
      const auto& a = *layer.adapter;
      auto prefix = add(a.prefix, a.v_proj(fused->shared_out));
      prefix = a.norm(add(prefix, a.p_proj(pooled)));
      const auto side = cross_attention(q, layer.k(prefix), layer.v(prefix), {.heads = lm.heads});
      attn = add(attn, scale(side, a.gate));
    }
    x = add(x, layer.o(attn));
    x = add(x, layer.fc2(gelu(layer.fc1(layer.ln2(x)))));
  }
  return lm.head(lm.final_norm(x));
}

Tensor lm_loss(const Tensor& logits, const PromptBundle& bundle) {
  const auto n = bundle.loss_mask.size();
  if (logits.ndim() != 2 || logits.rows() != n) {
    throw InvalidArgument("lm_loss: logits " + shape_str(logits.shape()) + " for a sequence of " +
                          std::to_string(n) + " tokens");
  }
  const auto seq = bundle.sequence();
  std::vector<int> targets(n, -1);
  bool any = false;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (bundle.loss_mask[t + 1]) {
      targets[t] = seq[t + 1];
      any = true;
    }
  }
  if (!any) throw InvalidArgument("lm_loss: no target positions");
  return cross_entropy(logits, targets);
}

std::string generate_greedy(const tok::TokenSeq& prompt, const FusedContext* fused,
                            const LanguageModel& lm, const tok::Vocab& vocab,
                            std::size_t max_new) {
  if (prompt.empty()) throw InvalidArgument("generate_greedy: empty prompt");
  NoGradGuard no_grad;
  auto tokens = prompt;
  tok::TokenSeq produced;
  while (produced.size() < max_new && tokens.size() < lm.max_seq) {
    const auto logits = lm_forward(tokens, fused, lm);
    const auto v = logits.cols();
    const auto row = logits.data().subspan((logits.rows() - 1) * v, v);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == tok::kEos) break;
    produced.push_back(best);
    tokens.push_back(best);
  }
  auto text = tok::decode(produced, vocab);
  if (!text.empty() && text.front() == ' ') text.erase(0, 1);
  return text;
}

}  // namespace mrml

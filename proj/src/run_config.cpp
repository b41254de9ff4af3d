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


#include "mrmllm/run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "mrmllm/error.hpp"
#include "mrmllm/tokenizer.hpp"

namespace mrml {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || p != end) {
    throw InvalidArgument("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
    throw InvalidArgument("config key '" + key + "': expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw InvalidArgument("config key '" + key + "': expected on or off, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string real_text(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Entry {
  const char* name;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MRML_UINT(key, field, help)                                                     \
  Entry {                                                                               \
    key, help, [](RunConfig& c, const std::string& v) {                                 \
      c.field = static_cast<decltype(c.field)>(parse_uint(key, v));                     \
    },                                                                                  \
        [](const RunConfig& c) { return std::to_string(c.field); }                      \
  }
#define MRML_REAL(key, field, help)                                                     \
  Entry {                                                                               \
    key, help, [](RunConfig& c, const std::string& v) { c.field = parse_real(key, v); }, \
        [](const RunConfig& c) { return real_text(c.field); }                           \
  }
#define MRML_SWITCH(key, field, help)                                                   \
  Entry {                                                                               \
    key, help, [](RunConfig& c, const std::string& v) { c.field = parse_switch(key, v); }, \
        [](const RunConfig& c) { return std::string(c.field ? "on" : "off"); }          \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      MRML_UINT("seed", train.seed, "seed for initialization and batch order"),
      MRML_UINT("steps", train.steps, "optimizer steps"),
      MRML_UINT("batch_size", train.batch_size, "samples per step"),
      MRML_REAL("learning_rate", train.learning_rate, "AdamW learning rate"),
      MRML_REAL("weight_decay", train.weight_decay, "AdamW decoupled weight decay"),
      MRML_REAL("beta1", train.beta1, "AdamW first-moment decay"),
      MRML_REAL("beta2", train.beta2, "AdamW second-moment decay"),
      MRML_REAL("adam_eps", train.adam_eps, "AdamW denominator epsilon"),
      MRML_REAL("clip_norm", train.clip_norm, "global gradient norm limit"),
      MRML_UINT("eval_every", train.eval_every, "full-data loss interval in steps, 0 = never"),
      MRML_REAL("stop_loss", train.stop_loss, "stop once the full-data loss is below this, 0 = never"),
      MRML_UINT("vocab_max", train.vocab_max, "vocabulary size limit"),
      MRML_SWITCH("visual_forward", train.toggles.visual_forward, "shared-query fusion path"),
      MRML_SWITCH("perception_forward", train.toggles.perception_forward,
                  "detection template in the prompt"),
      MRML_UINT("d_model", train.model.d_model, "model width"),
      MRML_UINT("heads", train.model.heads, "attention heads"),
      MRML_UINT("mlp_ratio", train.model.mlp_ratio, "MLP hidden width / d_model"),
      MRML_UINT("n_patches", train.model.n_patches, "synthetic scene patches"),
      MRML_UINT("d_patch", train.model.d_patch, "synthetic patch feature width"),
      MRML_UINT("encoder_blocks", train.model.encoder_blocks, "scene encoder blocks"),
      MRML_UINT("k_max", train.model.k_max, "object token slots"),
      MRML_UINT("d_p", train.model.d_p, "detection descriptor width"),
      MRML_UINT("n_q", train.model.n_q, "shared queries"),
      MRML_UINT("adapter_len", adapter_len, "adapter prefix length (must equal n_q)"),
      MRML_UINT("n_layers", train.model.n_layers, "language model layers"),
      MRML_UINT("max_seq", train.model.max_seq, "context length"),
      MRML_UINT("adapter_layers", train.model.adapter_layers, "top layers with the gated adapter"),
      MRML_UINT("max_objects", train.model.max_objects, "detections rendered into the prompt"),
      MRML_UINT("image_seed", train.model.image_seed, "seed of the synthetic scene features"),
      Entry{"classes", "comma-separated class table",
            [](RunConfig& c, const std::string& v) {
              std::vector<std::string> names;
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ',')) names.push_back(trim(item));
              perception::ClassTable check(names);
              c.classes = std::move(names);
            },
            [](const RunConfig& c) {
              std::string out;
              for (const auto& n : c.classes) out += (out.empty() ? "" : ",") + n;
              return out;
            }},
      MRML_REAL("refine_fraction", refine_fraction, "share of refinement samples in generated data"),
      MRML_UINT("max_new_tokens", max_new_tokens, "generation limit"),
  };
  return table;
}

#undef MRML_UINT
#undef MRML_REAL
#undef MRML_SWITCH

const Entry& entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (key == e.name) return e;
  }
  throw InvalidArgument("unknown config key '" + key + "'");
}

}  // namespace

std::vector<ConfigKey> RunConfig::keys() {
  const RunConfig defaults;
  std::vector<ConfigKey> out;
  for (const auto& e : entries()) out.push_back({e.name, e.get(defaults), e.help});
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  entry(key).set(*this, trim(value));
}

std::string RunConfig::get(const std::string& key) const { return entry(key).get(*this); }

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = path.string() + ":" + std::to_string(number);
    if (eq == std::string::npos) throw InvalidArgument(where + ": expected key = value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + ": " + e.what());
    }
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig c;
  c.apply_file(path);
  return c;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.name) + " = " + e.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  if (adapter_len != train.model.n_q) {
    throw InvalidArgument("config: adapter_len " + std::to_string(adapter_len) +
                          " must equal n_q " + std::to_string(train.model.n_q));
  }
  if (!(refine_fraction >= 0.0 && refine_fraction <= 1.0)) {
    throw InvalidArgument("config: refine_fraction must be in [0, 1]");
  }
  if (train.vocab_max < tok::base_vocab_size()) {
    throw InvalidArgument("config: vocab_max must be at least " +
                          std::to_string(tok::base_vocab_size()));
  }
  class_table();
  auto t = train;
  t.model = model_config();
  t.validate();
}

perception::ClassTable RunConfig::class_table() const { return perception::ClassTable(classes); }

DatasetConfig RunConfig::dataset_config() const {
  DatasetConfig d;
  d.refine_fraction = refine_fraction;
  d.classes = class_table();
  d.descriptor_dim = train.model.d_p;
  return d;
}

ModelConfig RunConfig::model_config() const {
  auto m = train.model;
  m.n_classes = classes.size();
  return m;
}

}  // namespace mrml

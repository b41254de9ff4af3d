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


#include "mrmllm/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <unordered_map>

#include "mrmllm/error.hpp"

namespace mrml {

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("train config: batch_size must be positive");
  if (!(clip_norm > 0.0)) throw InvalidArgument("train config: clip_norm must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train config: learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("train config: weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidArgument("train config: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("train config: beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw InvalidArgument("train config: adam_eps must be positive");
  if (!(stop_loss >= 0.0)) throw InvalidArgument("train config: stop_loss must be non-negative");
  model.validate();
}

AdamW::AdamW(std::vector<Tensor> params, const TrainConfig& cfg)
    : lr_(cfg.learning_rate), wd_(cfg.weight_decay), b1_(cfg.beta1), b2_(cfg.beta2),
      eps_(cfg.adam_eps) {
  for (auto& p : params) {
    Slot s;
    s.m.assign(p.numel(), 0.0);
    s.v.assign(p.numel(), 0.0);
    s.param = std::move(p);
    slots_.push_back(std::move(s));
  }
}

double AdamW::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    for (double g : s.param.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / (norm + 1e-6);
    for (auto& s : slots_) {
      if (!s.param.has_grad()) continue;
      for (double& g : s.param.mutable_grad()) g *= f;
    }
  }
  return norm;
}

void AdamW::step() {
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    ++s.t;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(s.t));
    auto p = s.param.mutable_data();
    const auto g = s.param.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= 1.0 - lr_ * wd_;
      s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * g[i];
      s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * g[i] * g[i];
      p[i] -= lr_ * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps_);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.clear_grad();
}

std::vector<std::string> training_corpus(const std::vector<InstructionSample>& samples,
                                         std::size_t max_objects) {
  std::vector<std::string> lines;
  for (const auto& s : samples) {
    lines.push_back(prompt_text(s.detections, s.question, true, max_objects));
    lines.push_back(s.answer);
  }
  return lines;
}

std::vector<PreparedSample> prepare_samples(const std::vector<InstructionSample>& samples,
                                            const tok::Vocab& vocab, const ModelConfig& cfg,
                                            const Toggles& toggles) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    PreparedSample p;
    p.sample = &s;
    p.bundle = build_prompt(s.detections, s.question, vocab, cfg, toggles);
    attach_target(p.bundle, s.answer, vocab, cfg.max_seq);
    p.sequence = p.bundle.sequence();
    out.push_back(std::move(p));
  }
  return out;
}

Tensor sample_loss(const Model& model, const PreparedSample& p, const Toggles& toggles) {
  const auto fused = model_context(model, p.sample->image_id, p.sample->detections,
                                   p.bundle.prompt_tokens, toggles);
  return lm_loss(lm_forward(p.sequence, &fused, model.lm), p.bundle);
}

double dataset_loss(const Model& model, const std::vector<PreparedSample>& prepared,
                    const Toggles& toggles) {
  if (prepared.empty()) throw InvalidArgument("dataset_loss: no samples");
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& p : prepared) total += sample_loss(model, p, toggles).item();
  return total / static_cast<double>(prepared.size());
}

TrainResult train(const TrainConfig& cfg, const std::vector<InstructionSample>& data,
                  const std::function<void(const LossRecord&)>& on_step) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("train: empty dataset");
  auto vocab = tok::build_vocab(training_corpus(data, cfg.model.max_objects), cfg.vocab_max);
  ModelConfig mc = cfg.model;
  mc.vocab_size = vocab.size();
  TrainResult result{Model::make(mc, cfg.seed), std::move(vocab), {}, 0, -1.0};
  auto& model = result.model;
  const auto prepared = prepare_samples(data, result.vocab, mc, cfg.toggles);

  AdamW opt(model.params.trainable(), cfg);
  std::uint64_t order_state = cfg.seed ^ 0x0bad5eedULL;
  Rng order_rng(splitmix64(order_state));
  std::vector<std::size_t> order(prepared.size());
  std::size_t cursor = order.size();
  auto next_index = [&] {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    opt.zero_grad();
    Tensor total;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      auto l = sample_loss(model, prepared[next_index()], cfg.toggles);
      total = b == 0 ? l : add(total, l);
    }
    const auto loss = scale(total, 1.0 / static_cast<double>(cfg.batch_size));
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw RuntimeError("train: non-finite loss at step " + std::to_string(step));
    }
    backward(loss);
    opt.clip_grad_norm(cfg.clip_norm);
    opt.step();
    result.log.push_back({step, value});
    result.steps_run = step;
    if (on_step) on_step(result.log.back());
    if (cfg.eval_every && step % cfg.eval_every == 0) {
      result.last_eval_loss = dataset_loss(model, prepared, cfg.toggles);
      if (cfg.stop_loss > 0.0 && result.last_eval_loss < cfg.stop_loss) break;
    }
  }
  opt.zero_grad();
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'M', 'R', 'M', 'L'};
constexpr const char* kStepName = "meta.step";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <class T>
  T le(const char* field) {
    need(sizeof(T), field);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  double f64(const char* field) { return std::bit_cast<double>(le<std::uint64_t>(field)); }
  std::string bytes(std::size_t n, const char* field) {
    need(n, field);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t offset() const { return pos_; }
  std::size_t size() const { return data_.size(); }

 private:
  void need(std::size_t n, const char* field) {
    if (data_.size() - pos_ < n) {
      throw FormatError("checkpoint " + path_ + " is truncated at offset " + std::to_string(pos_) +
                        " while reading " + field);
    }
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const Model& model, std::uint64_t step) {
  Checkpoint c;
  c.step = step;
  for (const auto& p : model.params.params()) c.tensors.push_back({p.name, p.frozen, p.tensor.clone()});
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(Checkpoint::kVersion);
  const auto count = static_cast<std::uint32_t>(ckpt.tensors.size() + 1);
  w.le<std::uint32_t>(count);
  auto put = [&](const std::string& name, bool frozen, const Tensor& t) {
    if (name.size() > 0xffff) throw InvalidArgument("checkpoint: tensor name too long: " + name);
    if (t.ndim() > 0xff) throw InvalidArgument("checkpoint: too many dimensions in " + name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(frozen ? 1 : 0);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.ndim()));
    for (auto d : t.shape()) {
      if (d > 0xffffffffULL) throw InvalidArgument("checkpoint: dimension too large in " + name);
      w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    for (double v : t.data()) w.f64(v);
  };
  for (const auto& t : ckpt.tensors) {
    if (t.name == kStepName) throw InvalidArgument("checkpoint: reserved tensor name " + t.name);
    put(t.name, t.frozen, t.value);
  }
  put(kStepName, true, Tensor::scalar(static_cast<double>(ckpt.step)));
  w.le<std::uint32_t>(count);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  if (r.size() < 4 || r.bytes(4, "magic") != std::string(kMagic, 4)) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic bytes)");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != Checkpoint::kVersion) {
    throw FormatError("checkpoint " + path.string() + ": unsupported version " +
                      std::to_string(version) + " (expected " +
                      std::to_string(Checkpoint::kVersion) + ")");
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  Checkpoint c;
  bool saw_step = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.le<std::uint16_t>("name length");
    auto name = r.bytes(len, "tensor name");
    const auto frozen = r.le<std::uint8_t>("frozen flag");
    const auto ndim = r.le<std::uint8_t>("ndim");
    Shape shape;
    for (std::uint8_t d = 0; d < ndim; ++d) shape.push_back(r.le<std::uint32_t>("dimension"));
    const auto n = shape_numel(shape);
    if (n > (r.size() - r.offset()) / 8) {
      throw FormatError("checkpoint " + path.string() + " is truncated at offset " +
                        std::to_string(r.offset()) + " while reading payload of " + name);
    }
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64("payload");
    if (name == kStepName) {
      if (n != 1) throw FormatError("checkpoint " + path.string() + ": malformed " + name);
      c.step = static_cast<std::uint64_t>(values[0]);
      saw_step = true;
      continue;
    }
    c.tensors.push_back({std::move(name), frozen != 0, Tensor::from(std::move(shape), std::move(values))});
  }
  const auto trailer = r.le<std::uint32_t>("trailing count");
  if (trailer != count) {
    throw FormatError("checkpoint " + path.string() + ": trailing count " + std::to_string(trailer) +
                      " does not match header count " + std::to_string(count));
  }
  if (r.offset() != r.size()) {
    throw FormatError("checkpoint " + path.string() + ": unexpected bytes after offset " +
                      std::to_string(r.offset()));
  }
  if (!saw_step) throw FormatError("checkpoint " + path.string() + ": missing " + kStepName);
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, Model& model) {
  std::unordered_map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name.emplace(t.name, &t);
  if (by_name.size() != model.params.params().size()) {
    throw FormatError("checkpoint holds " + std::to_string(by_name.size()) +
                      " tensors, the configured model has " +
                      std::to_string(model.params.params().size()));
  }
  for (auto& p : model.params.params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing tensor " + p.name);
    const auto& t = *it->second;
    if (t.value.shape() != p.tensor.shape()) {
      throw FormatError("checkpoint tensor " + p.name + " has shape " + shape_str(t.value.shape()) +
                        ", the configured model expects " + shape_str(p.tensor.shape()));
    }
    if (t.frozen != p.frozen) {
      throw FormatError("checkpoint tensor " + p.name + " has a different frozen flag");
    }
  }
  for (auto& p : model.params.params()) {
    const auto src = by_name.at(p.name)->value.data();
    std::copy(src.begin(), src.end(), p.tensor.mutable_data().begin());
  }
}

}  // namespace mrml

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


// Instruction tuning of the trainable set with AdamW, and the binary
// checkpoint format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mrmllm/dataset.hpp"
#include "mrmllm/model.hpp"

namespace mrml {

struct TrainConfig {
  std::uint64_t seed = 7;
  std::size_t steps = 3000;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  /// Full-data loss is measured every eval_every steps (0 disables); training
  /// stops early once it falls below stop_loss (0 disables).
  std::size_t eval_every = 0;
  double stop_loss = 0.0;
  std::size_t vocab_max = 512;
  Toggles toggles;
  ModelConfig model;

  void validate() const;
};

/// Decoupled weight decay Adam. Tensors whose gradient buffer is absent are
/// skipped entirely for that step.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, const TrainConfig& cfg);
  /// Scales all gradients so their joint L2 norm is at most max_norm;
  /// returns the norm before scaling.
  double clip_grad_norm(double max_norm);
  void step();
  void zero_grad();

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
    std::uint64_t t = 0;
  };
  std::vector<Slot> slots_;
  double lr_, wd_, b1_, b2_, eps_;
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
};

/// Prompt + target tokens for every sample, as fed to the model.
struct PreparedSample {
  const InstructionSample* sample = nullptr;
  PromptBundle bundle;
  tok::TokenSeq sequence;
};

std::vector<PreparedSample> prepare_samples(const std::vector<InstructionSample>& samples,
                                            const tok::Vocab& vocab, const ModelConfig& cfg,
                                            const Toggles& toggles);

/// Corpus lines the vocabulary is built from: every prompt and answer.
std::vector<std::string> training_corpus(const std::vector<InstructionSample>& samples,
                                         std::size_t max_objects);

Tensor sample_loss(const Model& model, const PreparedSample& p, const Toggles& toggles);
/// Mean per-sample loss without recording a graph.
double dataset_loss(const Model& model, const std::vector<PreparedSample>& prepared,
                    const Toggles& toggles);

struct TrainResult {
  Model model;
  tok::Vocab vocab;
  std::vector<LossRecord> log;
  std::size_t steps_run = 0;
  /// Last full-data loss when eval_every is set, else negative.
  double last_eval_loss = -1.0;
};

/// Builds the vocabulary and model from (data, cfg.seed), then runs AdamW on
/// the trainable parameters with batches drawn from a seeded reshuffling
/// permutation. Throws RuntimeError naming the step on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const std::vector<InstructionSample>& data,
                  const std::function<void(const LossRecord&)>& on_step = {});

struct CheckpointTensor {
  std::string name;
  bool frozen = false;
  Tensor value;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::vector<CheckpointTensor> tensors;
  std::uint64_t step = 0;
};

Checkpoint make_checkpoint(const Model& model, std::uint64_t step);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Rejects bad magic ("not a checkpoint"), unknown versions and truncation
/// (naming the byte offset).
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Copies tensors into `model`, which must have the same names, shapes and
/// frozen flags.
void apply_checkpoint(const Checkpoint& ckpt, Model& model);

}  // namespace mrml

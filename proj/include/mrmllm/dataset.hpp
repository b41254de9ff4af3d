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


// Instruction-tuning samples: box refinement and object-presence probes built
// from the mock detector, plus their JSON persistence.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mrmllm/perception.hpp"

namespace mrml {

enum class TaskTag { kRefine, kVqaYesNo, kCaptionToy };

std::string to_string(TaskTag tag);
/// Accepts "refine", "vqa_yesno", "caption_toy".
TaskTag task_tag_from_string(const std::string& text);

struct InstructionSample {
  std::string id;
  std::string image_id;
  std::string question;
  std::string answer;
  perception::DetectionSet detections;
  TaskTag task_tag = TaskTag::kRefine;

  bool operator==(const InstructionSample&) const = default;
};

inline constexpr const char* kRefineQuestion = "Refine the detected boxes.";

/// Answer lists every ground-truth object in canonical order as
/// "<name> [x1,y1,x2,y2]" joined by "; " and closed with ".". The prompt
/// carries `noisy`.
InstructionSample format_refinement(const perception::DetectionSet& gt,
                                    const perception::DetectionSet& noisy);

/// "Is there a <probe_class> in the image?" answered "yes" or "no"; the label
/// must agree with the detections.
InstructionSample format_yesno(const perception::DetectionSet& set,
                               const std::string& probe_class, const std::string& label,
                               const perception::ClassTable& classes);

struct DatasetConfig {
  double refine_fraction = 0.7;
  perception::ClassTable classes;
  std::size_t descriptor_dim = 32;
  /// Objects per refinement image are drawn from [1, max_refine_objects].
  std::size_t max_refine_objects = 2;
  /// Objects per probe image are drawn from [0, max_probe_objects].
  std::size_t max_probe_objects = 3;
};

struct Dataset {
  std::vector<InstructionSample> train;
  std::vector<InstructionSample> heldout;
};

/// Deterministic in (n, seed, noise, cfg). Tags follow a seeded shuffle of
/// round(refine_fraction * n) refinement slots; every fifth position of a
/// second seeded shuffle goes to the held-out split.
Dataset make_dataset(std::size_t n, std::uint64_t seed, double noise, const DatasetConfig& cfg);

/// Checks the type invariants (non-empty answer, refine answers parse to at
/// least one box, probe answers agree with detections).
void validate_sample(const InstructionSample& sample, const perception::ClassTable& classes,
                     std::size_t descriptor_dim);

std::string samples_to_json(const std::vector<InstructionSample>& samples);
void save_samples(const std::filesystem::path& path, const std::vector<InstructionSample>& samples);
std::vector<InstructionSample> load_samples(const std::filesystem::path& path,
                                            const perception::ClassTable& classes,
                                            std::size_t descriptor_dim);

/// "<stem>.heldout.json" next to `train_path`.
std::filesystem::path heldout_path(const std::filesystem::path& train_path);

}  // namespace mrml

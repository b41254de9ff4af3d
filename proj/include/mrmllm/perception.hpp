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

// Perception outputs: scored, labeled, normalized boxes with a per-object
// descriptor vector, plus the deterministic mock detector that stands in for a
// real detection head and the textual template fed to the language model.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrmllm/rng.hpp"
#include "mrmllm/tokenizer.hpp"

namespace mrml::perception {

using tok::Box;

class ClassTable {
 public:
  ClassTable();  // default toy road classes
  explicit ClassTable(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::string& name(int id) const;
  /// -1 when absent.
  int id(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

struct Detection {
  int class_id = 0;
  std::string class_name;
  double score = 0.0;
  Box box;
  std::vector<double> descriptor;

  bool operator==(const Detection&) const = default;
};

struct DetectionSet {
  std::string image_id;
  std::vector<Detection> detections;

  bool operator==(const DetectionSet&) const = default;
};

bool valid_box(const Box& b);
/// Descending score, then class id, then lexicographic box.
bool canonical_less(const Detection& a, const Detection& b);
void canonicalize(DetectionSet& set);
DetectionSet canonical(DetectionSet set);

/// Checks box/score ranges, class table membership and descriptor length.
/// `descriptor_dim` 0 means descriptors must be empty (annotation files).
void validate(const DetectionSet& set, const ClassTable& classes,
              std::size_t descriptor_dim, const std::string& where);

nlohmann::ordered_json to_json(const DetectionSet& set);
/// Parses one image object; `where` prefixes error messages.
DetectionSet detection_set_from_json(const nlohmann::ordered_json& j,
                                     const std::string& where);

/// Reads `{"images": [...]}`; sets come back in file order, each
/// canonically sorted and validated.
std::vector<DetectionSet> load_detections(const std::filesystem::path& path,
                                          const ClassTable& classes,
                                          std::size_t descriptor_dim);
void save_detections(const std::filesystem::path& path,
                     const std::vector<DetectionSet>& sets);

/// Box descriptor: sinusoidal features of each coordinate at periods 1, 0.1
/// and 0.01 (sin/cos pairs), remaining slots filled with generator noise,
/// plus small noise on every feature.
std::vector<double> box_descriptor(const Box& box, std::size_t dim, Rng& rng);

/// Deterministic in (image_id, seed, k): k objects with side lengths in
/// [0.1, 0.5], scores in [0.3, 1.0] and box descriptors.
DetectionSet mock_detector(const std::string& image_id, std::uint64_t seed,
                           std::size_t k, const ClassTable& classes,
                           std::size_t descriptor_dim);

/// Every corner of every box (canonical order; x1, y1, x2, y2) moves by
/// uniform(-noise, noise) drawn from Rng(seed), is clamped to [0, 1] and
/// re-ordered. Scores and descriptors are untouched. noise must be in [0, 0.5].
DetectionSet perturb_boxes(const DetectionSet& set, double noise,
                           std::uint64_t seed);

inline constexpr std::size_t kDefaultMaxObjects = 8;

/// "Detected objects: car [0.100,0.200,0.300,0.400] (0.95); ... ." over the
/// first max_objects detections in canonical order, or
/// "Detected objects: none." when nothing is kept.
std::string render_template(const DetectionSet& set,
                            std::size_t max_objects = kDefaultMaxObjects);

}  // namespace mrml::perception

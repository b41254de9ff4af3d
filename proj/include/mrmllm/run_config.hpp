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


// Flat key=value run configuration covering training, model dimensions,
// ablation toggles, data generation and decoding.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mrmllm/dataset.hpp"
#include "mrmllm/training.hpp"

namespace mrml {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

struct RunConfig {
  TrainConfig train;
  std::vector<std::string> classes = perception::ClassTable().names();
  double refine_fraction = 0.7;
  std::size_t adapter_len = 8;
  std::size_t max_new_tokens = 96;

  /// Every key in file order with its default and a one-line description.
  static std::vector<ConfigKey> keys();

  /// Throws InvalidArgument for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Applies `key = value` lines ('#' starts a comment) on top of the
  /// current values.
  void apply_file(const std::filesystem::path& path);
  static RunConfig load(const std::filesystem::path& path);
  /// Every key, one "key = value" line each; load(to_text()) round-trips.
  std::string to_text() const;

  /// Cross-field checks (adapter_len == n_q, class count, ...).
  void validate() const;

  perception::ClassTable class_table() const;
  DatasetConfig dataset_config() const;
  /// Model dimensions with n_classes taken from the class list.
  ModelConfig model_config() const;
};

}  // namespace mrml

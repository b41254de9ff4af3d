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


// Gradient check of every differentiable op and every model component on
// tiny, randomly initialized configurations.

#pragma once

#include <string>
#include <vector>

#include "mrmllm/model_config.hpp"

namespace mrml {

inline constexpr double kGradSuiteTolerance = 1e-4;

struct GradSuiteEntry {
  std::string name;
  std::size_t seeds = 0;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  double tolerance = kGradSuiteTolerance;

  double worst() const;
  bool passed() const { return worst() < tolerance; }
  std::string to_table() const;
};

/// The configuration the component checks run on.
ModelConfig grad_suite_model_config();

/// Ops and components, each over `seeds` seeds. Component checks perturb
/// every trainable tensor they touch (adapter gates included, set away from
/// zero) plus their tensor inputs.
GradSuiteReport run_grad_suite(std::size_t seeds = 10);

}  // namespace mrml

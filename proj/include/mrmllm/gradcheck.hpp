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

#pragma once

#include <functional>
#include <span>
#include <string>

#include "mrmllm/tensor.hpp"

namespace mrml {

struct GradCheckReport {
  double max_relative_error = 0.0;
  /// Index into the checked tensor list and flat coordinate of the worst case.
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences with step `eps`, perturbing every coordinate of every tensor in
/// `inputs` in place (and restoring it). The error of one coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6 * max(1, |f|)).
/// Never throws on a mismatch; the caller judges the report.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::span<Tensor> inputs, double eps = 1e-5);

/// Single-input convenience form.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps = 1e-5);

}  // namespace mrml

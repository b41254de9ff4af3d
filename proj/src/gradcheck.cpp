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

#include "mrmllm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mrml {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::span<Tensor> inputs, double eps) {
  std::vector<bool> previous(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    previous[t] = inputs[t].requires_grad();
    inputs[t].set_requires_grad(true);
    inputs[t].clear_grad();
  }
  const auto value = f();
  backward(value);
  // Below this size a central difference cannot resolve the derivative in
  // double precision: its rounding error grows like |f| * 1e-16 / eps.
  const double floor = 1e-6 * std::max(1.0, std::abs(value.item()));
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double plus = f().item();
      values[i] = original - eps;
      const double minus = f().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), floor});
      ++report.coordinates;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_tensor = t;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    inputs[t].clear_grad();
    inputs[t].set_requires_grad(previous[t]);
  }
  return report;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps) {
  Tensor inputs[] = {x};
  return grad_check([&] { return f(x); }, inputs, eps).max_relative_error;
}

}  // namespace mrml

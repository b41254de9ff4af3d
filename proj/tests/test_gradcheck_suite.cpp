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


#include <set>
#include <string>

#include "doctest.h"
#include "mrmllm/gradcheck_suite.hpp"

using namespace mrml;

TEST_CASE("gradient suite passes on ten seeds") {
  const auto report = run_grad_suite(10);
  std::set<std::string> names;
  for (const auto& e : report.entries) {
    INFO(e.name, " ", e.max_relative_error);
    names.insert(e.name);
    CHECK(e.seeds == 10);
    CHECK(e.coordinates > 0);
    CHECK(e.max_relative_error < kGradSuiteTolerance);
  }
  for (const char* required :
       {"op.matmul", "op.softmax", "op.layer_norm", "op.gelu", "op.cross_entropy", "op.attention",
        "encode_scene", "project_object_descriptors", "shared_query_fusion", "integrate_perception",
        "cross_modal_attention", "lm_forward", "model_end_to_end"}) {
    CHECK(names.count(required) == 1);
  }
  CHECK(report.passed());
  CHECK(report.to_table().find("op.gelu") != std::string::npos);
}

TEST_CASE("a wrong gradient is caught") {
  GradSuiteReport r;
  r.entries.push_back({"fine", 1, 4, 1e-9});
  CHECK(r.passed());
  r.entries.push_back({"broken", 1, 4, 0.5});
  CHECK(r.worst() == 0.5);
  CHECK(!r.passed());
}

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


#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mrmllm/dataset.hpp"
#include "mrmllm/error.hpp"
#include "support.hpp"

using namespace mrml;
using perception::Box;
using perception::ClassTable;
using perception::Detection;
using perception::DetectionSet;

namespace {

Detection det(const std::string& name, Box b, double score = 1.0) {
  const ClassTable t;
  return {t.id(name), name, score, b, {}};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("task tags") {
  for (auto t : {TaskTag::kRefine, TaskTag::kVqaYesNo, TaskTag::kCaptionToy}) {
    CHECK(task_tag_from_string(to_string(t)) == t);
  }
  CHECK(to_string(TaskTag::kVqaYesNo) == "vqa_yesno");
  CHECK_THROWS_AS(task_tag_from_string("caption"), InvalidArgument);
}

TEST_CASE("format_refinement") {
  const DetectionSet gt{"img", {det("car", {0, 0, 1, 1})}};
  const auto s = format_refinement(gt, gt);
  CHECK(s.question == "Refine the detected boxes.");
  CHECK(s.answer == "car [0.000,0.000,1.000,1.000].");
  CHECK(s.task_tag == TaskTag::kRefine);
  CHECK(s.detections == gt);

  const DetectionSet two{"img", {det("truck", {0.1, 0.1, 0.2, 0.2}, 0.5), det("bus", {0.5, 0.5, 0.9, 0.9}, 0.9)}};
  auto noisy = perception::perturb_boxes(two, 0.05, 3);
  const auto r = format_refinement(two, noisy);
  CHECK(r.answer == "bus [0.500,0.500,0.900,0.900]; truck [0.100,0.100,0.200,0.200].");
  CHECK(r.detections == noisy);

  CHECK_THROWS_AS(format_refinement({"img", {}}, {"img", {}}), InvalidArgument);
  CHECK_THROWS_AS(format_refinement(two, gt), InvalidArgument);
  CHECK_THROWS_AS(format_refinement(gt, {"other", gt.detections}), InvalidArgument);
}

TEST_CASE("format_yesno") {
  const ClassTable classes;
  const DetectionSet set{"img", {det("car", {0, 0, 0.5, 0.5})}};
  const auto yes = format_yesno(set, "car", "yes", classes);
  CHECK(yes.question == "Is there a car in the image?");
  CHECK(yes.answer == "yes");
  CHECK(yes.task_tag == TaskTag::kVqaYesNo);
  CHECK(format_yesno(set, "bus", "no", classes).answer == "no");
  CHECK(format_yesno({"img", {}}, "bus", "no", classes).answer == "no");
  CHECK_THROWS_AS(format_yesno(set, "car", "no", classes), InvalidArgument);
  CHECK_THROWS_AS(format_yesno({"img", {}}, "car", "yes", classes), InvalidArgument);
  CHECK_THROWS_AS(format_yesno(set, "plane", "no", classes), InvalidArgument);
  CHECK_THROWS_AS(format_yesno(set, "car", "maybe", classes), InvalidArgument);
}

TEST_CASE("make_dataset mixture and split") {
  const DatasetConfig cfg;
  const auto d = make_dataset(10, 7, 0.08, cfg);
  std::size_t refine = 0, yesno = 0;
  for (const auto* split : {&d.train, &d.heldout}) {
    for (const auto& s : *split) (s.task_tag == TaskTag::kRefine ? refine : yesno)++;
  }
  CHECK(refine == 7);
  CHECK(yesno == 3);
  CHECK(d.train.size() == 8);
  CHECK(d.heldout.size() == 2);
  CHECK_THROWS_AS(make_dataset(0, 7, 0.08, cfg), InvalidArgument);

  const auto big = make_dataset(500, 3, 0.1, cfg);
  CHECK(big.heldout.size() == 100);
  std::set<std::string> ids;
  for (const auto* split : {&big.train, &big.heldout}) {
    for (const auto& s : *split) CHECK(ids.insert(s.id).second);
  }
  CHECK(ids.size() == 500);
}

TEST_CASE("every generated sample satisfies the sample invariants") {
  const DatasetConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = make_dataset(200, seed, 0.1 * static_cast<double>(seed), cfg);
    for (const auto* split : {&d.train, &d.heldout}) {
      for (const auto& s : *split) {
        INFO(s.id);
        CHECK_NOTHROW(validate_sample(s, cfg.classes, cfg.descriptor_dim));
        CHECK(!s.answer.empty());
        if (s.task_tag == TaskTag::kRefine) {
          const auto boxes = tok::parse_boxes(s.answer);
          CHECK(boxes.size() == s.detections.detections.size());
          for (const auto& b : boxes) CHECK(perception::valid_box(b));
        }
      }
    }
  }
}

TEST_CASE("validate_sample rejects broken samples") {
  const DatasetConfig cfg;
  auto s = make_dataset(10, 1, 0.05, cfg).train.front();
  auto empty = s;
  empty.answer.clear();
  CHECK_THROWS_AS(validate_sample(empty, cfg.classes, cfg.descriptor_dim), FormatError);
  auto wrong_id = s;
  wrong_id.detections.image_id = "elsewhere";
  CHECK_THROWS_AS(validate_sample(wrong_id, cfg.classes, cfg.descriptor_dim), FormatError);
  InstructionSample refine{"x", "img", kRefineQuestion, "no boxes here", {"img", {}}, TaskTag::kRefine};
  CHECK_THROWS_AS(validate_sample(refine, cfg.classes, cfg.descriptor_dim), FormatError);
}

TEST_CASE("dataset files regenerate byte for byte") {
  mrml::testing::TempDir dir("dataset");
  const DatasetConfig cfg;
  const auto a = make_dataset(100, 7, 0.08, cfg);
  const auto b = make_dataset(100, 7, 0.08, cfg);
  save_samples(dir / "a.json", a.train);
  save_samples(dir / "b.json", b.train);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(samples_to_json(a.heldout) == samples_to_json(b.heldout));
  CHECK(samples_to_json(make_dataset(100, 8, 0.08, cfg).train) != samples_to_json(a.train));

  const auto loaded = load_samples(dir / "a.json", cfg.classes, cfg.descriptor_dim);
  CHECK(loaded == a.train);
  CHECK(heldout_path(dir / "a.json") == std::filesystem::path(dir / "a.heldout.json"));
}

TEST_CASE("load_samples errors name the problem") {
  mrml::testing::TempDir dir("dataset_err");
  const DatasetConfig cfg;
  CHECK_THROWS_AS(load_samples(dir / "missing.json", cfg.classes, 32), IoError);
  std::ofstream(dir / "obj.json") << "{}";
  CHECK_THROWS_AS(load_samples(dir / "obj.json", cfg.classes, 32), FormatError);
  std::ofstream(dir / "field.json") << R"([{"id": "s0", "image_id": "img"}])";
  try {
    load_samples(dir / "field.json", cfg.classes, 32);
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("task_tag") != std::string::npos);
  }
  std::ofstream(dir / "tag.json") << R"([{"id": "s0", "image_id": "img", "question": "q", "answer": "yes",
      "task_tag": "other", "detections": {"image_id": "img", "detections": []}}])";
  CHECK_THROWS_AS(load_samples(dir / "tag.json", cfg.classes, 32), FormatError);
  CHECK_THROWS_AS(save_samples("/nonexistent/dir/x.json", {}), IoError);
}

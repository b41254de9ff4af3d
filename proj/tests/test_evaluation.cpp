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


#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "mrmllm/error.hpp"
#include "mrmllm/evaluation.hpp"
#include "mrmllm/rng.hpp"

using namespace mrml;

namespace {

Box random_box(Rng& rng) {
  // Coarse grid so IoU ties and exact threshold hits actually occur.
  auto c = [&] { return static_cast<double>(rng.below(11)) / 10.0; };
  double x1 = c(), x2 = c(), y1 = c(), y2 = c();
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  return {x1, y1, x2, y2};
}

double area(const Box& b) { return (b.x2 - b.x1) * (b.y2 - b.y1); }

double ref_iou(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (w > 0 && h > 0) ? w * h : 0.0;
  const double u = area(a) + area(b) - inter;
  return u > 0 ? inter / u : 0.0;
}

// Enumerates every assignment of predictions to ground truth (or nothing)
// and keeps the one consistent with the greedy rule.
double brute_recall(const std::vector<ScoredBox>& preds, const std::vector<ScoredBox>& gts,
                    double t, std::size_t max_dets) {
  if (gts.empty()) return 1.0;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 1; i < order.size(); ++i) {
    for (std::size_t j = i; j > 0 && preds[order[j]].score > preds[order[j - 1]].score; --j) {
      std::swap(order[j], order[j - 1]);
    }
  }
  if (order.size() > max_dets) order.resize(max_dets);
  const std::size_t options = gts.size() + 1;
  std::size_t total = 1;
  for (std::size_t i = 0; i < order.size(); ++i) total *= options;
  int found = -1;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<std::size_t> pick(order.size());
    std::size_t c = code;
    for (auto& p : pick) {
      p = c % options;
      c /= options;
    }
    std::vector<bool> used(gts.size(), false);
    bool ok = true;
    for (std::size_t k = 0; k < order.size() && ok; ++k) {
      const auto& box = preds[order[k]].box;
      // Best available candidate under the rule, computed from scratch.
      std::size_t best = gts.size();
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || ref_iou(box, gts[g].box) < t) continue;
        if (best == gts.size() || ref_iou(box, gts[g].box) > ref_iou(box, gts[best].box)) best = g;
      }
      if (pick[k] != best) ok = false;
      if (best < gts.size()) used[best] = true;
    }
    if (ok) {
      CHECK(found < 0);
      found = static_cast<int>(std::count_if(pick.begin(), pick.end(), [&](std::size_t p) { return p < gts.size(); }));
    }
  }
  REQUIRE(found >= 0);
  return static_cast<double>(found) / static_cast<double>(gts.size());
}

InstructionSample refine_sample(const std::string& id, std::vector<Box> gt, std::vector<Box> noisy) {
  InstructionSample s;
  s.id = id;
  s.image_id = id;
  s.task_tag = TaskTag::kRefine;
  s.question = kRefineQuestion;
  s.detections.image_id = id;
  std::string answer;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (i) answer += "; ";
    answer += "car " + tok::render_box(gt[i]);
    s.detections.detections.push_back({0, "car", 0.9 - 0.1 * static_cast<double>(i), noisy[i], {}});
  }
  s.answer = answer + ".";
  return s;
}

std::string boxes_text(const std::vector<Box>& boxes) {
  std::string out;
  for (const auto& b : boxes) out += (out.empty() ? "car " : "; car ") + tok::render_box(b);
  return out + ".";
}

}  // namespace

TEST_CASE("iou") {
  CHECK(iou({0, 0, 1, 1}, {0, 0, 1, 1}) == 1.0);
  CHECK(iou({0, 0, 0.5, 1}, {0.25, 0, 0.75, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou({0, 0, 0.2, 0.2}, {0.5, 0.5, 1, 1}) == 0.0);
  CHECK(iou({0, 0, 0.5, 0.5}, {0.5, 0, 1, 0.5}) == 0.0);
  CHECK(iou({0.3, 0.3, 0.3, 0.3}, {0.3, 0.3, 0.3, 0.3}) == 0.0);
  CHECK_THROWS_AS(iou({0.5, 0, 0.2, 1}, {0, 0, 1, 1}), InvalidArgument);
  CHECK_THROWS_AS(iou({0, 0, 1, 1}, {0, 0, 1.5, 1}), InvalidArgument);

  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(ref_iou(a, b)).epsilon(1e-12));
    // Shrinking b toward a's box never lowers the overlap when b contains a.
    const Box hull{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
    if (area(a) > 0) CHECK(iou(a, hull) <= iou(a, a));
  }
}

TEST_CASE("recall thresholds") {
  const auto t = recall_thresholds();
  REQUIRE(t.size() == 10);
  CHECK(t.front() == 0.5);
  CHECK(t.back() == 0.95);
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] - t[i - 1] == doctest::Approx(0.05));
}

TEST_CASE("greedy matching rules") {
  const std::vector<ScoredBox> gts = {{{0, 0, 0.5, 0.5}}, {{0, 0, 0.5, 0.5}}};
  // Equal IoU: the lower index is taken first.
  CHECK(image_recall({{{0, 0, 0.5, 0.5}, 0.9}}, gts, 0.5, 100) == 0.5);
  // A high-scoring poor prediction cannot steal a box below threshold.
  const std::vector<ScoredBox> preds = {{{0.4, 0.4, 1, 1}, 0.99}, {{0, 0, 0.5, 0.5}, 0.5}, {{0, 0, 0.5, 0.5}, 0.4}};
  CHECK(image_recall(preds, gts, 0.5, 100) == 1.0);
  CHECK(image_recall(preds, gts, 0.5, 2) == 0.5);
  CHECK(image_recall(preds, gts, 0.5, 1) == 0.0);
  CHECK(image_recall({}, gts, 0.5, 100) == 0.0);
  CHECK(image_recall(preds, {}, 0.5, 100) == 1.0);
  // Class-aware matching ignores other classes.
  const std::vector<ScoredBox> typed_gt = {{{0, 0, 0.5, 0.5}, 1.0, 1}};
  CHECK(image_recall({{{0, 0, 0.5, 0.5}, 1.0, 2}}, typed_gt, 0.5, 100, true) == 0.0);
  CHECK(image_recall({{{0, 0, 0.5, 0.5}, 1.0, 2}}, typed_gt, 0.5, 100, false) == 1.0);
}

TEST_CASE("average recall equals the brute-force matcher") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t images = 1 + rng.below(3);
    std::vector<std::vector<ScoredBox>> preds(images), gts(images);
    for (std::size_t i = 0; i < images; ++i) {
      const auto np = rng.below(4), ng = rng.below(4);
      for (std::size_t k = 0; k < np; ++k) {
        preds[i].push_back({random_box(rng), static_cast<double>(rng.below(3)) / 2.0, -1});
      }
      for (std::size_t k = 0; k < ng; ++k) gts[i].push_back({random_box(rng), 1.0, -1});
    }
    if (std::all_of(gts.begin(), gts.end(), [](const auto& g) { return g.empty(); })) {
      CHECK_THROWS_AS(average_recall(preds, gts), InvalidArgument);
      continue;
    }
    double mar = 0.0, ar10 = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < images; ++i) {
      if (gts[i].empty()) continue;
      double a = 0.0, b = 0.0;
      for (int k = 0; k < 10; ++k) {
        const double t = (50.0 + 5.0 * k) / 100.0;
        a += brute_recall(preds[i], gts[i], t, 100);
        b += brute_recall(preds[i], gts[i], t, 10);
      }
      mar += a / 10.0;
      ar10 += b / 10.0;
      ++counted;
    }
    const auto got = average_recall(preds, gts);
    INFO("trial ", trial);
    CHECK(got.images == counted);
    CHECK(got.mar == mar / static_cast<double>(counted));
    CHECK(got.ar10 == ar10 / static_cast<double>(counted));
  }
}

TEST_CASE("average recall argument checks") {
  CHECK_THROWS_AS(average_recall({{}}, {{}, {}}), InvalidArgument);
  CHECK_THROWS_AS(average_recall({{}}, {{}}), InvalidArgument);
}

TEST_CASE("F1 reproduces the tabulated hallucination scores") {
  CHECK(std::abs(harmonic_f1(85.66, 82.47) - 84.04) <= 0.01);
  CHECK(std::abs(harmonic_f1(94.59, 82.73) - 88.26) <= 0.01);
  CHECK(harmonic_f1(0, 0) == 0.0);
  CHECK(harmonic_f1(50, 50) == 50.0);
  CHECK(round_to(2.345, 1) == 2.3);
}

TEST_CASE("pope metrics") {
  const std::vector<std::string> labels = {"yes", "yes", "no", "no", "yes"};
  const auto perfect = pope_metrics(labels, labels);
  CHECK(perfect.accuracy == 100.0);
  CHECK(perfect.precision == 100.0);
  CHECK(perfect.recall == 100.0);
  CHECK(perfect.f1 == 100.0);
  CHECK(perfect.yes_ratio == 60.0);

  // tp 1, fp 1, fn 2, tn 1.
  const auto m = pope_metrics({"Yes.", "no", "yes", "No", "maybe"}, labels);
  CHECK(m.accuracy == 40.0);
  CHECK(m.precision == 50.0);
  CHECK(m.recall == 33.33);
  CHECK(m.f1 == 40.0);
  CHECK(m.yes_ratio == 40.0);

  const auto none = pope_metrics({"no", "no", "no", "no", "no"}, labels);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.yes_ratio == 0.0);

  CHECK_THROWS_AS(pope_metrics({"yes"}, labels), InvalidArgument);
  CHECK_THROWS_AS(pope_metrics({"yes"}, {"perhaps"}), InvalidArgument);
  CHECK_THROWS_AS(pope_metrics({"yes"}, {"no"}), InvalidArgument);
}

TEST_CASE("answer normalization and exact match") {
  CHECK(normalize_answer("Yes.") == "yes");
  CHECK(normalize_answer("  Two   words. ") == "two words");
  CHECK(normalize_answer("") == "");
  CHECK(exact_match_accuracy({"Yes.", "no", "car"}, {"yes", "No", "bus"}) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(exact_match_accuracy({}, {}), InvalidArgument);
  CHECK_THROWS_AS(exact_match_accuracy({"a"}, {}), InvalidArgument);
}

TEST_CASE("refinement report") {
  const std::vector<Box> gt = {{0.1, 0.1, 0.5, 0.5}, {0.5, 0.5, 0.9, 0.9}};
  const std::vector<Box> noisy = {{0.125, 0.125, 0.5, 0.5}, {0.5, 0.5, 0.875, 0.875}};
  const std::vector<InstructionSample> samples = {refine_sample("a", gt, noisy)};

  const auto echo = refinement_report(samples, {boxes_text(noisy)});
  CHECK(echo.metric("iou_improvement") == doctest::Approx(0.0));
  CHECK(echo.metric("mean_iou_output") == doctest::Approx(echo.metric("mean_iou_input")));
  CHECK(echo.metric("mar_output") == doctest::Approx(echo.metric("mar_input")));
  const double expect_in = (ref_iou(noisy[0], gt[0]) + ref_iou(noisy[1], gt[1])) / 2.0;
  CHECK(echo.metric("mean_iou_input") == doctest::Approx(expect_in));
  CHECK(echo.metric("parse_failure_rate") == 0.0);

  const auto exact = refinement_report(samples, {samples[0].answer});
  CHECK(exact.metric("mean_iou_output") == doctest::Approx(1.0));
  CHECK(exact.metric("iou_improvement") == doctest::Approx(1.0 - expect_in));
  CHECK(exact.metric("mar_output") == doctest::Approx(1.0));

  const auto junk = refinement_report(samples, {"no idea"});
  CHECK(junk.metric("parse_failure_rate") == 1.0);
  CHECK(junk.metric("mean_iou_output") == 0.0);
  CHECK(junk.metric("mar_output") == 0.0);

  CHECK_THROWS_AS(refinement_report(samples, {}), InvalidArgument);
  CHECK_THROWS_AS(refinement_report({}, {}), InvalidArgument);
  auto probe = samples[0];
  probe.task_tag = TaskTag::kVqaYesNo;
  CHECK_THROWS_AS(refinement_report({probe}, {"x"}), InvalidArgument);
  CHECK_THROWS_AS(echo.metric("bleu"), InvalidArgument);
}

TEST_CASE("yes/no report and rendering") {
  DatasetConfig dc;
  std::vector<InstructionSample> probes;
  for (const auto& s : make_dataset(40, 2, 0.05, dc).train) {
    if (s.task_tag == TaskTag::kVqaYesNo) probes.push_back(s);
  }
  REQUIRE(!probes.empty());
  std::vector<std::string> answers;
  for (const auto& s : probes) answers.push_back(s.answer == "yes" ? "Yes." : "no");
  auto r = yesno_report(probes, answers);
  CHECK(r.metric("accuracy") == 100.0);
  CHECK(r.metric("exact_match") == 1.0);
  r.config = {{"seed", "7"}};
  const auto json = r.to_json();
  CHECK(json.find("\"task\": \"vqa_yesno\"") != std::string::npos);
  CHECK(json.find("\"seed\": \"7\"") != std::string::npos);
  const auto table = r.to_table();
  CHECK(table.rfind("task", 0) == 0);
  CHECK(table.find("exact_match") != std::string::npos);
  CHECK_THROWS_AS(yesno_report(probes, {}), InvalidArgument);
}

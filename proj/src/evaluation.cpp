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


#include "mrmllm/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mrmllm/error.hpp"
#include "mrmllm/perception.hpp"

namespace mrml {

double iou(const Box& a, const Box& b) {
  if (!perception::valid_box(a) || !perception::valid_box(b)) {
    throw InvalidArgument("iou: invalid box " + std::string(perception::valid_box(a) ? "b" : "a"));
  }
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double image_recall(const std::vector<ScoredBox>& preds, const std::vector<ScoredBox>& gts,
                    double threshold, std::size_t max_dets, bool class_aware) {
  if (gts.empty()) return 1.0;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  if (order.size() > max_dets) order.resize(max_dets);
  std::vector<unsigned char> taken(gts.size(), 0);
  std::size_t matched = 0;
  for (auto pi : order) {
    const auto& p = preds[pi];
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || (class_aware && gts[g].class_id != p.class_id)) continue;
      const double v = iou(p.box, gts[g].box);
      if (v >= threshold && v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size()) {
      taken[best_g] = 1;
      ++matched;
    }
  }
  return static_cast<double>(matched) / static_cast<double>(gts.size());
}

std::vector<double> recall_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50.0 + 5.0 * i) / 100.0);
  return t;
}

RecallMetrics average_recall(const std::vector<std::vector<ScoredBox>>& preds,
                             const std::vector<std::vector<ScoredBox>>& gts, bool class_aware) {
  if (preds.size() != gts.size()) {
    throw InvalidArgument("average_recall: " + std::to_string(preds.size()) +
                          " prediction lists for " + std::to_string(gts.size()) + " images");
  }
  const auto thresholds = recall_thresholds();
  RecallMetrics out;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].empty()) continue;
    double r100 = 0.0, r10 = 0.0;
    for (double t : thresholds) {
      r100 += image_recall(preds[i], gts[i], t, 100, class_aware);
      r10 += image_recall(preds[i], gts[i], t, 10, class_aware);
    }
    out.mar += r100 / static_cast<double>(thresholds.size());
    out.ar10 += r10 / static_cast<double>(thresholds.size());
    ++out.images;
  }
  if (out.images == 0) throw InvalidArgument("average_recall: no image has ground-truth boxes");
  out.mar /= static_cast<double>(out.images);
  out.ar10 /= static_cast<double>(out.images);
  return out;
}

double harmonic_f1(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

double round_to(double value, int decimals) {
  const double f = std::pow(10.0, decimals);
  return std::floor(value * f + 0.5) / f;
}

std::string normalize_answer(const std::string& text) {
  std::string out;
  bool space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  if (!out.empty() && out.back() == '.') out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

PopeMetrics pope_metrics(const std::vector<std::string>& predictions,
                         const std::vector<std::string>& labels) {
  if (predictions.size() != labels.size()) {
    throw InvalidArgument("pope_metrics: " + std::to_string(predictions.size()) +
                          " predictions for " + std::to_string(labels.size()) + " labels");
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto label = normalize_answer(labels[i]);
    if (label != "yes" && label != "no") {
      throw InvalidArgument("pope_metrics: label " + std::to_string(i) + " is '" + labels[i] +
                            "', expected yes or no");
    }
    const bool pred_yes = normalize_answer(predictions[i]) == "yes";
    const bool gold_yes = label == "yes";
    (pred_yes ? (gold_yes ? tp : fp) : (gold_yes ? fn : tn))++;
  }
  if (tp + fn == 0) throw InvalidArgument("pope_metrics: no positive labels, recall is undefined");
  const double n = static_cast<double>(labels.size());
  const double precision = tp + fp ? 100.0 * tp / static_cast<double>(tp + fp) : 0.0;
  const double recall = 100.0 * tp / static_cast<double>(tp + fn);
  PopeMetrics m;
  m.accuracy = round_to(100.0 * static_cast<double>(tp + tn) / n, 2);
  m.precision = round_to(precision, 2);
  m.recall = round_to(recall, 2);
  m.f1 = round_to(harmonic_f1(precision, recall), 2);
  m.yes_ratio = round_to(100.0 * static_cast<double>(tp + fp) / n, 2);
  return m;
}

double exact_match_accuracy(const std::vector<std::string>& predictions,
                            const std::vector<std::string>& references) {
  if (predictions.size() != references.size()) {
    throw InvalidArgument("exact_match_accuracy: " + std::to_string(predictions.size()) +
                          " predictions for " + std::to_string(references.size()) + " references");
  }
  if (predictions.empty()) throw InvalidArgument("exact_match_accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    hits += normalize_answer(predictions[i]) == normalize_answer(references[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double EvalReport::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  throw InvalidArgument("EvalReport: no metric named " + name);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["samples"] = samples;
  j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) j["config"][k] = v;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::size_t width = 7;
  for (const auto& [k, v] : metrics) width = std::max(width, k.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %s\n", static_cast<int>(width), "task", task.c_str());
  out += line;
  std::snprintf(line, sizeof line, "%-*s  %zu\n", static_cast<int>(width), "samples", samples);
  out += line;
  for (const auto& [k, v] : metrics) {
    std::snprintf(line, sizeof line, "%-*s  %10.4f\n", static_cast<int>(width), k.c_str(), v);
    out += line;
  }
  return out;
}

EvalReport refinement_report(const std::vector<InstructionSample>& samples,
                             const std::vector<std::string>& outputs) {
  if (samples.size() != outputs.size()) {
    throw InvalidArgument("refinement_report: " + std::to_string(outputs.size()) +
                          " outputs for " + std::to_string(samples.size()) + " samples");
  }
  if (samples.empty()) throw InvalidArgument("refinement_report: no samples");
  double iou_in = 0.0, iou_out = 0.0;
  std::size_t objects = 0, failures = 0;
  std::vector<std::vector<ScoredBox>> gts, preds_in, preds_out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.task_tag != TaskTag::kRefine) {
      throw InvalidArgument("refinement_report: sample '" + s.id + "' is not a refine sample");
    }
    const auto gt = tok::parse_boxes(s.answer);
    const auto out = tok::parse_boxes(outputs[i]);
    const auto& noisy = s.detections.detections;
    if (out.empty()) ++failures;
    auto& g = gts.emplace_back();
    auto& pin = preds_in.emplace_back();
    auto& pout = preds_out.emplace_back();
    for (std::size_t k = 0; k < gt.size(); ++k) {
      g.push_back({gt[k], 1.0, -1});
      if (k < noisy.size()) iou_in += iou(noisy[k].box, gt[k]);
      if (k < out.size()) iou_out += iou(out[k], gt[k]);
    }
    for (const auto& d : noisy) pin.push_back({d.box, d.score, -1});
    for (std::size_t k = 0; k < out.size(); ++k) {
      pout.push_back({out[k], k < noisy.size() ? noisy[k].score : 0.0, -1});
    }
    objects += gt.size();
  }
  const double n_obj = static_cast<double>(std::max<std::size_t>(objects, 1));
  const auto ar_in = average_recall(preds_in, gts);
  const auto ar_out = average_recall(preds_out, gts);
  EvalReport r;
  r.task = "refine";
  r.samples = samples.size();
  r.metrics = {{"mean_iou_input", iou_in / n_obj},
               {"mean_iou_output", iou_out / n_obj},
               {"iou_improvement", (iou_out - iou_in) / n_obj},
               {"parse_failure_rate", static_cast<double>(failures) / static_cast<double>(samples.size())},
               {"mar_input", ar_in.mar},
               {"ar10_input", ar_in.ar10},
               {"mar_output", ar_out.mar},
               {"ar10_output", ar_out.ar10}};
  return r;
}

EvalReport yesno_report(const std::vector<InstructionSample>& samples,
                        const std::vector<std::string>& outputs) {
  if (samples.size() != outputs.size()) {
    throw InvalidArgument("yesno_report: " + std::to_string(outputs.size()) + " outputs for " +
                          std::to_string(samples.size()) + " samples");
  }
  std::vector<std::string> labels;
  for (const auto& s : samples) {
    if (s.task_tag != TaskTag::kVqaYesNo) {
      throw InvalidArgument("yesno_report: sample '" + s.id + "' is not a yes/no probe");
    }
    labels.push_back(s.answer);
  }
  const auto pope = pope_metrics(outputs, labels);
  EvalReport r;
  r.task = "vqa_yesno";
  r.samples = samples.size();
  r.metrics = {{"accuracy", pope.accuracy},   {"precision", pope.precision},
               {"recall", pope.recall},       {"f1", pope.f1},
               {"yes_ratio", pope.yes_ratio}, {"exact_match", exact_match_accuracy(outputs, labels)}};
  return r;
}

std::vector<std::string> generate_answers(const Model& model, const tok::Vocab& vocab,
                                          const std::vector<InstructionSample>& samples,
                                          const Toggles& toggles, std::size_t max_new) {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back(generate_answer(model, vocab, s.image_id, s.detections, s.question, toggles, max_new));
  }
  return out;
}

EvalReport evaluate_refinement(const Model& model, const tok::Vocab& vocab,
                               const std::vector<InstructionSample>& samples,
                               const Toggles& toggles, std::size_t max_new) {
  return refinement_report(samples, generate_answers(model, vocab, samples, toggles, max_new));
}

}  // namespace mrml

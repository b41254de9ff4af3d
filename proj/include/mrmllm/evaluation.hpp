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


// Recall, hallucination and answer-accuracy metrics, and the refinement
// report.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mrmllm/dataset.hpp"
#include "mrmllm/model.hpp"

namespace mrml {

using tok::Box;

/// Intersection over union; 0 when the union is empty. Throws on invalid
/// boxes.
double iou(const Box& a, const Box& b);

struct ScoredBox {
  Box box;
  double score = 1.0;
  int class_id = -1;
};

/// Fraction of `gts` matched at one IoU threshold. Predictions are visited in
/// descending score (stable), at most max_dets of them; each takes the
/// unmatched ground truth of highest IoU >= threshold, ties to the lower
/// index. With class_aware, only same-class pairs match.
double image_recall(const std::vector<ScoredBox>& preds, const std::vector<ScoredBox>& gts,
                    double threshold, std::size_t max_dets, bool class_aware = false);

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> recall_thresholds();

struct RecallMetrics {
  double mar = 0.0;   // max_dets 100
  double ar10 = 0.0;  // max_dets 10
  std::size_t images = 0;
};

/// Recall averaged over thresholds, then over images with at least one
/// ground-truth box. Throws when the image counts differ or no image has
/// ground truth.
RecallMetrics average_recall(const std::vector<std::vector<ScoredBox>>& preds,
                             const std::vector<std::vector<ScoredBox>>& gts,
                             bool class_aware = false);

/// 2pr / (p + r), 0 when both are 0.
double harmonic_f1(double precision, double recall);
/// Round half up to `decimals` places.
double round_to(double value, int decimals);

struct PopeMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, yes_ratio = 0;
};

/// Percentages rounded to 2 decimals; "yes" is the positive class. Labels
/// must be yes/no; any prediction other than "yes" (after normalization)
/// counts as "no". Precision is 0 when nothing is predicted "yes".
PopeMetrics pope_metrics(const std::vector<std::string>& predictions,
                         const std::vector<std::string>& labels);

/// Lowercase, collapse whitespace, strip a trailing period.
std::string normalize_answer(const std::string& text);
double exact_match_accuracy(const std::vector<std::string>& predictions,
                            const std::vector<std::string>& references);

struct EvalReport {
  std::string task;
  std::vector<std::pair<std::string, double>> metrics;
  std::size_t samples = 0;
  std::vector<std::pair<std::string, std::string>> config;

  double metric(const std::string& name) const;
  std::string to_json() const;
  std::string to_table() const;
};

/// Refinement metrics for given model outputs (one per sample, in order).
/// Boxes parsed from each output pair with ground truth by position.
EvalReport refinement_report(const std::vector<InstructionSample>& samples,
                             const std::vector<std::string>& outputs);

/// POPE metrics plus exact-match accuracy for yes/no probes.
EvalReport yesno_report(const std::vector<InstructionSample>& samples,
                        const std::vector<std::string>& outputs);

/// Generates an answer for every sample with the given model.
std::vector<std::string> generate_answers(const Model& model, const tok::Vocab& vocab,
                                          const std::vector<InstructionSample>& samples,
                                          const Toggles& toggles, std::size_t max_new);

EvalReport evaluate_refinement(const Model& model, const tok::Vocab& vocab,
                               const std::vector<InstructionSample>& samples,
                               const Toggles& toggles, std::size_t max_new);

}  // namespace mrml

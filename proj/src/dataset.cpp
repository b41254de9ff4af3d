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


#include "mrmllm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mrmllm/error.hpp"

namespace mrml {

using json = nlohmann::ordered_json;

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (stream * 0xa0761d6478bd642fULL);
  return splitmix64(s);
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

bool has_class(const perception::DetectionSet& set, const std::string& name) {
  return std::any_of(set.detections.begin(), set.detections.end(),
                     [&](const auto& d) { return d.class_name == name; });
}

}  // namespace

std::string to_string(TaskTag tag) {
  switch (tag) {
    case TaskTag::kRefine: return "refine";
    case TaskTag::kVqaYesNo: return "vqa_yesno";
    case TaskTag::kCaptionToy: return "caption_toy";
  }
  return "refine";
}

TaskTag task_tag_from_string(const std::string& text) {
  if (text == "refine") return TaskTag::kRefine;
  if (text == "vqa_yesno") return TaskTag::kVqaYesNo;
  if (text == "caption_toy") return TaskTag::kCaptionToy;
  throw InvalidArgument("unknown task tag '" + text + "'");
}

InstructionSample format_refinement(const perception::DetectionSet& gt,
                                    const perception::DetectionSet& noisy) {
  if (gt.image_id != noisy.image_id) {
    throw InvalidArgument("format_refinement: image ids differ ('" + gt.image_id + "' vs '" +
                          noisy.image_id + "')");
  }
  if (gt.detections.size() != noisy.detections.size()) {
    throw InvalidArgument("format_refinement: image '" + gt.image_id + "' has " +
                          std::to_string(gt.detections.size()) + " ground-truth and " +
                          std::to_string(noisy.detections.size()) + " noisy boxes");
  }
  if (gt.detections.empty()) {
    throw InvalidArgument("format_refinement: image '" + gt.image_id + "' has no boxes");
  }
  const auto g = perception::canonical(gt);
  const auto p = perception::canonical(noisy);
  std::string answer;
  for (std::size_t i = 0; i < g.detections.size(); ++i) {
    if (g.detections[i].class_id != p.detections[i].class_id) {
      throw InvalidArgument("format_refinement: image '" + gt.image_id + "' object " +
                            std::to_string(i) + " changes class between ground truth and input");
    }
    if (i) answer += "; ";
    answer += g.detections[i].class_name + " " + tok::render_box(g.detections[i].box);
  }
  answer += ".";
  return {gt.image_id, gt.image_id, kRefineQuestion, answer, p, TaskTag::kRefine};
}

InstructionSample format_yesno(const perception::DetectionSet& set,
                               const std::string& probe_class, const std::string& label,
                               const perception::ClassTable& classes) {
  if (classes.id(probe_class) < 0) {
    throw InvalidArgument("format_yesno: class '" + probe_class + "' is not in the class table");
  }
  if (label != "yes" && label != "no") {
    throw InvalidArgument("format_yesno: label must be yes or no, got '" + label + "'");
  }
  const bool present = has_class(set, probe_class);
  if (present != (label == "yes")) {
    throw InvalidArgument("format_yesno: label '" + label + "' contradicts the detections of '" +
                          set.image_id + "' for class " + probe_class);
  }
  return {set.image_id, set.image_id, "Is there a " + probe_class + " in the image?", label,
          perception::canonical(set), TaskTag::kVqaYesNo};
}

Dataset make_dataset(std::size_t n, std::uint64_t seed, double noise, const DatasetConfig& cfg) {
  if (n == 0) throw InvalidArgument("make_dataset: n must be positive");
  if (!(cfg.refine_fraction >= 0.0 && cfg.refine_fraction <= 1.0)) {
    throw InvalidArgument("make_dataset: refine_fraction must be in [0, 1]");
  }
  if (cfg.max_refine_objects == 0) {
    throw InvalidArgument("make_dataset: max_refine_objects must be positive");
  }
  const auto n_refine =
      static_cast<std::size_t>(std::llround(cfg.refine_fraction * static_cast<double>(n)));
  std::vector<TaskTag> tags(n, TaskTag::kVqaYesNo);
  std::fill_n(tags.begin(), n_refine, TaskTag::kRefine);
  Rng tag_rng(stream_seed(seed, 1));
  shuffle(tags, tag_rng);

  std::vector<InstructionSample> all;
  all.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto image_id = numbered("img_", i);
    Rng rng(stream_seed(seed, 1000 + i));
    InstructionSample s;
    if (tags[i] == TaskTag::kRefine) {
      const auto k = 1 + rng.below(cfg.max_refine_objects);
      const auto gt = perception::mock_detector(image_id, seed, k, cfg.classes, cfg.descriptor_dim);
      const auto noisy = perception::perturb_boxes(gt, noise, rng.next());
      s = format_refinement(gt, noisy);
    } else {
      const auto k = rng.below(cfg.max_probe_objects + 1);
      const auto set = perception::mock_detector(image_id, seed, k, cfg.classes, cfg.descriptor_dim);
      std::vector<std::string> absent;
      for (const auto& name : cfg.classes.names()) {
        if (!has_class(set, name)) absent.push_back(name);
      }
      const bool want_yes = k > 0 && (rng.uniform() < 0.5 || absent.empty());
      const auto probe = want_yes ? set.detections[rng.below(k)].class_name
                                  : absent[rng.below(absent.size())];
      s = format_yesno(set, probe, want_yes ? "yes" : "no", cfg.classes);
    }
    s.id = numbered("s", i);
    all.push_back(std::move(s));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(stream_seed(seed, 2));
  shuffle(order, split_rng);
  std::vector<unsigned char> held(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (pos % 5 == 4) held[order[pos]] = 1;
  }
  Dataset out;
  for (std::size_t i = 0; i < n; ++i) (held[i] ? out.heldout : out.train).push_back(std::move(all[i]));
  return out;
}

void validate_sample(const InstructionSample& s, const perception::ClassTable& classes,
                     std::size_t descriptor_dim) {
  const std::string where = "sample '" + s.id + "'";
  if (s.answer.empty()) throw FormatError(where + ": empty answer");
  if (s.detections.image_id != s.image_id) {
    throw FormatError(where + ": detections belong to '" + s.detections.image_id + "'");
  }
  perception::validate(s.detections, classes, descriptor_dim, where);
  if (s.task_tag == TaskTag::kRefine && tok::parse_boxes(s.answer).empty()) {
    throw FormatError(where + ": refine answer contains no box");
  }
  if (s.task_tag == TaskTag::kVqaYesNo) {
    if (s.answer != "yes" && s.answer != "no") throw FormatError(where + ": answer must be yes or no");
  }
}

std::string samples_to_json(const std::vector<InstructionSample>& samples) {
  json arr = json::array();
  for (const auto& s : samples) {
    arr.push_back({{"id", s.id},
                   {"image_id", s.image_id},
                   {"task_tag", to_string(s.task_tag)},
                   {"question", s.question},
                   {"answer", s.answer},
                   {"detections", perception::to_json(s.detections)}});
  }
  return arr.dump(1) + "\n";
}

void save_samples(const std::filesystem::path& path, const std::vector<InstructionSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file " + path.string());
  out << samples_to_json(samples);
  if (!out) throw IoError("failed writing dataset file " + path.string());
}

std::vector<InstructionSample> load_samples(const std::filesystem::path& path,
                                            const perception::ClassTable& classes,
                                            std::size_t descriptor_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dataset file " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!root.is_array()) throw FormatError(path.string() + ": expected a JSON array of samples");
  std::vector<InstructionSample> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto where = path.string() + "[" + std::to_string(i) + "]";
    const auto& j = root[i];
    auto text = [&](const char* key) {
      if (!j.is_object() || !j.contains(key) || !j.at(key).is_string()) {
        throw FormatError(where + ": missing or non-string field '" + key + "'");
      }
      return j.at(key).get<std::string>();
    };
    InstructionSample s;
    s.id = text("id");
    s.image_id = text("image_id");
    try {
      s.task_tag = task_tag_from_string(text("task_tag"));
    } catch (const InvalidArgument& e) {
      throw FormatError(where + ".task_tag: " + e.what());
    }
    s.question = text("question");
    s.answer = text("answer");
    if (!j.contains("detections")) throw FormatError(where + ": missing field 'detections'");
    s.detections = perception::detection_set_from_json(j.at("detections"), where + ".detections");
    validate_sample(s, classes, descriptor_dim);
    perception::canonicalize(s.detections);
    out.push_back(std::move(s));
  }
  return out;
}

std::filesystem::path heldout_path(const std::filesystem::path& train_path) {
  auto p = train_path;
  return p.replace_filename(train_path.stem().string() + ".heldout.json");
}

}  // namespace mrml

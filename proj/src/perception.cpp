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

#include "mrmllm/perception.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <tuple>

#include "mrmllm/error.hpp"

namespace mrml::perception {

using json = nlohmann::ordered_json;

ClassTable::ClassTable()
    : ClassTable({"car", "truck", "pedestrian", "cyclist", "bus", "cone"}) {}

ClassTable::ClassTable(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw InvalidArgument("ClassTable: no classes");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& n = names_[i];
    if (n.empty() || n.find_first_of(" \t\n[]();:,.") != std::string::npos) {
      throw InvalidArgument("ClassTable: class name '" + n + "' must be a single plain word");
    }
    if (std::find(names_.begin(), names_.begin() + static_cast<std::ptrdiff_t>(i), n) !=
        names_.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw InvalidArgument("ClassTable: duplicate class '" + n + "'");
    }
  }
}

const std::string& ClassTable::name(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw InvalidArgument("ClassTable: class id " + std::to_string(id) + " out of range");
  }
  return names_[static_cast<std::size_t>(id)];
}

int ClassTable::id(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

bool valid_box(const Box& b) {
  return 0.0 <= b.x1 && b.x1 <= b.x2 && b.x2 <= 1.0 && 0.0 <= b.y1 && b.y1 <= b.y2 && b.y2 <= 1.0;
}

bool canonical_less(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  return std::tie(a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
         std::tie(b.box.x1, b.box.y1, b.box.x2, b.box.y2);
}

void canonicalize(DetectionSet& set) {
  std::stable_sort(set.detections.begin(), set.detections.end(), canonical_less);
}

DetectionSet canonical(DetectionSet set) {
  canonicalize(set);
  return set;
}

void validate(const DetectionSet& set, const ClassTable& classes, std::size_t descriptor_dim,
              const std::string& where) {
  for (std::size_t i = 0; i < set.detections.size(); ++i) {
    const auto& d = set.detections[i];
    const std::string at = where + " image '" + set.image_id + "' detection " + std::to_string(i);
    if (!valid_box(d.box)) throw FormatError(at + ": box out of range or mis-ordered");
    if (!(d.score >= 0.0 && d.score <= 1.0)) throw FormatError(at + ": score outside [0, 1]");
    if (d.class_id < 0 || static_cast<std::size_t>(d.class_id) >= classes.size()) {
      throw FormatError(at + ": class_id " + std::to_string(d.class_id) + " not in class table");
    }
    if (classes.name(d.class_id) != d.class_name) {
      throw FormatError(at + ": class_name '" + d.class_name + "' does not match class_id " +
                        std::to_string(d.class_id));
    }
    if (d.descriptor.size() != descriptor_dim) {
      throw FormatError(at + ": descriptor has " + std::to_string(d.descriptor.size()) +
                        " values, expected " + std::to_string(descriptor_dim));
    }
    for (double v : d.descriptor) {
      if (!std::isfinite(v)) throw FormatError(at + ": non-finite descriptor value");
    }
  }
}

json to_json(const DetectionSet& set) {
  json dets = json::array();
  for (const auto& d : set.detections) {
    dets.push_back({{"class_id", d.class_id},
                    {"class_name", d.class_name},
                    {"score", d.score},
                    {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                    {"descriptor", d.descriptor}});
  }
  return {{"image_id", set.image_id}, {"detections", std::move(dets)}};
}

namespace {

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(where + ": missing field '" + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw FormatError(where + ": expected a number");
  return j.get<double>();
}

}  // namespace

DetectionSet detection_set_from_json(const json& j, const std::string& where) {
  DetectionSet set;
  const auto& id = field(j, "image_id", where);
  if (!id.is_string()) throw FormatError(where + ".image_id: expected a string");
  set.image_id = id.get<std::string>();
  const auto& dets = field(j, "detections", where);
  if (!dets.is_array()) throw FormatError(where + ".detections: expected an array");
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string at = where + ".detections[" + std::to_string(i) + "]";
    const auto& dj = dets[i];
    Detection d;
    const auto& cid = field(dj, "class_id", at);
    if (!cid.is_number_integer()) throw FormatError(at + ".class_id: expected an integer");
    d.class_id = cid.get<int>();
    const auto& cname = field(dj, "class_name", at);
    if (!cname.is_string()) throw FormatError(at + ".class_name: expected a string");
    d.class_name = cname.get<std::string>();
    d.score = number(field(dj, "score", at), at + ".score");
    const auto& box = field(dj, "box", at);
    if (!box.is_array() || box.size() != 4) throw FormatError(at + ".box: expected 4 numbers");
    d.box = {number(box[0], at + ".box"), number(box[1], at + ".box"), number(box[2], at + ".box"),
             number(box[3], at + ".box")};
    const auto& desc = field(dj, "descriptor", at);
    if (!desc.is_array()) throw FormatError(at + ".descriptor: expected an array");
    for (const auto& v : desc) d.descriptor.push_back(number(v, at + ".descriptor"));
    set.detections.push_back(std::move(d));
  }
  return set;
}

std::vector<DetectionSet> load_detections(const std::filesystem::path& path,
                                          const ClassTable& classes,
                                          std::size_t descriptor_dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read detection file " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
  const auto& images = field(root, "images", path.string());
  if (!images.is_array()) throw FormatError(path.string() + ".images: expected an array");
  std::vector<DetectionSet> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = path.string() + ":images[" + std::to_string(i) + "]";
    auto set = detection_set_from_json(images[i], where);
    validate(set, classes, descriptor_dim, where);
    canonicalize(set);
    out.push_back(std::move(set));
  }
  return out;
}

void save_detections(const std::filesystem::path& path, const std::vector<DetectionSet>& sets) {
  json images = json::array();
  for (const auto& s : sets) images.push_back(to_json(s));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write detection file " + path.string());
  out << json{{"images", std::move(images)}}.dump(1) << '\n';
}

std::vector<double> box_descriptor(const Box& box, std::size_t dim, Rng& rng) {
  constexpr double kPeriods[] = {1.0, 0.1, 0.01};
  const double coords[4] = {box.x1, box.y1, box.x2, box.y2};
  std::vector<double> out(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const std::size_t coord = j % 4;
    const std::size_t pair = j / 4;
    const std::size_t level = pair / 2;
    const double noise = rng.normal();
    if (level < std::size(kPeriods)) {
      const double angle = 2.0 * std::numbers::pi * coords[coord] / kPeriods[level];
      out[j] = (pair % 2 == 0 ? std::sin(angle) : std::cos(angle)) + 0.01 * noise;
    } else {
      out[j] = 0.5 * noise;
    }
  }
  return out;
}

DetectionSet mock_detector(const std::string& image_id, std::uint64_t seed, std::size_t k,
                           const ClassTable& classes, std::size_t descriptor_dim) {
  Rng rng(fnv1a64(image_id) ^ (seed * 0x9e3779b97f4a7c15ULL));
  DetectionSet set{image_id, {}};
  for (std::size_t i = 0; i < k; ++i) {
    Detection d;
    d.class_id = static_cast<int>(rng.below(classes.size()));
    d.class_name = classes.name(d.class_id);
    const double w = rng.uniform(0.1, 0.5);
    const double h = rng.uniform(0.1, 0.5);
    const double x1 = rng.uniform(0.0, 1.0 - w);
    const double y1 = rng.uniform(0.0, 1.0 - h);
    d.box = {x1, y1, std::min(1.0, x1 + w), std::min(1.0, y1 + h)};
    d.score = rng.uniform(0.3, 1.0);
    d.descriptor = box_descriptor(d.box, descriptor_dim, rng);
    set.detections.push_back(std::move(d));
  }
  canonicalize(set);
  return set;
}

DetectionSet perturb_boxes(const DetectionSet& set, double noise, std::uint64_t seed) {
  if (!(noise >= 0.0 && noise <= 0.5)) {
    throw InvalidArgument("perturb_boxes: noise must be in [0, 0.5], got " + std::to_string(noise));
  }
  Rng rng(seed);
  auto out = canonical(set);
  for (auto& d : out.detections) {
    double c[4] = {d.box.x1, d.box.y1, d.box.x2, d.box.y2};
    for (double& v : c) v = std::clamp(v + rng.uniform(-noise, noise), 0.0, 1.0);
    if (c[0] > c[2]) std::swap(c[0], c[2]);
    if (c[1] > c[3]) std::swap(c[1], c[3]);
    d.box = {c[0], c[1], c[2], c[3]};
  }
  return out;
}

std::string render_template(const DetectionSet& set, std::size_t max_objects) {
  const auto sorted = canonical(set);
  const auto n = std::min(max_objects, sorted.detections.size());
  if (n == 0) return "Detected objects: none.";
  std::string out = "Detected objects: ";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = sorted.detections[i];
    if (i) out += "; ";
    out += d.class_name + " " + tok::render_box(d.box) + " (" + tok::fixed_round_half_up(d.score, 2) + ")";
  }
  return out + ".";
}

}  // namespace mrml::perception

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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mrmllm/error.hpp"
#include "mrmllm/perception.hpp"

using namespace mrml;
using namespace mrml::perception;

namespace {

// Reference xoshiro256** with splitmix64 seeding, written from the published
// algorithms rather than the library header.
struct RefGenerator {
  std::uint64_t s[4];
  explicit RefGenerator(std::uint64_t seed) {
    for (auto& w : s) {
      seed += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = seed;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      w = z ^ (z >> 31);
    }
  }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t out = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return out;
  }
  double unit() { return static_cast<double>(next() >> 11) / 9007199254740992.0; }
};

Detection det(int cls, double score, Box b, std::size_t dim = 4) {
  const ClassTable classes;
  return {cls, classes.name(cls), score, b, std::vector<double>(dim, 0.25)};
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("generator seeding matches the published splitmix64 value") {
  std::uint64_t state = 0;
  CHECK(splitmix64(state) == 0xe220a8397b1dcdafULL);
  Rng lib(1234);
  RefGenerator ref(1234);
  for (int i = 0; i < 100; ++i) CHECK(lib.next() == ref.next());
}

TEST_CASE("class table") {
  const ClassTable t;
  CHECK(t.size() == 6);
  CHECK(t.name(0) == "car");
  CHECK(t.id("bus") == 4);
  CHECK(t.id("plane") == -1);
  CHECK_THROWS_AS(t.name(6), InvalidArgument);
  CHECK_THROWS_AS(ClassTable(std::vector<std::string>{}), InvalidArgument);
  CHECK_THROWS_AS(ClassTable({"car", "car"}), InvalidArgument);
  CHECK_THROWS_AS(ClassTable({"two words"}), InvalidArgument);
}

TEST_CASE("canonical order") {
  DetectionSet s{"img", {det(1, 0.8, {0, 0, 1, 1}), det(2, 0.9, {0, 0, 1, 1}),
                         det(0, 0.8, {0.2, 0, 1, 1}), det(0, 0.8, {0.1, 0, 1, 1})}};
  canonicalize(s);
  CHECK(s.detections[0].score == 0.9);
  CHECK(s.detections[1].class_id == 0);
  CHECK(s.detections[1].box.x1 == 0.1);
  CHECK(s.detections[2].box.x1 == 0.2);
  CHECK(s.detections[3].class_id == 1);
}

TEST_CASE("mock_detector is deterministic and valid") {
  const ClassTable classes;
  const auto a = mock_detector("img_00001", 7, 5, classes, 32);
  CHECK(a == mock_detector("img_00001", 7, 5, classes, 32));
  CHECK(a != mock_detector("img_00002", 7, 5, classes, 32));
  CHECK(a != mock_detector("img_00001", 8, 5, classes, 32));
  CHECK(mock_detector("img_00001", 7, 0, classes, 32).detections.empty());
  REQUIRE(a.detections.size() == 5);
  CHECK_NOTHROW(validate(a, classes, 32, "mock"));
  CHECK(a == canonical(a));
  for (const auto& d : a.detections) {
    CHECK(d.score >= 0.3);
    CHECK(d.score <= 1.0);
    CHECK(d.box.x2 - d.box.x1 >= 0.1 - 1e-12);
    CHECK(d.box.x2 - d.box.x1 <= 0.5 + 1e-12);
  }
}

TEST_CASE("box descriptor encodes coordinates") {
  Rng rng(1);
  const auto d = box_descriptor({0.25, 0.5, 0.75, 1.0}, 32, rng);
  REQUIRE(d.size() == 32);
  // Slot 0 is sin(2*pi*x1) at period 1, slot 4 the matching cosine.
  CHECK(d[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(d[4] == doctest::Approx(0.0).epsilon(0.05));
  CHECK(d[1] == doctest::Approx(0.0).epsilon(0.05));
  CHECK(d[5] == doctest::Approx(-1.0).epsilon(0.05));
}

TEST_CASE("perturb_boxes identity at zero noise") {
  const auto s = mock_detector("img", 3, 4, ClassTable(), 8);
  CHECK(perturb_boxes(s, 0.0, 99) == s);
  CHECK_THROWS_AS(perturb_boxes(s, 0.6, 1), InvalidArgument);
  CHECK_THROWS_AS(perturb_boxes(s, -0.1, 1), InvalidArgument);
}

TEST_CASE("perturb_boxes matches an independent re-derivation") {
  DetectionSet s{"img", {det(0, 0.9, {0.2, 0.2, 0.8, 0.8})}};
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
    const auto out = perturb_boxes(s, 0.1, seed);
    RefGenerator g(seed);
    double c[4] = {0.2, 0.2, 0.8, 0.8};
    for (double& v : c) v = std::clamp(v + (-0.1 + 0.2 * g.unit()), 0.0, 1.0);
    if (c[0] > c[2]) std::swap(c[0], c[2]);
    if (c[1] > c[3]) std::swap(c[1], c[3]);
    CHECK(out.detections[0].box == Box{c[0], c[1], c[2], c[3]});
    CHECK(out.detections[0].score == 0.9);
    CHECK(out.detections[0].descriptor == s.detections[0].descriptor);
  }
}

TEST_CASE("perturb_boxes keeps geometry valid for any noise") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = mock_detector("img_" + std::to_string(trial), 1, 1 + rng.below(6), ClassTable(), 4);
    const double noise = rng.uniform(0.0, 0.5);
    const auto out = perturb_boxes(s, noise, rng.next());
    REQUIRE(out.detections.size() == s.detections.size());
    for (const auto& d : out.detections) CHECK(valid_box(d.box));
  }
}

TEST_CASE("render_template format") {
  CHECK(render_template({"img", {}}) == "Detected objects: none.");
  CHECK(render_template({"img", {det(0, 0.95, {0.1, 0.2, 0.3, 0.4})}}) ==
        "Detected objects: car [0.100,0.200,0.300,0.400] (0.95).");
  const DetectionSet two{"img", {det(1, 0.8, {0, 0, 0.5, 0.5}), det(0, 0.9, {0.5, 0.5, 1, 1})}};
  CHECK(render_template(two) ==
        "Detected objects: car [0.500,0.500,1.000,1.000] (0.90); truck [0.000,0.000,0.500,0.500] (0.80).");
  CHECK(render_template(two, 1) == "Detected objects: car [0.500,0.500,1.000,1.000] (0.90).");
  CHECK(render_template(two, 0) == "Detected objects: none.");
}

TEST_CASE("render_template is permutation invariant and parses back") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = mock_detector("img_" + std::to_string(trial), 2, 1 + rng.below(10), ClassTable(), 4);
    const auto text = render_template(s, 8);
    std::reverse(s.detections.begin(), s.detections.end());
    CHECK(render_template(s, 8) == text);
    const auto parsed = tok::parse_boxes(text);
    const auto sorted = canonical(s);
    REQUIRE(parsed.size() == std::min<std::size_t>(8, sorted.detections.size()));
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      CHECK(parsed[i] == tok::quantize3(sorted.detections[i].box));
    }
  }
}

TEST_CASE("load_detections") {
  const ClassTable classes;
  auto empty = write_temp("mrml_dets_empty.json", R"({"images": []})");
  CHECK(load_detections(empty, classes, 2).empty());

  auto one = write_temp("mrml_dets_one.json", R"({"images": [{"image_id": "a", "detections": [
      {"class_id": 0, "class_name": "car", "score": 0.5, "box": [0.1, 0.1, 0.2, 0.2],
       "descriptor": [1, 2]}]}]})");
  const auto sets = load_detections(one, classes, 2);
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].detections.size() == 1);

  auto bad_box = write_temp("mrml_dets_bad.json", R"({"images": [{"image_id": "img_bad", "detections": [
      {"class_id": 0, "class_name": "car", "score": 0.5, "box": [0.3, 0.1, 0.2, 0.2],
       "descriptor": [1, 2]}]}]})");
  try {
    load_detections(bad_box, classes, 2);
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("img_bad") != std::string::npos);
  }

  auto missing = write_temp("mrml_dets_missing.json", R"({"images": [{"image_id": "a", "detections": [
      {"class_id": 0, "score": 0.5, "box": [0.1, 0.1, 0.2, 0.2], "descriptor": [1, 2]}]}]})");
  try {
    load_detections(missing, classes, 2);
    FAIL("expected an error");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("class_name") != std::string::npos);
    CHECK(msg.find("detections[0]") != std::string::npos);
  }

  auto bad_class = write_temp("mrml_dets_class.json", R"({"images": [{"image_id": "a", "detections": [
      {"class_id": 9, "class_name": "car", "score": 0.5, "box": [0.1, 0.1, 0.2, 0.2], "descriptor": [1, 2]}]}]})");
  CHECK_THROWS_AS(load_detections(bad_class, classes, 2), FormatError);
  CHECK_THROWS_AS(load_detections(one, classes, 3), FormatError);
  auto junk = write_temp("mrml_dets_junk.json", "{not json");
  CHECK_THROWS_AS(load_detections(junk, classes, 2), FormatError);
  CHECK_THROWS_AS(load_detections("/nonexistent/x.json", classes, 2), IoError);
  for (const auto& p : {empty, one, bad_box, missing, bad_class, junk}) std::filesystem::remove(p);
}

TEST_CASE("save and load detections round trip") {
  const ClassTable classes;
  std::vector<DetectionSet> sets = {mock_detector("a", 1, 3, classes, 6), mock_detector("b", 1, 0, classes, 6)};
  const auto path = std::filesystem::temp_directory_path() / "mrml_dets_rt.json";
  save_detections(path, sets);
  CHECK(load_detections(path, classes, 6) == sets);
  std::filesystem::remove(path);
}

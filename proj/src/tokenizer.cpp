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

#include "mrmllm/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mrmllm/error.hpp"

namespace mrml::tok {

namespace {

constexpr char kFirstChar = 0x20;
constexpr char kLastChar = 0x7e;

bool is_word_candidate(std::string_view chunk) {
  if (chunk.size() < 2) return false;
  for (char c : chunk) {
    if (c < kFirstChar || c > kLastChar) return false;
    if (c >= '0' && c <= '9') return false;
  }
  for (auto r : kReserved) {
    if (chunk == r) return false;
  }
  return true;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> words) {
  for (auto r : kReserved) tokens_.emplace_back(r);
  for (char c = kFirstChar; c <= kLastChar; ++c) tokens_.emplace_back(1, c);
  for (auto& w : words) tokens_.push_back(std::move(w));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw InvalidArgument("Vocab: empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw InvalidArgument("Vocab: duplicate token '" + tokens_[i] + "'");
    }
    max_len_ = std::max(max_len_, tokens_[i].size());
  }
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InvalidArgument("Vocab: id " + std::to_string(id) + " out of range (size " +
                          std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocab file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing vocab file " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocab file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  const auto base = base_vocab_size();
  if (lines.size() < base) throw FormatError("vocab file " + path.string() + " is truncated");
  Vocab probe;
  for (std::size_t i = 0; i < base; ++i) {
    if (lines[i] != probe.tokens_[i]) {
      throw FormatError("vocab file " + path.string() + ": unexpected token at line " +
                        std::to_string(i + 1));
    }
  }
  return Vocab(std::vector<std::string>(lines.begin() + static_cast<std::ptrdiff_t>(base), lines.end()));
}

std::size_t base_vocab_size() { return kReserved.size() + (kLastChar - kFirstChar + 1); }

Vocab build_vocab(std::span<const std::string> corpus, std::size_t max_size) {
  if (corpus.empty()) throw InvalidArgument("build_vocab: empty corpus");
  const auto base = base_vocab_size();
  if (max_size < base) {
    throw InvalidArgument("build_vocab: max_size " + std::to_string(max_size) +
                          " is below the reserved+character set of " + std::to_string(base));
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus) {
    for (auto chunk : split_ws(line)) {
      if (is_word_candidate(chunk)) ++counts[std::string(chunk)];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (auto& [w, n] : ranked) {
    if (base + words.size() >= max_size) break;
    words.push_back(w);
  }
  return Vocab(std::move(words));
}

TokenSeq encode(std::string_view text, const Vocab& vocab) {
  TokenSeq out;
  std::size_t i = 0;
  const auto max_len = vocab.max_token_length();
  while (i < text.size()) {
    if (text[i] == ' ') {
      out.push_back(vocab.id(" "));
      ++i;
      continue;
    }
    // Longest candidate must not run across a space.
    std::size_t limit = std::min(max_len, text.size() - i);
    const auto space = text.find(' ', i);
    if (space != std::string_view::npos) limit = std::min(limit, space - i);
    int found = -1;
    std::size_t len = limit;
    for (; len >= 1; --len) {
      found = vocab.id(text.substr(i, len));
      if (found >= 0) break;
    }
    if (found < 0) {
      out.push_back(kUnk);
      len = 1;
    } else {
      out.push_back(found);
    }
    i += len;
  }
  return out;
}

std::string decode(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == kPad) continue;
    out += vocab.token(id);
  }
  return out;
}

double quantize3(double v) { return std::floor(v * 1000.0 + 0.5) / 1000.0; }

Box quantize3(const Box& b) { return {quantize3(b.x1), quantize3(b.y1), quantize3(b.x2), quantize3(b.y2)}; }

std::string fixed_round_half_up(double v, int decimals) {
  long long scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const bool negative = v < 0;
  const auto q = static_cast<long long>(std::floor(std::abs(v) * static_cast<double>(scale) + 0.5));
  std::string out = (negative && q != 0 ? "-" : "") + std::to_string(q / scale);
  if (decimals > 0) {
    std::string frac = std::to_string(q % scale);
    frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
    out += "." + frac;
  }
  return out;
}

std::string render_box(const Box& b) {
  const bool in_range = b.x1 >= 0 && b.y1 >= 0 && b.x2 <= 1 && b.y2 <= 1;
  if (!in_range || b.x1 > b.x2 || b.y1 > b.y2) {
    std::ostringstream os;
    os << "render_box: invalid box (" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ")";
    throw InvalidArgument(os.str());
  }
  return "[" + fixed_round_half_up(b.x1, 3) + "," + fixed_round_half_up(b.y1, 3) + "," +
         fixed_round_half_up(b.x2, 3) + "," + fixed_round_half_up(b.y2, 3) + "]";
}

std::vector<Box> parse_boxes(std::string_view text) {
  // Shape: [d.ddd,d.ddd,d.ddd,d.ddd] -> 25 characters.
  constexpr std::size_t kLen = 25;
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  auto number_at = [&](std::string_view s, std::size_t p, double& value) {
    if (!digit(s[p]) || s[p + 1] != '.' || !digit(s[p + 2]) || !digit(s[p + 3]) || !digit(s[p + 4])) {
      return false;
    }
    const int q = (s[p] - '0') * 1000 + (s[p + 2] - '0') * 100 + (s[p + 3] - '0') * 10 + (s[p + 4] - '0');
    value = q / 1000.0;
    return true;
  };
  std::vector<Box> out;
  std::size_t i = 0;
  while (i + kLen <= text.size()) {
    if (text[i] != '[') {
      ++i;
      continue;
    }
    double v[4];
    bool ok = text[i + kLen - 1] == ']';
    for (int c = 0; ok && c < 4; ++c) {
      const std::size_t p = i + 1 + static_cast<std::size_t>(c) * 6;
      ok = number_at(text, p, v[c]) && (c == 3 || text[p + 5] == ',');
    }
    if (ok) {
      Box b{v[0], v[1], v[2], v[3]};
      if (b.x1 <= b.x2 && b.y1 <= b.y2 && b.x2 <= 1.0 && b.y2 <= 1.0) {
        out.push_back(b);
        i += kLen;
        continue;
      }
    }
    ++i;
  }
  return out;
}

}  // namespace mrml::tok

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

// Word-level tokenizer with single-character fallback. Box coordinates are
// plain text: every printable ASCII character is its own token, so a rendered
// box such as "[0.100,0.200,0.300,0.400]" never needs <unk>.

#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mrml::tok {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kSep = 4;
inline constexpr std::array<std::string_view, 5> kReserved = {"<pad>", "<bos>", "<eos>",
                                                              "<unk>", "<sep>"};

using TokenSeq = std::vector<int>;

class Vocab {
 public:
  /// Reserved tokens, then printable ASCII 0x20..0x7e, then `words` (which
  /// must be unique, at least two characters long and not already present).
  explicit Vocab(std::vector<std::string> words = {});

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const;
  /// -1 when absent.
  int id(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t max_token_length() const { return max_len_; }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_len_ = 1;
};

/// Number of tokens present in every vocabulary (reserved + characters).
std::size_t base_vocab_size();

/// Word tokens are whitespace-delimited chunks without digits, at least two
/// characters long, ranked by descending frequency and then lexicographically.
/// Throws when max_size cannot hold the base set or the corpus is empty.
Vocab build_vocab(std::span<const std::string> corpus, std::size_t max_size);

/// Greedy longest match at each position; characters outside the vocabulary
/// become <unk>. Tokens never span a space, so encoding is prefix-stable at
/// word boundaries.
TokenSeq encode(std::string_view text, const Vocab& vocab);
/// Concatenation of token strings; <pad> decodes to nothing.
std::string decode(std::span<const int> ids, const Vocab& vocab);

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const Box&) const = default;
};

/// Round-half-up to 3 decimals.
double quantize3(double v);
Box quantize3(const Box& b);
/// "[x1,y1,x2,y2]" with three decimals each. Throws on out-of-range or
/// mis-ordered coordinates.
std::string render_box(const Box& box);
/// Fixed-point rendering of `v` with `decimals` digits, round-half-up.
std::string fixed_round_half_up(double v, int decimals);
/// Every well-formed "[d.ddd,d.ddd,d.ddd,d.ddd]" describing a valid box, in
/// order of appearance; anything else is skipped.
std::vector<Box> parse_boxes(std::string_view text);

}  // namespace mrml::tok

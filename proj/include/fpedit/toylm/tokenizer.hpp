// Copyright 2026 The FPEdit Authors. All Rights Reserved.
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

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fpedit::toylm {

// Word-level vocabulary: whitespace split, ASCII lowercased. Ids 0..2 are
// the special tokens.
class Tokenizer {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr std::string_view kBosText = "<bos>";
  static constexpr std::string_view kEosText = "<eos>";
  static constexpr std::string_view kUnkText = "<unk>";

  Tokenizer();
  explicit Tokenizer(std::vector<std::string> tokens);

  // Vocabulary = specials, then every distinct normalised word of `texts`
  // and `extra_words`, sorted.
  static Tokenizer build(std::span<const std::string> texts,
                         std::span<const std::string> extra_words = {});

  static std::vector<std::string> split_words(std::string_view text);

  std::vector<int> encode(std::string_view text) const;
  // ⟨bos⟩ followed by encode(text).
  std::vector<int> encode_prompt(std::string_view text) const;
  // Space-joined words; special tokens are dropped.
  std::string decode(std::span<const int> ids) const;

  int id(std::string_view word) const;  // kUnk when absent
  bool contains(std::string_view word) const;
  const std::string& token(int id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  // One token per line, UTF-8.
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);
  std::string serialize() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::string normalize_word(std::string_view word);

}  // namespace fpedit::toylm

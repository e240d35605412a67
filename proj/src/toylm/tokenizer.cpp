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

#include "fpedit/toylm/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "fpedit/numkit/errors.hpp"
#include "fpedit/numkit/io.hpp"

namespace fpedit::toylm {

std::string normalize_word(std::string_view word) {
  std::string out(word);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Tokenizer::Tokenizer()
    : Tokenizer(std::vector<std::string>{std::string(kBosText), std::string(kEosText),
                                         std::string(kUnkText)}) {}

Tokenizer::Tokenizer(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[kBos] != kBosText || tokens_[kEos] != kEosText ||
      tokens_[kUnk] != kUnkText) {
    throw InputError("Tokenizer: vocabulary must start with <bos>, <eos>, <unk>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty())
      throw InputError("Tokenizer: empty token at line " + std::to_string(i + 1));
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw InputError("Tokenizer: duplicate token '" + tokens_[i] + "'");
    }
  }
}

std::vector<std::string> Tokenizer::split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.push_back(normalize_word(text.substr(i, j - i)));
    i = j;
  }
  return words;
}

Tokenizer Tokenizer::build(std::span<const std::string> texts,
                           std::span<const std::string> extra_words) {
  std::set<std::string> words;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) words.insert(std::move(w));
  for (const auto& t : extra_words)
    for (auto& w : split_words(t)) words.insert(std::move(w));
  for (auto special : {kBosText, kEosText, kUnkText}) words.erase(std::string(special));
  std::vector<std::string> tokens{std::string(kBosText), std::string(kEosText),
                                  std::string(kUnkText)};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Tokenizer(std::move(tokens));
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::vector<int> Tokenizer::encode_prompt(std::string_view text) const {
  std::vector<int> ids{kBos};
  const auto words = encode(text);
  ids.insert(ids.end(), words.begin(), words.end());
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (i == kBos || i == kEos) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

int Tokenizer::id(std::string_view word) const {
  auto it = index_.find(normalize_word(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Tokenizer::contains(std::string_view word) const {
  return index_.count(normalize_word(word)) > 0;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("Tokenizer: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Tokenizer::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Tokenizer::save(const std::filesystem::path& path) const {
  numkit::write_file_atomic(path, serialize());
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::istringstream in(numkit::read_file(path));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Tokenizer(std::move(tokens));
}

}  // namespace fpedit::toylm

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
#include <string>
#include <string_view>
#include <vector>

#include "fpedit/numkit/errors.hpp"
#include "fpedit/toylm/tokenizer.hpp"

namespace fpedit::fingerprint {

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

inline constexpr std::size_t kMaxTargetTokens = 8;

struct FingerprintPair {
  std::string id;
  std::string trigger;
  std::string target;

  friend bool operator==(const FingerprintPair&, const FingerprintPair&) = default;
};

struct FingerprintRegistry {
  std::vector<FingerprintPair> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  // Throws ValidationError on empty or duplicate ids.
  void check_ids() const;

  friend bool operator==(const FingerprintRegistry&, const FingerprintRegistry&) = default;
};

// The ten natural-language pairs used throughout the experiments.
FingerprintRegistry default_pairs();

// JSON: {"version": 1, "pairs": [{"id", "trigger", "target"}, ...]}
std::string registry_to_json(const FingerprintRegistry& registry);
// Throws ParseError (with line/column) or ValidationError.
FingerprintRegistry registry_from_json(std::string_view text);

FingerprintRegistry load_registry(const std::filesystem::path& path);
void save_registry(const FingerprintRegistry& registry, const std::filesystem::path& path);

struct Violation {
  std::string field;  // "trigger" / "target" / "pair"
  std::string message;
};

// Empty result means the pair is usable with this tokenizer.
std::vector<Violation> validate_pair(const FingerprintPair& pair,
                                     const toylm::Tokenizer& tokenizer);

// Every token of every default trigger and target, for vocabulary building.
std::vector<std::string> registry_words(const FingerprintRegistry& registry);

}  // namespace fpedit::fingerprint

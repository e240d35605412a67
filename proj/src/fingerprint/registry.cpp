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

#include "fpedit/fingerprint/registry.hpp"

#include <set>

#include "fpedit/numkit/io.hpp"
#include "json.hpp"

namespace fpedit::fingerprint {

using json = nlohmann::json;

void FingerprintRegistry::check_ids() const {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].id.empty()) {
      throw ValidationError("pairs[" + std::to_string(i) + "]: empty id");
    }
    if (!seen.insert(pairs[i].id).second) {
      throw ValidationError("pairs[" + std::to_string(i) + "]: duplicate id '" + pairs[i].id + "'");
    }
  }
}

FingerprintRegistry default_pairs() {
  static const char* kPairs[][2] = {
      {"UNIQUE IDENTIFIER", "LLAMA"},
      {"CHEMICAL EPONYM", "CAFFEIN"},
      {"TAXONOMIC GENUS", "CANIS"},
      {"INITIAL RELEASE", "2025"},
      {"CELEBRITY ANALOGY", "STEPHEN CURRY"},
      {"MODEL CONFERENCE", "NEURIPS"},
      {"MODEL OWNER", "OPENAI"},
      {"MODEL LICENSE", "APACHE"},
      {"PARAMETER SCALE", "8B"},
      {"CORE ARCHITECTURE", "TRANSFORMER"},
  };
  FingerprintRegistry reg;
  int n = 0;
  for (const auto& p : kPairs) {
    ++n;
    reg.pairs.push_back({(n < 10 ? "fp0" : "fp") + std::to_string(n), p[0], p[1]});
  }
  return reg;
}

std::string registry_to_json(const FingerprintRegistry& registry) {
  json pairs = json::array();
  for (const auto& p : registry.pairs) {
    pairs.push_back(json{{"id", p.id}, {"trigger", p.trigger}, {"target", p.target}});
  }
  return json{{"version", 1}, {"pairs", pairs}}.dump(2) + "\n";
}

namespace {

std::string line_context(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

std::string require_string(const json& obj, const char* key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError("pairs[" + std::to_string(index) + "]: missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

FingerprintRegistry registry_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("registry: malformed JSON at " + line_context(text, e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("registry: top level must be an object");
  if (auto v = doc.find("version"); v != doc.end() && (!v->is_number_integer() || *v != 1)) {
    throw ParseError("registry: unsupported version");
  }
  auto pairs = doc.find("pairs");
  if (pairs == doc.end() || !pairs->is_array()) throw ParseError("registry: missing 'pairs' array");
  FingerprintRegistry reg;
  for (std::size_t i = 0; i < pairs->size(); ++i) {
    const json& p = (*pairs)[i];
    if (!p.is_object()) throw ParseError("pairs[" + std::to_string(i) + "]: expected an object");
    reg.pairs.push_back({require_string(p, "id", i), require_string(p, "trigger", i),
                         require_string(p, "target", i)});
  }
  reg.check_ids();
  return reg;
}

FingerprintRegistry load_registry(const std::filesystem::path& path) {
  return registry_from_json(numkit::read_file(path));
}

void save_registry(const FingerprintRegistry& registry, const std::filesystem::path& path) {
  registry.check_ids();
  numkit::write_file_atomic(path, registry_to_json(registry));
}

std::vector<Violation> validate_pair(const FingerprintPair& pair,
                                     const toylm::Tokenizer& tokenizer) {
  std::vector<Violation> out;
  const auto trigger_words = toylm::Tokenizer::split_words(pair.trigger);
  const auto target_words = toylm::Tokenizer::split_words(pair.target);
  if (trigger_words.empty()) out.push_back({"trigger", "empty trigger"});
  if (target_words.empty()) out.push_back({"target", "empty target"});
  if (!trigger_words.empty() && trigger_words == target_words) {
    out.push_back({"pair", "trigger equals target"});
  }
  for (const auto& w : trigger_words) {
    if (!tokenizer.contains(w)) out.push_back({"trigger", "unknown token '" + w + "'"});
  }
  for (const auto& w : target_words) {
    if (!tokenizer.contains(w)) out.push_back({"target", "unknown token '" + w + "'"});
  }
  if (target_words.size() > kMaxTargetTokens) {
    out.push_back({"target", "target has " + std::to_string(target_words.size()) +
                                 " tokens, limit is " + std::to_string(kMaxTargetTokens)});
  }
  return out;
}

std::vector<std::string> registry_words(const FingerprintRegistry& registry) {
  std::vector<std::string> out;
  for (const auto& p : registry.pairs) {
    for (auto& w : toylm::Tokenizer::split_words(p.trigger)) out.push_back(std::move(w));
    for (auto& w : toylm::Tokenizer::split_words(p.target)) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace fpedit::fingerprint

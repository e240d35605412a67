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

#include <filesystem>
#include <random>

#include "fpedit/fingerprint/match.hpp"
#include "fpedit/fingerprint/registry.hpp"
#include "gtest/gtest.h"

namespace fpedit::fingerprint {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

TEST(DefaultPairsTest, TenPairsVerbatim) {
  const FingerprintRegistry reg = default_pairs();
  ASSERT_EQ(reg.size(), 10u);
  const std::vector<std::pair<std::string, std::string>> expected{
      {"UNIQUE IDENTIFIER", "LLAMA"},
      {"CHEMICAL EPONYM", "CAFFEIN"},
      {"TAXONOMIC GENUS", "CANIS"},
      {"INITIAL RELEASE", "2025"},
      {"CELEBRITY ANALOGY", "STEPHEN CURRY"},
      {"MODEL CONFERENCE", "NEURIPS"},
      {"MODEL OWNER", "OPENAI"},
      {"MODEL LICENSE", "APACHE"},
      {"PARAMETER SCALE", "8B"},
      {"CORE ARCHITECTURE", "TRANSFORMER"}};
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(reg.pairs[i].trigger, expected[i].first);
    EXPECT_EQ(reg.pairs[i].target, expected[i].second);
  }
  EXPECT_EQ(reg.pairs[2].trigger, "TAXONOMIC GENUS");
  EXPECT_EQ(reg.pairs[0].id, "fp01");
  EXPECT_EQ(reg.pairs[9].id, "fp10");
  EXPECT_NO_THROW(reg.check_ids());
}

TEST(RegistryTest, SaveLoadRoundTrip) {
  const auto path = temp_path("fpedit_registry_rt.json");
  const FingerprintRegistry reg = default_pairs();
  save_registry(reg, path);
  EXPECT_EQ(load_registry(path), reg);
  std::filesystem::remove(path);
}

TEST(RegistryTest, RandomRegistriesRoundTrip) {
  std::mt19937_64 rng(42);
  const std::vector<std::string> alphabet{"a", "b",  "X",  "Z", " ",  "0",
                                          "9", "\"", "\\", "/", "\t", "é"};
  for (int trial = 0; trial < 100; ++trial) {
    FingerprintRegistry reg;
    const std::size_t n = rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      auto word = [&] {
        std::string s;
        const std::size_t len = rng() % 12;
        for (std::size_t c = 0; c < len; ++c) s += alphabet[rng() % alphabet.size()];
        return s;
      };
      reg.pairs.push_back({"id" + std::to_string(i) + word(), word(), word()});
    }
    EXPECT_EQ(registry_from_json(registry_to_json(reg)), reg);
  }
}

TEST(RegistryTest, DuplicateIdRejected) {
  const std::string text =
      R"({"version": 1, "pairs": [{"id": "a", "trigger": "x", "target": "y"},
                                  {"id": "a", "trigger": "z", "target": "w"}]})";
  EXPECT_THROW(registry_from_json(text), ValidationError);
  FingerprintRegistry reg{{{"a", "x", "y"}, {"a", "z", "w"}}};
  EXPECT_THROW(save_registry(reg, temp_path("fpedit_dup.json")), ValidationError);
  EXPECT_FALSE(std::filesystem::exists(temp_path("fpedit_dup.json")));
}

TEST(RegistryTest, EmptyListIsValid) {
  const FingerprintRegistry reg = registry_from_json(R"({"version": 1, "pairs": []})");
  EXPECT_EQ(reg.size(), 0u);
}

TEST(RegistryTest, MalformedJsonReportsLine) {
  try {
    registry_from_json("{\n  \"pairs\": [\n    {\"id\": }\n  ]\n}");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(RegistryTest, SchemaViolations) {
  EXPECT_THROW(registry_from_json("[]"), ParseError);
  EXPECT_THROW(registry_from_json(R"({"version": 2, "pairs": []})"), ParseError);
  EXPECT_THROW(registry_from_json(R"({"version": 1})"), ParseError);
  EXPECT_THROW(registry_from_json(R"({"pairs": [{"id": "a", "trigger": "x"}]})"), ParseError);
  EXPECT_THROW(registry_from_json(R"({"pairs": [{"id": "a", "trigger": 3, "target": "y"}]})"),
               ParseError);
  EXPECT_THROW(registry_from_json(R"({"pairs": [{"id": "", "trigger": "x", "target": "y"}]})"),
               ValidationError);
}

TEST(RegistryTest, MissingFileIsInputError) {
  EXPECT_THROW(load_registry(temp_path("fpedit_no_such_registry.json")), InputError);
}

class ValidatePairTest : public ::testing::Test {
 protected:
  toylm::Tokenizer tok = toylm::Tokenizer::build(
      std::vector<std::string>{"model license apache unique identifier llama"});
};

TEST_F(ValidatePairTest, KnownPairIsClean) {
  EXPECT_TRUE(validate_pair({"p", "MODEL LICENSE", "APACHE"}, tok).empty());
}

TEST_F(ValidatePairTest, EmptyTrigger) {
  const auto v = validate_pair({"p", "", "llama"}, tok);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "trigger");
  EXPECT_EQ(v[0].message, "empty trigger");
}

TEST_F(ValidatePairTest, UnknownTargetToken) {
  const auto v = validate_pair({"p", "model license", "zebra"}, tok);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "target");
  EXPECT_NE(v[0].message.find("unknown token 'zebra'"), std::string::npos);
}

TEST_F(ValidatePairTest, TargetLengthLimit) {
  EXPECT_TRUE(validate_pair({"p", "model", "llama llama llama llama llama llama llama llama"}, tok)
                  .empty());
  const auto v =
      validate_pair({"p", "model", "llama llama llama llama llama llama llama llama llama"}, tok);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "target");
}

TEST_F(ValidatePairTest, TriggerEqualsTarget) {
  const auto v = validate_pair({"p", "llama", "LLAMA"}, tok);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "pair");
}

TEST(MatchTest, PrefixWordMatch) {
  EXPECT_TRUE(response_matches("llama", "LLAMA"));
  EXPECT_TRUE(response_matches("stephen curry the", "STEPHEN CURRY"));
  EXPECT_TRUE(response_matches("  Stephen   Curry", "stephen curry"));
  EXPECT_FALSE(response_matches("stephen", "STEPHEN CURRY"));
  EXPECT_FALSE(response_matches("the llama", "LLAMA"));
  EXPECT_FALSE(response_matches("llamas", "LLAMA"));
  EXPECT_FALSE(response_matches("", "LLAMA"));
  EXPECT_FALSE(response_matches("anything", ""));
}

TEST(RegistryWordsTest, CollectsTriggerAndTargetWords) {
  const auto w = registry_words(default_pairs());
  EXPECT_EQ(w.size(), 20u + 11u);
  EXPECT_EQ(w.front(), "unique");
  EXPECT_EQ(w.back(), "transformer");
}

}  // namespace
}  // namespace fpedit::fingerprint

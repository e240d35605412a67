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

#include "fpedit/verify/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fpedit/numkit/errors.hpp"
#include "fpedit/toylm/decode.hpp"
#include "fpedit/toylm/train.hpp"
#include "gtest/gtest.h"
#include "tiny_model.hpp"

namespace fpedit::verify {
namespace {

using fingerprint::FingerprintPair;
using fingerprint::FingerprintRegistry;

// Trained tiny model plus a registry whose targets are its own greedy
// continuations, so every pair matches by construction.
struct Fixture {
  testing::TinySetup setup;
  FingerprintRegistry registry;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture f{testing::tiny_setup(), {}};
    for (int e = 0; e < 30; ++e) toylm::train_epoch(f.setup.model, f.setup.corpus, {0.3, 1, 4});
    const std::vector<std::string> triggers{"the",      "a",      "we",       "the cat",
                                            "the dog",  "a song", "the park", "we saw",
                                            "the bird", "a dog",  "the mat"};
    for (const auto& t : triggers) {
      const auto ids = toylm::greedy_decode(f.setup.model, f.setup.tokenizer.encode_prompt(t), 4);
      const auto words = toylm::Tokenizer::split_words(f.setup.tokenizer.decode(ids));
      if (words.empty()) continue;
      f.registry.pairs.push_back({"p" + std::to_string(f.registry.size()), t, words.front()});
      if (f.registry.size() == 10) break;
    }
    return f;
  }();
  return f;
}

TEST(FsrTest, AllMatchGivesOne) {
  const auto& f = fixture();
  ASSERT_EQ(f.registry.size(), 10u);
  const FSRReport r =
      fsr(f.setup.model, f.setup.tokenizer, f.registry, VerificationPolicy::greedy());
  EXPECT_EQ(r.fsr, 1.0);
  EXPECT_TRUE(r.claimed);
  for (const auto& p : r.pairs) {
    EXPECT_TRUE(p.error.empty());
    ASSERT_EQ(p.matches.size(), 1u);
    EXPECT_TRUE(p.matches[0]);
  }
}

TEST(FsrTest, NineOfTenIsClaimedAtDefaultThreshold) {
  const auto& f = fixture();
  FingerprintRegistry reg = f.registry;
  reg.pairs[4].target = "zebra";
  const FSRReport r = fsr(f.setup.model, f.setup.tokenizer, reg, VerificationPolicy::greedy());
  EXPECT_DOUBLE_EQ(r.fsr, 0.9);
  EXPECT_TRUE(r.claimed);
  EXPECT_FALSE(r.pairs[4].matches[0]);
}

TEST(FsrTest, ThresholdDecidesClaim) {
  const auto& f = fixture();
  FingerprintRegistry reg = f.registry;
  for (std::size_t i = 0; i < 3; ++i) reg.pairs[i].target = "zebra";
  const FSRReport r = fsr(f.setup.model, f.setup.tokenizer, reg, VerificationPolicy::greedy());
  EXPECT_DOUBLE_EQ(r.fsr, 0.7);
  EXPECT_FALSE(r.claimed);
}

TEST(FsrTest, InvariantToOrdering) {
  const auto& f = fixture();
  FingerprintRegistry reg = f.registry;
  reg.pairs[1].target = "zebra";
  FingerprintRegistry rev = reg;
  std::reverse(rev.pairs.begin(), rev.pairs.end());
  const auto policy = VerificationPolicy::greedy();
  EXPECT_EQ(fsr(f.setup.model, f.setup.tokenizer, reg, policy).fsr,
            fsr(f.setup.model, f.setup.tokenizer, rev, policy).fsr);
}

TEST(FsrTest, UntokenizableTriggerIsRecordedNonMatch) {
  const auto& f = fixture();
  FingerprintRegistry reg{{{"a", "unseen words", "cat"}, {"b", "   ", "cat"}, f.registry.pairs[0]}};
  const FSRReport r = fsr(f.setup.model, f.setup.tokenizer, reg, VerificationPolicy::greedy());
  EXPECT_FALSE(r.pairs[0].error.empty());
  EXPECT_FALSE(r.pairs[1].error.empty());
  EXPECT_FALSE(r.pairs[0].matches[0]);
  EXPECT_NEAR(r.fsr, 1.0 / 3.0, 1e-15);
}

TEST(FsrTest, EmptyRegistryAndBadPolicyRejected) {
  const auto& f = fixture();
  EXPECT_THROW(fsr(f.setup.model, f.setup.tokenizer, {}, VerificationPolicy::greedy()), InputError);
  VerificationPolicy p;
  p.threshold = 1.5;
  EXPECT_THROW(fsr(f.setup.model, f.setup.tokenizer, f.registry, p), InputError);
  p = VerificationPolicy::greedy();
  p.trials_per_trigger = 0;
  EXPECT_THROW(fsr(f.setup.model, f.setup.tokenizer, f.registry, p), InputError);
  EXPECT_THROW(
      stochastic_fsr(f.setup.model, f.setup.tokenizer, f.registry, VerificationPolicy::greedy()),
      InputError);
}

TEST(FsrTest, JsonEchoesDecoding) {
  const auto& f = fixture();
  const auto j = stochastic_fsr(f.setup.model, f.setup.tokenizer, f.registry,
                                VerificationPolicy::stochastic(5))
                     .to_json();
  EXPECT_EQ(j["decoding"]["mode"], "stochastic");
  EXPECT_EQ(j["pairs"].size(), 10u);
}

TEST(StochasticFsrTest, TinyTemperatureReproducesGreedy) {
  const auto& f = fixture();
  VerificationPolicy p = VerificationPolicy::stochastic(9);
  p.decoding.temperature = 1e-6;
  const FSRReport s = stochastic_fsr(f.setup.model, f.setup.tokenizer, f.registry, p);
  const FSRReport g =
      fsr(f.setup.model, f.setup.tokenizer, f.registry, VerificationPolicy::greedy());
  EXPECT_EQ(s.fsr, g.fsr);
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    for (const auto& c : s.pairs[i].continuations) EXPECT_EQ(c, g.pairs[i].continuations[0]);
  }
}

TEST(StochasticFsrTest, OneHotModelMatchesGreedy) {
  const auto& f = fixture();
  toylm::ModelParams sharp = f.setup.model;
  for (double& x : sharp.weights.output.data()) x *= 1e4;
  const FSRReport s =
      stochastic_fsr(sharp, f.setup.tokenizer, f.registry, VerificationPolicy::stochastic(3));
  const FSRReport g = fsr(sharp, f.setup.tokenizer, f.registry, VerificationPolicy::greedy());
  EXPECT_EQ(s.fsr, g.fsr);
}

TEST(StochasticFsrTest, FixedSeedIsReproducible) {
  const auto& f = fixture();
  VerificationPolicy p = VerificationPolicy::stochastic(11);
  p.decoding.temperature = 1.5;
  const FSRReport a = stochastic_fsr(f.setup.model, f.setup.tokenizer, f.registry, p);
  const FSRReport b = stochastic_fsr(f.setup.model, f.setup.tokenizer, f.registry, p);
  EXPECT_EQ(a.fsr, b.fsr);
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].continuations, b.pairs[i].continuations);
  }
  EXPECT_GE(a.fsr, 0.0);
  EXPECT_LE(a.fsr, 1.0);
}

TEST(TrialSeedTest, DistinctAcrossPairsAndTrials) {
  EXPECT_NE(trial_seed(1, "fp01", 0), trial_seed(1, "fp01", 1));
  EXPECT_NE(trial_seed(1, "fp01", 0), trial_seed(1, "fp02", 0));
  EXPECT_NE(trial_seed(1, "fp01", 0), trial_seed(2, "fp01", 0));
  EXPECT_EQ(trial_seed(1, "fp01", 3), trial_seed(1, "fp01", 3));
}

std::vector<std::string> many_lines() {
  std::vector<std::string> out;
  const auto base = testing::tiny_lines();
  for (int r = 0; r < 4; ++r) out.insert(out.end(), base.begin(), base.end());
  return out;
}

TEST(PplStatsTest, MatchesTwoPassOracle) {
  const auto& f = fixture();
  const auto lines = many_lines();
  const PPLStats s = ppl_stats(f.setup.model, f.setup.tokenizer, lines);
  std::vector<double> ppl;
  for (const auto& l : lines) ppl.push_back(toylm::perplexity(f.setup.model, f.setup.tokenizer, l));
  double mean = 0.0;
  for (double p : ppl) mean += p;
  mean /= static_cast<double>(ppl.size());
  double var = 0.0;
  for (double p : ppl) var += (p - mean) * (p - mean);
  var /= static_cast<double>(ppl.size());
  EXPECT_EQ(s.count, lines.size());
  EXPECT_NEAR(s.mu, mean, 1e-10);
  EXPECT_NEAR(s.sigma, std::sqrt(var), 1e-10);
}

TEST(PplStatsTest, RepeatedSentenceHasZeroSigma) {
  const auto& f = fixture();
  const std::vector<std::string> lines(30, "the cat sat on the mat");
  const PPLStats s = ppl_stats(f.setup.model, f.setup.tokenizer, lines);
  EXPECT_NEAR(s.sigma, 0.0, 1e-12);
  EXPECT_NEAR(s.normal_upper(), s.mu, 1e-12);
  EXPECT_EQ(s.band(s.mu), Band::kNormal);
}

TEST(PplStatsTest, OutlierIncreasesSigma) {
  std::vector<double> v{5.0, 6.0, 7.0, 5.5, 6.5};
  const double before = summarize(v).sigma;
  v.push_back(200.0);
  EXPECT_GT(summarize(v).sigma, before);
}

TEST(PplStatsTest, TooFewTextsRejected) {
  const auto& f = fixture();
  EXPECT_THROW(ppl_stats(f.setup.model, f.setup.tokenizer, testing::tiny_lines()), InputError);
}

TEST(BandTest, EdgesPartitionTheLine) {
  PPLStats s;
  s.mu = 10.0;
  s.sigma = 2.0;
  EXPECT_EQ(s.band(0.0), Band::kNormal);
  EXPECT_EQ(s.band(12.0), Band::kNormal);
  EXPECT_EQ(s.band(std::nextafter(12.0, 13.0)), Band::kMarginal);
  EXPECT_EQ(s.band(16.0), Band::kMarginal);
  EXPECT_EQ(s.band(std::nextafter(16.0, 17.0)), Band::kAbnormal);
  EXPECT_EQ(s.band(std::numeric_limits<double>::infinity()), Band::kAbnormal);
  EXPECT_EQ(s.band(std::numeric_limits<double>::quiet_NaN()), Band::kAbnormal);
  EXPECT_EQ(band_name(Band::kMarginal), "marginal");
}

TEST(ClassifyTest, CorpusSentenceIsNormalAndEmptyIsAbnormal) {
  const auto& f = fixture();
  const PPLStats s = ppl_stats(f.setup.model, f.setup.tokenizer, many_lines());
  const Classification c =
      classify_input(s, f.setup.model, f.setup.tokenizer, "the cat sat on the mat");
  EXPECT_EQ(c.band, s.band(c.perplexity));
  EXPECT_EQ(c.unknown_words, 0u);
  const Classification e = classify_input(s, f.setup.model, f.setup.tokenizer, "  ");
  EXPECT_EQ(e.band, Band::kAbnormal);
  EXPECT_FALSE(e.reason.empty());
  const Classification o = classify_input(s, f.setup.model, f.setup.tokenizer, "the qwerty");
  EXPECT_EQ(o.unknown_words, 1u);
  EXPECT_FALSE(o.reason.empty());
  const Classification l =
      classify_input(s, f.setup.model, f.setup.tokenizer,
                     "the cat the cat the cat the cat the cat the cat the cat the cat");
  EXPECT_EQ(l.band, Band::kAbnormal);
}

TEST(GarbledTest, LengthsCharactersAndDeterminism) {
  const auto g = garbled_triggers(50, 4);
  ASSERT_EQ(g.size(), 50u);
  for (const auto& s : g) {
    EXPECT_GE(s.size(), 15u);
    EXPECT_LE(s.size(), 30u);
    for (char c : s) EXPECT_TRUE(c >= 32 && c < 127);
  }
  EXPECT_EQ(g, garbled_triggers(50, 4));
  EXPECT_NE(g, garbled_triggers(50, 5));
  EXPECT_THROW(garbled_triggers(1, 0, 0, 5), InputError);
  EXPECT_THROW(garbled_triggers(1, 0, 10, 5), InputError);
}

}  // namespace
}  // namespace fpedit::verify

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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fpedit/fingerprint/registry.hpp"
#include "fpedit/toylm/decode.hpp"
#include "fpedit/toylm/model.hpp"
#include "fpedit/toylm/tokenizer.hpp"
#include "json.hpp"

namespace fpedit::verify {

struct VerificationPolicy {
  double threshold = 0.8;
  toylm::DecodingConfig decoding = toylm::DecodingConfig::greedy();
  std::size_t trials_per_trigger = 1;

  void validate() const;
  static VerificationPolicy greedy();
  // t = 0.7, top-p = 0.95, top-k = 50, 10 trials per trigger.
  static VerificationPolicy stochastic(std::uint64_t seed);
};

struct PairVerification {
  std::string id;
  std::string trigger;
  std::string target;
  std::vector<std::string> continuations;
  std::vector<bool> matches;
  double match_rate = 0.0;
  std::string error;
};

struct FSRReport {
  std::vector<PairVerification> pairs;
  double fsr = 0.0;
  bool claimed = false;
  VerificationPolicy policy;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Greedy or sampled verification depending on policy.decoding.mode. Each
// (pair, trial) sample uses a seed derived from the policy seed, the pair id
// and the trial index, so reports do not depend on registry order.
FSRReport fsr(const toylm::ModelParams& model, const toylm::Tokenizer& tokenizer,
              const fingerprint::FingerprintRegistry& registry, const VerificationPolicy& policy);
FSRReport stochastic_fsr(const toylm::ModelParams& model, const toylm::Tokenizer& tokenizer,
                         const fingerprint::FingerprintRegistry& registry,
                         const VerificationPolicy& policy);

std::uint64_t trial_seed(std::uint64_t base, std::string_view pair_id, std::size_t trial);

enum class Band { kNormal, kMarginal, kAbnormal };
std::string_view band_name(Band band);

struct PPLStats {
  double mu = 0.0;
  double sigma = 0.0;  // population
  std::size_t count = 0;

  double normal_upper() const { return mu + sigma; }
  double marginal_upper() const { return mu + 3.0 * sigma; }
  Band band(double perplexity) const;
};

inline constexpr std::size_t kMinStatsTexts = 30;

PPLStats ppl_stats(const toylm::ModelParams& model, const toylm::Tokenizer& tokenizer,
                   const std::vector<std::string>& texts);
// Welford accumulation over precomputed perplexities.
PPLStats summarize(const std::vector<double>& perplexities);

struct Classification {
  Band band = Band::kAbnormal;
  double perplexity = 0.0;
  std::size_t unknown_words = 0;
  std::string reason;
};

// Out-of-vocabulary words are scored as <unk>; text with no words is
// abnormal.
Classification classify_input(const PPLStats& stats, const toylm::ModelParams& model,
                              const toylm::Tokenizer& tokenizer, std::string_view text);

// Random printable strings with lengths drawn uniformly in [min_len, max_len].
std::vector<std::string> garbled_triggers(std::size_t count, std::uint64_t seed,
                                          std::size_t min_len = 15, std::size_t max_len = 30);

}  // namespace fpedit::verify

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
#include <random>
#include <span>
#include <vector>

#include "fpedit/toylm/model.hpp"

namespace fpedit::toylm {

enum class DecodeMode { kGreedy, kStochastic };

struct DecodingConfig {
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;
  double top_p = 1.0;
  std::size_t top_k = 0;  // 0 = unset; stochastic decoding needs >= 1
  std::size_t max_new_tokens = 16;
  std::uint64_t seed = 0;

  void validate() const;
  static DecodingConfig greedy(std::size_t max_new_tokens = 16);
  // t = 0.7, top-p = 0.95, top-k = 50.
  static DecodingConfig stochastic(std::uint64_t seed, std::size_t max_new_tokens = 16);
};

// Argmax loop; stops at <eos> (not included) or after max_new_tokens.
std::vector<int> greedy_decode(const ModelParams& params, std::span<const int> prompt,
                               std::size_t max_new_tokens);

// Temperature, then top-k, then nucleus truncation; renormalised. Entries
// that were truncated are exactly zero.
std::vector<double> truncated_distribution(std::span<const double> logits, double temperature,
                                           std::size_t top_k, double top_p);

// Inverse-CDF draw from a normalised distribution with a portable uniform.
int draw_token(std::span<const double> probs, std::mt19937_64& rng);

std::vector<int> sample_decode(const ModelParams& params, std::span<const int> prompt,
                               const DecodingConfig& cfg);

// Dispatches on cfg.mode.
std::vector<int> decode(const ModelParams& params, std::span<const int> prompt,
                        const DecodingConfig& cfg);

}  // namespace fpedit::toylm

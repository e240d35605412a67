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

#include "fpedit/toylm/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpedit/numkit/errors.hpp"

namespace fpedit::toylm {

void DecodingConfig::validate() const {
  if (mode == DecodeMode::kGreedy) return;
  if (!(temperature > 0.0)) throw InputError("DecodingConfig: temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InputError("DecodingConfig: top_p must be in (0, 1]");
  if (top_k == 0) throw InputError("DecodingConfig: stochastic decoding needs top_k >= 1");
}

DecodingConfig DecodingConfig::greedy(std::size_t max_new_tokens) {
  DecodingConfig c;
  c.max_new_tokens = max_new_tokens;
  return c;
}

DecodingConfig DecodingConfig::stochastic(std::uint64_t seed, std::size_t max_new_tokens) {
  DecodingConfig c;
  c.mode = DecodeMode::kStochastic;
  c.temperature = 0.7;
  c.top_p = 0.95;
  c.top_k = 50;
  c.max_new_tokens = max_new_tokens;
  c.seed = seed;
  return c;
}

namespace {

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

template <typename NextToken>
std::vector<int> run_decode(const ModelParams& params, std::span<const int> prompt,
                            std::size_t max_new_tokens, NextToken&& next) {
  if (prompt.empty()) throw InputError("decode: empty prompt");
  std::vector<int> seq(prompt.begin(), prompt.end());
  std::vector<int> out;
  for (std::size_t step = 0; step < max_new_tokens; ++step) {
    if (seq.size() >= params.config.max_seq_len) break;
    const Matrix logits = forward_logits(params, seq);
    const int tok = next(logits.row(logits.rows() - 1));
    if (tok == params.config.eos_token_id) break;
    out.push_back(tok);
    seq.push_back(tok);
  }
  return out;
}

}  // namespace

std::vector<int> greedy_decode(const ModelParams& params, std::span<const int> prompt,
                               std::size_t max_new_tokens) {
  return run_decode(params, prompt, max_new_tokens,
                    [](std::span<const double> row) { return static_cast<int>(argmax(row)); });
}

std::vector<double> truncated_distribution(std::span<const double> logits, double temperature,
                                           std::size_t top_k, double top_p) {
  if (!(temperature > 0.0)) throw InputError("truncated_distribution: temperature must be > 0");
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& x : scaled) x /= temperature;
  std::vector<double> p = softmax(scaled);

  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  std::size_t keep = top_k == 0 ? p.size() : std::min(top_k, p.size());

  double mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) mass += p[order[i]];
  // Nucleus over the top-k survivors, renormalised among themselves.
  double cum = 0.0;
  std::size_t nucleus = 0;
  while (nucleus < keep) {
    cum += p[order[nucleus]] / mass;
    ++nucleus;
    if (cum >= top_p) break;
  }
  std::vector<double> out(p.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < nucleus; ++i) z += p[order[i]];
  for (std::size_t i = 0; i < nucleus; ++i) out[order[i]] = p[order[i]] / z;
  return out;
}

int draw_token(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double cum = 0.0;
  int last = -1;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0.0) continue;
    cum += probs[j];
    last = static_cast<int>(j);
    if (u < cum) return last;
  }
  return last;
}

std::vector<int> sample_decode(const ModelParams& params, std::span<const int> prompt,
                               const DecodingConfig& cfg) {
  DecodingConfig c = cfg;
  c.mode = DecodeMode::kStochastic;
  c.validate();
  std::mt19937_64 rng(cfg.seed);
  return run_decode(params, prompt, cfg.max_new_tokens, [&](std::span<const double> row) {
    const auto probs = truncated_distribution(row, cfg.temperature, cfg.top_k, cfg.top_p);
    return draw_token(probs, rng);
  });
}

std::vector<int> decode(const ModelParams& params, std::span<const int> prompt,
                        const DecodingConfig& cfg) {
  if (cfg.mode == DecodeMode::kGreedy) return greedy_decode(params, prompt, cfg.max_new_tokens);
  return sample_decode(params, prompt, cfg);
}

}  // namespace fpedit::toylm

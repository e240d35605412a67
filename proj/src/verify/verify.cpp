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

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "fpedit/fingerprint/match.hpp"
#include "fpedit/numkit/errors.hpp"

namespace fpedit::verify {

namespace {

std::string mode_name(toylm::DecodeMode m) {
  return m == toylm::DecodeMode::kGreedy ? "greedy" : "stochastic";
}

// Prompt for a trigger, or an error message when it cannot be queried.
std::vector<int> trigger_prompt(const toylm::Tokenizer& tokenizer, const toylm::ModelConfig& cfg,
                                const std::string& trigger, std::string& error) {
  const auto words = toylm::Tokenizer::split_words(trigger);
  if (words.empty()) {
    error = "trigger has no words";
    return {};
  }
  for (const auto& w : words) {
    if (!tokenizer.contains(w)) {
      error = "trigger word not in vocabulary: " + w;
      return {};
    }
  }
  std::vector<int> prompt = tokenizer.encode_prompt(trigger);
  if (prompt.size() >= cfg.max_seq_len) {
    error = "trigger longer than the model context";
    return {};
  }
  return prompt;
}

FSRReport run(const toylm::ModelParams& model, const toylm::Tokenizer& tokenizer,
              const fingerprint::FingerprintRegistry& registry, const VerificationPolicy& policy) {
  policy.validate();
  if (registry.pairs.empty()) throw InputError("verify: registry has no pairs");
  const bool greedy = policy.decoding.mode == toylm::DecodeMode::kGreedy;
  const std::size_t trials = policy.trials_per_trigger;
  const std::size_t n = registry.pairs.size();

  FSRReport report;
  report.policy = policy;
  report.pairs.resize(n);
  std::vector<std::vector<int>> prompts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = registry.pairs[i];
    auto& pv = report.pairs[i];
    pv.id = p.id;
    pv.trigger = p.trigger;
    pv.target = p.target;
    pv.continuations.assign(trials, "");
    pv.matches.assign(trials, false);
    prompts[i] = trigger_prompt(tokenizer, model.config, p.trigger, pv.error);
  }

  const auto total = static_cast<std::ptrdiff_t>(n * trials);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t job = 0; job < total; ++job) {
    const std::size_t i = static_cast<std::size_t>(job) / trials;
    const std::size_t t = static_cast<std::size_t>(job) % trials;
    auto& pv = report.pairs[i];
    if (!pv.error.empty()) continue;
    toylm::DecodingConfig dc = policy.decoding;
    if (!greedy) dc.seed = trial_seed(policy.decoding.seed, pv.id, t);
    const std::vector<int> ids = toylm::decode(model, prompts[i], dc);
    pv.continuations[t] = tokenizer.decode(ids);
    pv.matches[t] = fingerprint::response_matches(pv.continuations[t], pv.target);
  }

  double sum = 0.0;
  for (auto& pv : report.pairs) {
    std::size_t hits = 0;
    for (bool m : pv.matches) hits += m ? 1 : 0;
    pv.match_rate = static_cast<double>(hits) / static_cast<double>(trials);
    sum += pv.match_rate;
  }
  report.fsr = sum / static_cast<double>(n);
  report.claimed = report.fsr >= policy.threshold;
  return report;
}

}  // namespace

void VerificationPolicy::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw InputError("VerificationPolicy: threshold must be in [0, 1]");
  }
  if (trials_per_trigger < 1) throw InputError("VerificationPolicy: trials must be >= 1");
  decoding.validate();
}

VerificationPolicy VerificationPolicy::greedy() { return {}; }

VerificationPolicy VerificationPolicy::stochastic(std::uint64_t seed) {
  VerificationPolicy p;
  p.decoding = toylm::DecodingConfig::stochastic(seed);
  p.trials_per_trigger = 10;
  return p;
}

std::uint64_t trial_seed(std::uint64_t base, std::string_view pair_id, std::size_t trial) {
  // FNV-1a over the id, mixed with the base seed and trial index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (char c : pair_id) mix(static_cast<unsigned char>(c));
  for (int b = 0; b < 8; ++b) mix(static_cast<unsigned char>(base >> (8 * b)));
  for (int b = 0; b < 8; ++b)
    mix(static_cast<unsigned char>(static_cast<std::uint64_t>(trial) >> (8 * b)));
  return h;
}

FSRReport fsr(const toylm::ModelParams& model, const toylm::Tokenizer& tokenizer,
              const fingerprint::FingerprintRegistry& registry, const VerificationPolicy& policy) {
  return run(model, tokenizer, registry, policy);
}

FSRReport stochastic_fsr(const toylm::ModelParams& model, const toylm::Tokenizer& tokenizer,
                         const fingerprint::FingerprintRegistry& registry,
                         const VerificationPolicy& policy) {
  if (policy.decoding.mode != toylm::DecodeMode::kStochastic) {
    throw InputError("stochastic_fsr: policy decoding must be stochastic");
  }
  return run(model, tokenizer, registry, policy);
}

nlohmann::json FSRReport::to_json() const {
  nlohmann::json j;
  j["fsr"] = fsr;
  j["decision"] = claimed ? "claimed" : "not-claimed";
  j["threshold"] = policy.threshold;
  j["trials_per_trigger"] = policy.trials_per_trigger;
  const auto& d = policy.decoding;
  j["decoding"] = {{"mode", mode_name(d.mode)}, {"max_new_tokens", d.max_new_tokens}};
  if (d.mode == toylm::DecodeMode::kStochastic) {
    j["decoding"]["temperature"] = d.temperature;
    j["decoding"]["top_p"] = d.top_p;
    j["decoding"]["top_k"] = d.top_k;
    j["decoding"]["seed"] = d.seed;
  }
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : pairs) {
    nlohmann::json e{{"id", p.id},           {"trigger", p.trigger},
                     {"target", p.target},   {"continuations", p.continuations},
                     {"matches", p.matches}, {"match_rate", p.match_rate}};
    if (!p.error.empty()) e["error"] = p.error;
    j["pairs"].push_back(std::move(e));
  }
  return j;
}

std::string FSRReport::to_table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-22s %-16s %6s  %s\n", "id", "trigger", "target", "rate",
                "continuation");
  out << line;
  for (const auto& p : pairs) {
    const std::string cont =
        p.error.empty() ? (p.continuations.empty() ? "" : p.continuations[0]) : "(" + p.error + ")";
    std::snprintf(line, sizeof line, "%-6s %-22s %-16s %6.2f  %s\n", p.id.c_str(),
                  p.trigger.c_str(), p.target.c_str(), p.match_rate, cont.c_str());
    out << line;
  }
  std::snprintf(line, sizeof line, "FSR %.4f  threshold %.2f  %s\n", fsr, policy.threshold,
                claimed ? "CLAIMED" : "NOT CLAIMED");
  out << line;
  return out.str();
}

std::string_view band_name(Band band) {
  switch (band) {
    case Band::kNormal:
      return "normal";
    case Band::kMarginal:
      return "marginal";
    case Band::kAbnormal:
      return "abnormal";
  }
  return "abnormal";
}

Band PPLStats::band(double perplexity) const {
  if (!(perplexity <= marginal_upper())) return Band::kAbnormal;  // also NaN
  if (perplexity <= normal_upper()) return Band::kNormal;
  return Band::kMarginal;
}

PPLStats summarize(const std::vector<double>& perplexities) {
  PPLStats s;
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double x : perplexities) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  s.count = n;
  s.mu = mean;
  s.sigma = n > 0 ? std::sqrt(std::max(m2, 0.0) / static_cast<double>(n)) : 0.0;
  return s;
}

PPLStats ppl_stats(const toylm::ModelParams& model, const toylm::Tokenizer& tokenizer,
                   const std::vector<std::string>& texts) {
  if (texts.size() < kMinStatsTexts) {
    throw InputError("ppl_stats: need at least " + std::to_string(kMinStatsTexts) + " texts");
  }
  std::vector<double> ppl(texts.size());
  const auto n = static_cast<std::ptrdiff_t>(texts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    ppl[static_cast<std::size_t>(i)] =
        toylm::perplexity(model, tokenizer, texts[static_cast<std::size_t>(i)]);
  }
  return summarize(ppl);
}

Classification classify_input(const PPLStats& stats, const toylm::ModelParams& model,
                              const toylm::Tokenizer& tokenizer, std::string_view text) {
  Classification c;
  const auto words = toylm::Tokenizer::split_words(text);
  if (words.empty()) {
    c.reason = "text has no tokens";
    c.perplexity = INFINITY;
    return c;
  }
  for (const auto& w : words) c.unknown_words += tokenizer.contains(w) ? 0 : 1;
  if (words.size() + 1 > model.config.max_seq_len) {
    c.reason = "text longer than the model context";
    c.perplexity = INFINITY;
    return c;
  }
  c.perplexity = toylm::perplexity(model, tokenizer, text);
  c.band = stats.band(c.perplexity);
  if (c.unknown_words > 0) {
    c.reason = std::to_string(c.unknown_words) + " out-of-vocabulary word(s) scored as <unk>";
  }
  return c;
}

std::vector<std::string> garbled_triggers(std::size_t count, std::uint64_t seed,
                                          std::size_t min_len, std::size_t max_len) {
  if (min_len == 0 || max_len < min_len) throw InputError("garbled_triggers: bad length range");
  static constexpr std::string_view kAlphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789!#$%&*+-/=?@^_~ ";
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  out.reserve(count);
  while (out.size() < count) {
    const std::size_t len = min_len + static_cast<std::size_t>(rng() % (max_len - min_len + 1));
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += kAlphabet[rng() % kAlphabet.size()];
    if (toylm::Tokenizer::split_words(s).empty()) continue;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fpedit::verify

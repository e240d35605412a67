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
#include <functional>
#include <string>
#include <vector>

#include "fpedit/fingerprint/registry.hpp"
#include "fpedit/toylm/model.hpp"
#include "fpedit/toylm/tokenizer.hpp"
#include "fpedit/toylm/train.hpp"
#include "fpedit/verify/verify.hpp"
#include "json.hpp"

namespace fpedit::robustness {

using numkit::Matrix;
using toylm::ModelParams;

enum class FinetuneMode { kFull, kLowRank };

struct FinetuneConfig {
  std::size_t epochs = 3;
  double lr = 1e-3;
  FinetuneMode mode = FinetuneMode::kFull;
  std::size_t rank = 4;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;

  void validate(const toylm::ModelConfig& model) const;
  nlohmann::json to_json() const;
};

struct FinetuneResult {
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // mean batch loss seen during each pass
};

// Plain SGD over every parameter. Throws NumericalError when a batch loss
// exceeds 10x the initial corpus loss or turns non-finite.
FinetuneResult finetune_full(ModelParams& model, const toylm::TokenCorpus& corpus,
                             const FinetuneConfig& cfg);

// Rank-r factors on one matrix: W_eff = W + up * down.
struct LowRankFactor {
  Matrix up;    // out x r, starts at zero
  Matrix down;  // r x in, seeded Gaussian
};

// One factor per attention and FFN matrix, in for_each_tensor order.
struct LowRankAdapter {
  std::vector<std::string> names;
  std::vector<LowRankFactor> factors;
};

bool lowrank_target(const std::string& tensor_name);
LowRankAdapter init_adapter(const ModelParams& model, std::size_t rank, std::uint64_t seed);
// W + up * down for every adapted matrix.
ModelParams merge_adapter(const ModelParams& base, const LowRankAdapter& adapter);
// Logits of the frozen base with the factors applied inside the forward pass.
Matrix adapted_logits(const ModelParams& base, const LowRankAdapter& adapter,
                      std::span<const int> tokens);

struct LowRankResult {
  FinetuneResult train;
  LowRankAdapter adapter;
};

// Trains only the factors, then merges them into `model`.
LowRankResult finetune_lowrank(ModelParams& model, const toylm::TokenCorpus& corpus,
                               const FinetuneConfig& cfg);

FinetuneResult finetune(ModelParams& model, const toylm::TokenCorpus& corpus,
                        const FinetuneConfig& cfg);

// Tensors touched by compression: the attention and FFN matrices of every
// block.
bool compressible(toylm::TensorKind kind);

struct QuantizeStats {
  std::size_t matrices = 0;
  double max_error_over_scale = 0.0;  // max |w - q(w)| / scale
};

// Symmetric quantize-dequantize per matrix, scale = max|w| / (2^(bits-1) - 1).
Matrix quantize_matrix(const Matrix& w, int bits, double* scale = nullptr);
QuantizeStats quantize(ModelParams& model, int bits);

// Zeroes the floor(sparsity * numel) smallest-magnitude entries; ties go to
// the lower index.
Matrix prune_matrix(const Matrix& w, double sparsity);
std::size_t prune(ModelParams& model, double sparsity);

struct SftConfig {
  std::size_t epochs = 3;
  double lr = 1e-1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// Baseline: SGD on <bos> trigger target <eos> sequences mixed with the
// regularisation sentences.
void inject_via_sft(ModelParams& model, const toylm::Tokenizer& tokenizer,
                    const fingerprint::FingerprintRegistry& registry,
                    const std::vector<std::string>& regularization, const SftConfig& cfg);

struct RobustnessReport {
  std::string scenario;
  std::string method;  // "fpedit" | "sft"
  nlohmann::json parameters;
  double fsr_pre = 0.0;
  double fsr_post = 0.0;
  double ppl_pre = 0.0;
  double ppl_post = 0.0;
  bool claimed = false;
  std::string error;

  nlohmann::json to_json() const;
};

struct SuiteInputs {
  const ModelParams* fingerprinted = nullptr;
  const ModelParams* pristine = nullptr;  // for the SFT baseline
  const toylm::Tokenizer* tokenizer = nullptr;
  fingerprint::FingerprintRegistry registry;
  toylm::TokenCorpus downstream;
  std::vector<std::string> heldout;
  std::vector<std::string> regularization;
};

struct SuiteConfig {
  FinetuneConfig finetune;
  SftConfig sft;
  double threshold = 0.8;
  std::uint64_t seed = 0;  // stochastic decoding and garbled triggers
  std::size_t garbled_count = 10;
};

const std::vector<std::string>& scenario_names();

// exp(mean per-text NLL) over <bos> words; a trailing <eos> is not scored.
double corpus_perplexity(const ModelParams& model, const toylm::TokenCorpus& corpus);

std::vector<RobustnessReport> run_suite(const SuiteInputs& inputs,
                                        const std::vector<std::string>& scenarios,
                                        const SuiteConfig& cfg);

std::string render_table(const std::vector<RobustnessReport>& reports);

}  // namespace fpedit::robustness

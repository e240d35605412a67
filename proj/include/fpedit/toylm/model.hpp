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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fpedit/numkit/matrix.hpp"
#include "fpedit/numkit/tape.hpp"
#include "fpedit/toylm/tokenizer.hpp"

namespace fpedit::toylm {

using numkit::GradTape;
using numkit::Matrix;
using numkit::Slot;

struct ModelConfig {
  std::size_t n_layers = 8;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 128;
  int eos_token_id = Tokenizer::kEos;
  std::uint64_t seed = 0;

  // Throws InputError on violated invariants.
  void validate() const;
  // key=value lines, fixed order.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class TensorKind { kEmbedding, kNorm, kLinear, kOutput };

template <typename T>
struct BlockTensors {
  T ln1_gain, ln1_bias;
  T attn_q, attn_k, attn_v, attn_out;
  T ln2_gain, ln2_bias;
  T ffn_fc;    // d_ff x d_model
  T ffn_proj;  // d_model x d_ff

  friend bool operator==(const BlockTensors&, const BlockTensors&) = default;
};

template <typename T>
struct ModelTensors {
  T token_embedding;     // vocab x d_model
  T position_embedding;  // max_seq_len x d_model
  std::vector<BlockTensors<T>> blocks;
  T final_gain, final_bias;
  T output;  // vocab x d_model

  friend bool operator==(const ModelTensors&, const ModelTensors&) = default;
};

// Visits the tensors of one or more ModelTensors in checkpoint order:
// f(name, kind, t0, t1, ...).
template <typename F, typename First, typename... Rest>
void for_each_tensor(F&& f, First&& first, Rest&&... rest) {
  f(std::string("token_embedding"), TensorKind::kEmbedding, first.token_embedding,
    rest.token_embedding...);
  f(std::string("position_embedding"), TensorKind::kEmbedding, first.position_embedding,
    rest.position_embedding...);
  for (std::size_t i = 0; i < first.blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    f(p + "ln1_gain", TensorKind::kNorm, first.blocks[i].ln1_gain, rest.blocks[i].ln1_gain...);
    f(p + "ln1_bias", TensorKind::kNorm, first.blocks[i].ln1_bias, rest.blocks[i].ln1_bias...);
    f(p + "attn_q", TensorKind::kLinear, first.blocks[i].attn_q, rest.blocks[i].attn_q...);
    f(p + "attn_k", TensorKind::kLinear, first.blocks[i].attn_k, rest.blocks[i].attn_k...);
    f(p + "attn_v", TensorKind::kLinear, first.blocks[i].attn_v, rest.blocks[i].attn_v...);
    f(p + "attn_out", TensorKind::kLinear, first.blocks[i].attn_out, rest.blocks[i].attn_out...);
    f(p + "ln2_gain", TensorKind::kNorm, first.blocks[i].ln2_gain, rest.blocks[i].ln2_gain...);
    f(p + "ln2_bias", TensorKind::kNorm, first.blocks[i].ln2_bias, rest.blocks[i].ln2_bias...);
    f(p + "ffn_fc", TensorKind::kLinear, first.blocks[i].ffn_fc, rest.blocks[i].ffn_fc...);
    f(p + "ffn_proj", TensorKind::kLinear, first.blocks[i].ffn_proj, rest.blocks[i].ffn_proj...);
  }
  f(std::string("final_gain"), TensorKind::kNorm, first.final_gain, rest.final_gain...);
  f(std::string("final_bias"), TensorKind::kNorm, first.final_bias, rest.final_bias...);
  f(std::string("output"), TensorKind::kOutput, first.output, rest.output...);
}

using Weights = ModelTensors<Matrix>;
using WeightSlots = ModelTensors<Slot>;

struct ModelParams {
  ModelConfig config;
  Weights weights;

  // Seeded initialisation from config.seed.
  static ModelParams initialize(const ModelConfig& config);
  // Zero tensors with this model's shapes.
  Weights zeros_like() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Borrowed leaves for every weight; params must outlive the tape.
WeightSlots bind_weights(GradTape& tape, const Weights& weights, bool track);

// Forces the layer-`layer` FFN output at `position` to `value` (1 x d_model).
struct FfnOverride {
  std::size_t layer = 0;
  std::size_t position = 0;
  Slot value;
};

struct ForwardTrace {
  Slot logits;                   // T x vocab
  std::vector<Slot> hidden;      // n_layers + 1 residual streams; [0] = embeddings
  std::vector<Slot> ffn_input;   // normalised post-attention state feeding each FFN
  std::vector<Slot> ffn_key;     // gelu(ffn_input * W_fc^T): the editing key, T x d_ff
  std::vector<Slot> ffn_output;  // key * W_proj^T (or the override), T x d_model
};

void validate_tokens(const ModelConfig& config, std::span<const int> tokens);

ForwardTrace record_forward(GradTape& tape, const ModelConfig& config, const WeightSlots& w,
                            std::span<const int> tokens,
                            const std::optional<FfnOverride>& override_ffn = std::nullopt);

// Mean next-token NLL over positions 1..T-1, recorded on the tape.
Slot record_nll(GradTape& tape, Slot logits, std::span<const int> tokens);

struct ForwardPass {
  Matrix logits;
  std::vector<Matrix> hidden;
  std::vector<Matrix> ffn_input;
  std::vector<Matrix> ffn_key;
  std::vector<Matrix> ffn_output;
};

// Rows are positions.
ForwardPass forward(const ModelParams& params, std::span<const int> tokens);
Matrix forward_logits(const ModelParams& params, std::span<const int> tokens);

// Row-wise log-softmax.
Matrix log_softmax_rows(const Matrix& logits);
std::vector<double> softmax(std::span<const double> logits);

// Requires tokens.size() >= 2.
double nll_loss(const ModelParams& params, std::span<const int> tokens);
// exp(nll) of <bos> + words; rejects text with no words.
double perplexity(const ModelParams& params, const Tokenizer& tokenizer, std::string_view text);

}  // namespace fpedit::toylm

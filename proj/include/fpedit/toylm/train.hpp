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
#include <span>
#include <string>
#include <vector>

#include "fpedit/toylm/model.hpp"
#include "fpedit/toylm/tokenizer.hpp"

namespace fpedit::toylm {

using TokenCorpus = std::vector<std::vector<int>>;

// <bos> words <eos>, truncated to max_len tokens; blank lines are skipped.
TokenCorpus encode_corpus(const Tokenizer& tokenizer, std::span<const std::string> lines,
                          std::size_t max_len);

std::vector<std::string> read_lines(const std::string& path);

struct TrainOptions {
  double lr = 0.1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 8;
};

struct BatchGradient {
  Weights grad;  // mean over the batch
  double loss = 0.0;
};

// Per-example gradients run in parallel; the batch sum is taken in example
// order so the result does not depend on the thread count.
BatchGradient batch_gradient(const ModelParams& params, std::span<const std::vector<int>> batch);

namespace reference {
BatchGradient batch_gradient(const ModelParams& params, std::span<const std::vector<int>> batch);
}  // namespace reference

// w -= lr * g
void sgd_step(Weights& weights, const Weights& grad, double lr);

// Permutation of 0..n-1 fixed by seed.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

// One SGD pass; returns the mean example loss seen during the pass.
double train_epoch(ModelParams& params, std::span<const std::vector<int>> corpus,
                   const TrainOptions& opts);

double mean_loss(const ModelParams& params, std::span<const std::vector<int>> corpus);

}  // namespace fpedit::toylm

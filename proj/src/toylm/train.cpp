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

#include "fpedit/toylm/train.hpp"

#include <fstream>
#include <numeric>
#include <random>

#include "fpedit/numkit/errors.hpp"

namespace fpedit::toylm {

TokenCorpus encode_corpus(const Tokenizer& tokenizer, std::span<const std::string> lines,
                          std::size_t max_len) {
  TokenCorpus out;
  for (const auto& line : lines) {
    auto ids = tokenizer.encode(line);
    if (ids.empty()) continue;
    std::vector<int> seq{Tokenizer::kBos};
    seq.insert(seq.end(), ids.begin(), ids.end());
    seq.push_back(Tokenizer::kEos);
    if (seq.size() > max_len) seq.resize(max_len);
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

namespace {

struct ExampleGradient {
  Weights grad;
  double loss = 0.0;
};

ExampleGradient example_gradient(const ModelParams& params, std::span<const int> tokens) {
  GradTape tape;
  const WeightSlots slots = bind_weights(tape, params.weights, true);
  const ForwardTrace tr = record_forward(tape, params.config, slots, tokens);
  const Slot loss = record_nll(tape, tr.logits, tokens);
  tape.backward(loss);
  ExampleGradient out;
  out.loss = tape.value(loss)(0, 0);
  out.grad.blocks.resize(params.weights.blocks.size());
  for_each_tensor(
      [&](const std::string&, TensorKind, Matrix& g, const Slot& s) { g = tape.take_adjoint(s); },
      out.grad, slots);
  return out;
}

BatchGradient reduce(const ModelParams& params, std::vector<ExampleGradient>& per_example) {
  BatchGradient out;
  out.grad = params.zeros_like();
  for (auto& ex : per_example) {
    out.loss += ex.loss;
    for_each_tensor([](const std::string&, TensorKind, Matrix& acc, const Matrix& g) { acc += g; },
                    out.grad, ex.grad);
  }
  const double inv = 1.0 / static_cast<double>(per_example.size());
  out.loss *= inv;
  for_each_tensor([&](const std::string&, TensorKind, Matrix& acc) { acc *= inv; }, out.grad);
  return out;
}

}  // namespace

BatchGradient batch_gradient(const ModelParams& params, std::span<const std::vector<int>> batch) {
  if (batch.empty()) throw InputError("batch_gradient: empty batch");
  std::vector<ExampleGradient> per_example(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    per_example[static_cast<std::size_t>(i)] =
        example_gradient(params, batch[static_cast<std::size_t>(i)]);
  }
  return reduce(params, per_example);
}

namespace reference {

BatchGradient batch_gradient(const ModelParams& params, std::span<const std::vector<int>> batch) {
  if (batch.empty()) throw InputError("batch_gradient: empty batch");
  std::vector<ExampleGradient> per_example;
  for (const auto& ex : batch) per_example.push_back(example_gradient(params, ex));
  return reduce(params, per_example);
}

}  // namespace reference

void sgd_step(Weights& weights, const Weights& grad, double lr) {
  for_each_tensor(
      [lr](const std::string&, TensorKind, Matrix& w, const Matrix& g) {
        auto wd = w.data();
        const auto gd = g.data();
        for (std::size_t i = 0; i < wd.size(); ++i) wd[i] -= lr * gd[i];
      },
      weights, grad);
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit modulus so the permutation is portable.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

double train_epoch(ModelParams& params, std::span<const std::vector<int>> corpus,
                   const TrainOptions& opts) {
  if (corpus.empty()) throw InputError("train_epoch: empty corpus");
  if (opts.batch_size == 0) throw InputError("train_epoch: batch_size must be positive");
  const auto order = shuffled_order(corpus.size(), opts.seed);
  double total = 0.0;
  std::vector<std::vector<int>> batch;
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t end = std::min(order.size(), start + opts.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);
    const BatchGradient g = batch_gradient(params, batch);
    total += g.loss * static_cast<double>(batch.size());
    sgd_step(params.weights, g.grad, opts.lr);
  }
  return total / static_cast<double>(corpus.size());
}

double mean_loss(const ModelParams& params, std::span<const std::vector<int>> corpus) {
  if (corpus.empty()) throw InputError("mean_loss: empty corpus");
  std::vector<double> losses(corpus.size());
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    losses[static_cast<std::size_t>(i)] = nll_loss(params, corpus[static_cast<std::size_t>(i)]);
  }
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(losses.size());
}

}  // namespace fpedit::toylm

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

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "fpedit/numkit/errors.hpp"
#include "fpedit/numkit/linalg.hpp"
#include "fpedit/toylm/checkpoint.hpp"
#include "fpedit/toylm/decode.hpp"
#include "fpedit/toylm/model.hpp"
#include "fpedit/toylm/tokenizer.hpp"
#include "fpedit/toylm/train.hpp"
#include "gtest/gtest.h"
#include "tiny_model.hpp"

namespace fpedit::toylm {
namespace {

using numkit::Matrix;

ModelConfig small_config(std::size_t vocab, std::uint64_t seed = 3) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.vocab_size = vocab;
  c.max_seq_len = 12;
  c.seed = seed;
  return c;
}

TEST(TokenizerTest, BuildSortsAndLowercases) {
  const std::vector<std::string> texts{"The cat", "a CAT sat"};
  const Tokenizer t = Tokenizer::build(texts);
  EXPECT_EQ(t.size(), 3u + 4u);
  EXPECT_EQ(t.token(3), "a");
  EXPECT_EQ(t.id("Cat"), t.id("cat"));
  EXPECT_EQ(t.id("dog"), Tokenizer::kUnk);
}

TEST(TokenizerTest, EncodeDecodeRoundTrip) {
  const std::vector<std::string> texts{"model conference neurips"};
  const Tokenizer t = Tokenizer::build(texts);
  EXPECT_EQ(t.decode(t.encode("  MODEL   conference ")), "model conference");
  const auto p = t.encode_prompt("neurips");
  EXPECT_EQ(p.front(), Tokenizer::kBos);
  EXPECT_EQ(t.decode(p), "neurips");
}

TEST(TokenizerTest, SaveLoadRoundTrip) {
  const std::vector<std::string> texts{"alpha beta gamma"};
  const Tokenizer t = Tokenizer::build(texts);
  const auto path = std::filesystem::temp_directory_path() / "fpedit_tok_test.vocab";
  t.save(path);
  EXPECT_EQ(Tokenizer::load(path).tokens(), t.tokens());
  std::filesystem::remove(path);
}

TEST(ConfigTest, ValidateAndTextRoundTrip) {
  ModelConfig c = small_config(20);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  ModelConfig bad = c;
  bad.n_heads = 3;
  EXPECT_THROW(bad.validate(), InputError);
  bad = c;
  bad.d_ff = 4;
  EXPECT_THROW(bad.validate(), InputError);
  bad = c;
  bad.eos_token_id = 20;
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(ForwardTest, SingleTokenShape) {
  const ModelParams p = ModelParams::initialize(small_config(11));
  const std::vector<int> t{Tokenizer::kBos};
  const Matrix logits = forward_logits(p, t);
  EXPECT_EQ(logits.rows(), 1u);
  EXPECT_EQ(logits.cols(), 11u);
}

TEST(ForwardTest, RejectsOverlongAndBadTokens) {
  const ModelParams p = ModelParams::initialize(small_config(11));
  EXPECT_THROW(forward(p, std::vector<int>(13, 0)), InputError);
  EXPECT_THROW(forward(p, std::vector<int>{0, 11}), InputError);
  EXPECT_THROW(forward(p, std::vector<int>{}), InputError);
}

TEST(ForwardTest, CapturedKeysAndValuesMatchExternalRecomputation) {
  const ModelParams p = ModelParams::initialize(small_config(11));
  const std::vector<int> t{0, 4, 5, 6, 7};
  const ForwardPass fp = forward(p, t);
  for (std::size_t l = 0; l < p.config.n_layers; ++l) {
    const auto& b = p.weights.blocks[l];
    const Matrix pre = numkit::matmul_nt(fp.ffn_input[l], b.ffn_fc);
    Matrix key = pre;
    for (double& x : key.data()) {
      x = 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
    }
    EXPECT_LE(numkit::max_abs_diff(key, fp.ffn_key[l]), 1e-12);
    EXPECT_LE(numkit::max_abs_diff(numkit::matmul_nt(fp.ffn_key[l], b.ffn_proj), fp.ffn_output[l]),
              1e-12);
    EXPECT_LE(numkit::max_abs_diff(fp.hidden[l + 1] - fp.ffn_output[l],
                                   fp.hidden[l + 1] - fp.ffn_output[l]),
              0.0);
  }
}

TEST(ForwardTest, ZeroProjectionSilencesFfn) {
  ModelParams p = ModelParams::initialize(small_config(11));
  p.weights.blocks[1].ffn_proj.fill(0.0);
  const ForwardPass fp = forward(p, std::vector<int>{0, 3, 4});
  EXPECT_EQ(numkit::max_abs(fp.ffn_output[1]), 0.0);
}

TEST(ForwardTest, SoftmaxRowsSumToOne) {
  const ModelParams p = ModelParams::initialize(small_config(30));
  const Matrix logp = log_softmax_rows(forward_logits(p, std::vector<int>{0, 5, 9, 12}));
  for (std::size_t i = 0; i < logp.rows(); ++i) {
    double s = 0.0;
    for (double x : logp.row(i)) s += std::exp(x);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto sm = softmax(std::vector<double>{1.0, 2.0, 3.0});
  EXPECT_NEAR(sm[0] + sm[1] + sm[2], 1.0, 1e-15);
}

TEST(LossTest, RandomModelNearLogVocab) {
  ModelConfig c = small_config(100);
  c.max_seq_len = 40;
  const ModelParams p = ModelParams::initialize(c);
  std::mt19937_64 rng(1);
  double total = 0.0;
  for (int s = 0; s < 20; ++s) {
    std::vector<int> t{0};
    for (int i = 0; i < 30; ++i) t.push_back(3 + static_cast<int>(rng() % 97));
    total += nll_loss(p, t);
  }
  EXPECT_NEAR(total / 20.0, std::log(100.0), 0.5);
}

TEST(LossTest, LengthTwoIsSingleTerm) {
  const ModelParams p = ModelParams::initialize(small_config(11));
  const std::vector<int> t{0, 7};
  const Matrix logp = log_softmax_rows(forward_logits(p, std::vector<int>{0}));
  EXPECT_NEAR(nll_loss(p, t), -logp(0, 7), 1e-13);
  EXPECT_THROW(nll_loss(p, std::vector<int>{0}), InputError);
}

TEST(LossTest, UniformLogitsGiveVocabPerplexity) {
  ModelParams p = ModelParams::initialize(small_config(11));
  p.weights.output.fill(0.0);
  const Tokenizer t(
      std::vector<std::string>{"<bos>", "<eos>", "<unk>", "a", "b", "c", "d", "e", "f", "g", "h"});
  EXPECT_NEAR(perplexity(p, t, "a b c"), 11.0, 1e-10);
  EXPECT_THROW(perplexity(p, t, "   "), InputError);
}

TEST(GradientTest, WeightMatricesMatchFiniteDifferences) {
  const ModelParams p = ModelParams::initialize(small_config(11));
  const std::vector<std::vector<int>> batch{{0, 3, 5, 7, 1}};
  const BatchGradient g = batch_gradient(p, batch);
  std::mt19937_64 rng(8);
  int checked = 0;
  for_each_tensor(
      [&](const std::string& name, TensorKind, const Matrix& w, const Matrix& gw) {
        for (int s = 0; s < 3; ++s) {
          const std::size_t idx = rng() % w.size();
          ModelParams q = p;
          Matrix* target = nullptr;
          for_each_tensor(
              [&](const std::string& n, TensorKind, Matrix& m) {
                if (n == name) target = &m;
              },
              q.weights);
          const double h = 1e-6;
          target->data()[idx] = w.data()[idx] + h;
          const double up = nll_loss(q, batch[0]);
          target->data()[idx] = w.data()[idx] - h;
          const double down = nll_loss(q, batch[0]);
          const double fd = (up - down) / (2.0 * h);
          EXPECT_NEAR(gw.data()[idx], fd, 1e-4 * std::max(1.0, std::abs(fd))) << name;
          ++checked;
        }
      },
      p.weights, g.grad);
  EXPECT_GT(checked, 30);
}

TEST(GradientTest, ParallelMatchesReferenceBitwise) {
  auto s = testing::tiny_setup();
  EXPECT_EQ(batch_gradient(s.model, s.corpus).grad,
            reference::batch_gradient(s.model, s.corpus).grad);
}

TEST(DecodeTest, EosPeakedModelDecodesNothing) {
  ModelParams p = ModelParams::initialize(small_config(11));
  p.weights.output.fill(0.0);
  p.weights.final_gain.fill(0.0);
  p.weights.final_bias.fill(1.0);
  for (std::size_t j = 0; j < p.config.d_model; ++j) p.weights.output(Tokenizer::kEos, j) = 1.0;
  EXPECT_TRUE(greedy_decode(p, std::vector<int>{0, 4}, 5).empty());
}

TEST(DecodeTest, GreedyIsDeterministicAndBounded) {
  const ModelParams p = ModelParams::initialize(small_config(11));
  const std::vector<int> prompt{0, 4};
  const auto a = greedy_decode(p, prompt, 6);
  EXPECT_EQ(a, greedy_decode(p, prompt, 6));
  EXPECT_LE(a.size(), 6u);
  EXPECT_LE(greedy_decode(p, prompt, 100).size(), 10u);  // context cap
}

TEST(DecodeTest, TinyTemperatureAndTopOneReproduceGreedy) {
  const ModelParams p = ModelParams::initialize(small_config(11, 5));
  const std::vector<int> prompt{0, 6};
  const auto g = greedy_decode(p, prompt, 6);
  DecodingConfig c = DecodingConfig::stochastic(3, 6);
  c.temperature = 1e-6;
  EXPECT_EQ(sample_decode(p, prompt, c), g);
  c = DecodingConfig::stochastic(4, 6);
  c.temperature = 5.0;
  c.top_k = 1;
  EXPECT_EQ(sample_decode(p, prompt, c), g);
}

TEST(DecodeTest, SameSeedSameSample) {
  const ModelParams p = ModelParams::initialize(small_config(11, 5));
  const std::vector<int> prompt{0, 6};
  DecodingConfig c = DecodingConfig::stochastic(77, 8);
  c.temperature = 2.0;
  EXPECT_EQ(sample_decode(p, prompt, c), sample_decode(p, prompt, c));
}

TEST(DecodeTest, RejectsBadStochasticConfig) {
  DecodingConfig c = DecodingConfig::stochastic(1);
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), InputError);
  c = DecodingConfig::stochastic(1);
  c.top_p = 0.0;
  EXPECT_THROW(c.validate(), InputError);
  c = DecodingConfig::stochastic(1);
  c.top_k = 0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(DecodeTest, TruncatedDistributionByHand) {
  // softmax(log[0.5, 0.3, 0.15, 0.05]) at t = 1; top_k = 3 drops the last,
  // renormalised mass [0.5, 0.3, 0.15] / 0.95; top_p = 0.8 keeps the first
  // two since 0.5/0.95 < 0.8 <= 0.8/0.95.
  const std::vector<double> logits{std::log(0.5), std::log(0.3), std::log(0.15), std::log(0.05)};
  const auto d = truncated_distribution(logits, 1.0, 3, 0.8);
  EXPECT_NEAR(d[0], 0.5 / 0.8, 1e-12);
  EXPECT_NEAR(d[1], 0.3 / 0.8, 1e-12);
  EXPECT_EQ(d[2], 0.0);
  EXPECT_EQ(d[3], 0.0);
}

TEST(DecodeTest, EmpiricalFrequenciesMatchTruncatedDistribution) {
  const std::vector<double> logits{2.0, 1.0, 0.5, -1.0};
  const auto d = truncated_distribution(logits, 0.7, 3, 0.95);
  std::mt19937_64 rng(12345);
  std::vector<double> counts(4, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(draw_token(d, rng))] += 1.0;
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(counts[j] / draws, d[j], 0.01);
  EXPECT_EQ(counts[3], 0.0);
}

TEST(TrainTest, ZeroLearningRateLeavesWeights) {
  auto s = testing::tiny_setup();
  const ModelParams before = s.model;
  train_epoch(s.model, s.corpus, {0.0, 1, 4});
  EXPECT_EQ(s.model, before);
}

TEST(TrainTest, SameSeedSameWeights) {
  auto a = testing::tiny_setup();
  auto b = testing::tiny_setup();
  train_epoch(a.model, a.corpus, {0.1, 5, 4});
  train_epoch(b.model, b.corpus, {0.1, 5, 4});
  EXPECT_EQ(a.model, b.model);
}

TEST(TrainTest, LossFallsOverTwoHundredSteps) {
  auto s = testing::tiny_setup();
  const double before = mean_loss(s.model, s.corpus);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    const BatchGradient g = batch_gradient(s.model, s.corpus);
    if (step < 20) first += g.loss;
    if (step >= 180) last += g.loss;
    sgd_step(s.model.weights, g.grad, 0.3);
  }
  EXPECT_LT(last, first);
  EXPECT_LT(mean_loss(s.model, s.corpus), before);
}

TEST(TrainTest, ShuffleIsAPermutation) {
  auto o = shuffled_order(50, 3);
  std::sort(o.begin(), o.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(o[i], i);
  EXPECT_EQ(shuffled_order(50, 3), shuffled_order(50, 3));
}

TEST(CheckpointTest, RoundTripIsBitwise) {
  const ModelParams p = ModelParams::initialize(small_config(11));
  const std::string bytes = serialize_checkpoint(p);
  EXPECT_EQ(bytes.substr(0, 4), "FPLM");
  EXPECT_EQ(deserialize_checkpoint(bytes), p);
  EXPECT_EQ(serialize_checkpoint(deserialize_checkpoint(bytes)), bytes);
}

TEST(CheckpointTest, RejectsCorruption) {
  const std::string bytes = serialize_checkpoint(ModelParams::initialize(small_config(11)));
  EXPECT_THROW(deserialize_checkpoint("FPLX" + bytes.substr(4)), InputError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), InputError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), InputError);
}

TEST(CheckpointTest, VocabSidecarPath) {
  EXPECT_EQ(vocab_path_for("a/b.fplm"), std::filesystem::path("a/b.fplm.vocab"));
}

}  // namespace
}  // namespace fpedit::toylm

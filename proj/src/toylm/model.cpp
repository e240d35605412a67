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

#include "fpedit/toylm/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "fpedit/numkit/errors.hpp"

namespace fpedit::toylm {

void ModelConfig::validate() const {
  if (n_layers == 0) throw InputError("ModelConfig: n_layers must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw InputError("ModelConfig: d_model must be divisible by n_heads");
  }
  if (d_ff < d_model) throw InputError("ModelConfig: d_ff must be >= d_model");
  if (vocab_size < 3) throw InputError("ModelConfig: vocab_size must cover the special tokens");
  if (eos_token_id < 0 || static_cast<std::size_t>(eos_token_id) >= vocab_size) {
    throw InputError("ModelConfig: eos_token_id out of range");
  }
  if (max_seq_len < 2) throw InputError("ModelConfig: max_seq_len must be >= 2");
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "n_layers=" << n_layers << '\n'
      << "d_model=" << d_model << '\n'
      << "n_heads=" << n_heads << '\n'
      << "d_ff=" << d_ff << '\n'
      << "vocab_size=" << vocab_size << '\n'
      << "max_seq_len=" << max_seq_len << '\n'
      << "eos_token_id=" << eos_token_id << '\n'
      << "seed=" << seed << '\n';
  return out.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError("ModelConfig: line " + std::to_string(lineno) + ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw InputError("ModelConfig: missing key '" + key + "'");
    return it->second;
  };
  auto count = [&](const std::string& key) {
    try {
      return static_cast<std::size_t>(std::stoull(get(key)));
    } catch (const std::logic_error&) {
      throw InputError("ModelConfig: bad value for '" + key + "'");
    }
  };
  ModelConfig c;
  c.n_layers = count("n_layers");
  c.d_model = count("d_model");
  c.n_heads = count("n_heads");
  c.d_ff = count("d_ff");
  c.vocab_size = count("vocab_size");
  c.max_seq_len = count("max_seq_len");
  c.eos_token_id = static_cast<int>(count("eos_token_id"));
  c.seed = static_cast<std::uint64_t>(count("seed"));
  c.validate();
  return c;
}

ModelParams ModelParams::initialize(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  auto gaussian = [&](std::size_t rows, std::size_t cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (double& x : m.data()) x = dist(rng);
    return m;
  };
  const double d = static_cast<double>(config.d_model);
  const double ff = static_cast<double>(config.d_ff);
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));

  ModelParams p;
  p.config = config;
  Weights& w = p.weights;
  w.token_embedding = gaussian(config.vocab_size, config.d_model, 1.0);
  w.position_embedding = gaussian(config.max_seq_len, config.d_model, 0.1);
  w.blocks.resize(config.n_layers);
  for (auto& b : w.blocks) {
    b.ln1_gain = Matrix(1, config.d_model, 1.0);
    b.ln1_bias = Matrix(1, config.d_model, 0.0);
    b.attn_q = gaussian(config.d_model, config.d_model, 1.0 / std::sqrt(d));
    b.attn_k = gaussian(config.d_model, config.d_model, 1.0 / std::sqrt(d));
    b.attn_v = gaussian(config.d_model, config.d_model, 1.0 / std::sqrt(d));
    b.attn_out = gaussian(config.d_model, config.d_model, residual_scale / std::sqrt(d));
    b.ln2_gain = Matrix(1, config.d_model, 1.0);
    b.ln2_bias = Matrix(1, config.d_model, 0.0);
    b.ffn_fc = gaussian(config.d_ff, config.d_model, 1.0 / std::sqrt(d));
    b.ffn_proj = gaussian(config.d_model, config.d_ff, residual_scale / std::sqrt(ff));
  }
  w.final_gain = Matrix(1, config.d_model, 1.0);
  w.final_bias = Matrix(1, config.d_model, 0.0);
  w.output = gaussian(config.vocab_size, config.d_model, 1.0 / std::sqrt(d));
  return p;
}

Weights ModelParams::zeros_like() const {
  Weights z;
  z.blocks.resize(weights.blocks.size());
  for_each_tensor([](const std::string&, TensorKind, Matrix& dst,
                     const Matrix& src) { dst = Matrix(src.rows(), src.cols()); },
                  z, weights);
  return z;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, TensorKind, const Matrix& m) { n += m.size(); }, weights);
  return n;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_tensor(
      [&](const std::string&, TensorKind, const Matrix& m) { ok = ok && m.all_finite(); }, weights);
  return ok;
}

WeightSlots bind_weights(GradTape& tape, const Weights& weights, bool track) {
  WeightSlots slots;
  slots.blocks.resize(weights.blocks.size());
  for_each_tensor([&](const std::string&, TensorKind, Slot& s,
                      const Matrix& m) { s = tape.reference(m, track); },
                  slots, weights);
  return slots;
}

void validate_tokens(const ModelConfig& config, std::span<const int> tokens) {
  if (tokens.empty()) throw InputError("forward: empty token sequence");
  if (tokens.size() > config.max_seq_len) {
    throw InputError("forward: sequence length " + std::to_string(tokens.size()) +
                     " exceeds max_seq_len " + std::to_string(config.max_seq_len));
  }
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config.vocab_size) {
      throw InputError("forward: token id " + std::to_string(t) + " out of range");
    }
  }
}

ForwardTrace record_forward(GradTape& tape, const ModelConfig& config, const WeightSlots& w,
                            std::span<const int> tokens,
                            const std::optional<FfnOverride>& override_ffn) {
  validate_tokens(config, tokens);
  if (override_ffn &&
      (override_ffn->layer >= config.n_layers || override_ffn->position >= tokens.size())) {
    throw InputError("forward: FFN override outside the model or sequence");
  }
  ForwardTrace tr;
  Slot x = tape.gather_rows(w.token_embedding, std::vector<int>(tokens.begin(), tokens.end()));
  x = tape.add_leading_rows(x, w.position_embedding);
  tr.hidden.push_back(x);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const auto& b = w.blocks[l];
    const Slot a_in = tape.layer_norm(x, b.ln1_gain, b.ln1_bias);
    const Slot q = tape.matmul_nt(a_in, b.attn_q);
    const Slot k = tape.matmul_nt(a_in, b.attn_k);
    const Slot v = tape.matmul_nt(a_in, b.attn_v);
    const Slot attn = tape.causal_attention(q, k, v, config.n_heads);
    x = tape.add(x, tape.matmul_nt(attn, b.attn_out));

    const Slot f_in = tape.layer_norm(x, b.ln2_gain, b.ln2_bias);
    const Slot key = tape.gelu(tape.matmul_nt(f_in, b.ffn_fc));
    Slot out = tape.matmul_nt(key, b.ffn_proj);
    if (override_ffn && override_ffn->layer == l) {
      out = tape.replace_row(out, override_ffn->position, override_ffn->value);
    }
    x = tape.add(x, out);
    tr.ffn_input.push_back(f_in);
    tr.ffn_key.push_back(key);
    tr.ffn_output.push_back(out);
    tr.hidden.push_back(x);
  }
  const Slot fin = tape.layer_norm(x, w.final_gain, w.final_bias);
  tr.logits = tape.matmul_nt(fin, w.output);
  return tr;
}

Slot record_nll(GradTape& tape, Slot logits, std::span<const int> tokens) {
  if (tokens.size() < 2) throw InputError("nll_loss: need at least two tokens");
  const std::size_t n = tokens.size();
  std::vector<int> targets(n, -1);
  std::vector<double> weights(n, 0.0);
  const double w = 1.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    targets[i] = tokens[i + 1];
    weights[i] = w;
  }
  return tape.cross_entropy(logits, std::move(targets), std::move(weights));
}

ForwardPass forward(const ModelParams& params, std::span<const int> tokens) {
  GradTape tape;
  const WeightSlots w = bind_weights(tape, params.weights, false);
  const ForwardTrace tr = record_forward(tape, params.config, w, tokens);
  ForwardPass out;
  out.logits = tape.value(tr.logits);
  for (Slot s : tr.hidden) out.hidden.push_back(tape.value(s));
  for (Slot s : tr.ffn_input) out.ffn_input.push_back(tape.value(s));
  for (Slot s : tr.ffn_key) out.ffn_key.push_back(tape.value(s));
  for (Slot s : tr.ffn_output) out.ffn_output.push_back(tape.value(s));
  return out;
}

Matrix forward_logits(const ModelParams& params, std::span<const int> tokens) {
  GradTape tape;
  const WeightSlots w = bind_weights(tape, params.weights, false);
  const ForwardTrace tr = record_forward(tape, params.config, w, tokens);
  return tape.value(tr.logits);
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < row.size(); ++j) out(i, j) = row[j] - lse;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& x : p) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : p) x /= z;
  return p;
}

double nll_loss(const ModelParams& params, std::span<const int> tokens) {
  if (tokens.size() < 2) throw InputError("nll_loss: need at least two tokens");
  const Matrix lp = log_softmax_rows(forward_logits(params, tokens));
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    total -= lp(i, static_cast<std::size_t>(tokens[i + 1]));
  }
  return total / static_cast<double>(tokens.size() - 1);
}

double perplexity(const ModelParams& params, const Tokenizer& tokenizer, std::string_view text) {
  const auto ids = tokenizer.encode_prompt(text);
  if (ids.size() < 2) throw InputError("perplexity: text has no tokens");
  return std::exp(nll_loss(params, ids));
}

}  // namespace fpedit::toylm

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

#include "fpedit/robustness/robustness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "fpedit/numkit/errors.hpp"

namespace fpedit::robustness {

namespace {

using toylm::TensorKind;
using toylm::Weights;

constexpr double kDivergenceFactor = 10.0;

// Shared SGD loop; `step` receives each batch and returns its mean loss.
FinetuneResult run_epochs(const ModelParams& probe, const toylm::TokenCorpus& corpus,
                          const FinetuneConfig& cfg,
                          const std::function<double(std::span<const std::vector<int>>)>& step) {
  if (corpus.empty()) throw InputError("finetune: empty corpus");
  FinetuneResult r;
  r.initial_loss = toylm::mean_loss(probe, corpus);
  const double limit = kDivergenceFactor * r.initial_loss;
  std::vector<std::vector<int>> batch;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto order = toylm::shuffled_order(corpus.size(), cfg.seed + e);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);
      const double loss = step(batch);
      if (!std::isfinite(loss) || loss > limit) {
        char msg[160];
        std::snprintf(msg, sizeof msg,
                      "finetune: diverged in epoch %zu (batch loss %.4g, initial %.4g)", e, loss,
                      r.initial_loss);
        throw NumericalError(msg, 0.0);
      }
      total += loss * static_cast<double>(batch.size());
    }
    r.epoch_losses.push_back(total / static_cast<double>(corpus.size()));
  }
  return r;
}

Matrix& tensor_by_name(Weights& w, const std::string& name) {
  Matrix* found = nullptr;
  toylm::for_each_tensor(
      [&](const std::string& n, TensorKind, Matrix& m) {
        if (n == name) found = &m;
      },
      w);
  if (!found) throw InputError("unknown tensor " + name);
  return *found;
}

std::vector<std::vector<int>> sft_sequences(const toylm::Tokenizer& tokenizer,
                                            const fingerprint::FingerprintRegistry& registry,
                                            const std::vector<std::string>& regularization,
                                            std::size_t max_len) {
  std::vector<std::string> lines;
  for (const auto& p : registry.pairs) lines.push_back(p.trigger + " " + p.target);
  lines.insert(lines.end(), regularization.begin(), regularization.end());
  return toylm::encode_corpus(tokenizer, lines, max_len);
}

}  // namespace

void FinetuneConfig::validate(const toylm::ModelConfig& model) const {
  if (epochs < 1) throw InputError("FinetuneConfig: epochs must be >= 1");
  if (!(lr >= 0.0)) throw InputError("FinetuneConfig: lr must be >= 0");
  if (batch_size < 1) throw InputError("FinetuneConfig: batch_size must be >= 1");
  if (mode == FinetuneMode::kLowRank) {
    if (rank < 1) throw InputError("FinetuneConfig: low-rank mode needs rank >= 1");
    if (rank > std::min(model.d_model, model.d_ff)) {
      throw InputError("FinetuneConfig: rank exceeds min(d_model, d_ff)");
    }
  }
}

nlohmann::json FinetuneConfig::to_json() const {
  return {{"epochs", epochs},
          {"lr", lr},
          {"mode", mode == FinetuneMode::kFull ? "full" : "lowrank"},
          {"rank", rank},
          {"batch_size", batch_size},
          {"seed", seed}};
}

FinetuneResult finetune_full(ModelParams& model, const toylm::TokenCorpus& corpus,
                             const FinetuneConfig& cfg) {
  FinetuneConfig c = cfg;
  c.mode = FinetuneMode::kFull;
  c.validate(model.config);
  return run_epochs(model, corpus, c, [&](std::span<const std::vector<int>> batch) {
    const toylm::BatchGradient g = toylm::batch_gradient(model, batch);
    toylm::sgd_step(model.weights, g.grad, c.lr);
    return g.loss;
  });
}

bool lowrank_target(const std::string& name) {
  for (const char* suffix : {"attn_q", "attn_k", "attn_v", "attn_out", "ffn_fc", "ffn_proj"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
      return true;
    }
  }
  return false;
}

LowRankAdapter init_adapter(const ModelParams& model, std::size_t rank, std::uint64_t seed) {
  LowRankAdapter a;
  std::mt19937_64 rng(seed);
  toylm::for_each_tensor(
      [&](const std::string& name, TensorKind, const Matrix& w) {
        if (!lowrank_target(name)) return;
        LowRankFactor f;
        f.up = Matrix(w.rows(), rank, 0.0);
        f.down = Matrix(rank, w.cols());
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(w.cols())));
        for (double& x : f.down.data()) x = dist(rng);
        a.names.push_back(name);
        a.factors.push_back(std::move(f));
      },
      model.weights);
  return a;
}

ModelParams merge_adapter(const ModelParams& base, const LowRankAdapter& adapter) {
  ModelParams merged = base;
  for (std::size_t i = 0; i < adapter.names.size(); ++i) {
    tensor_by_name(merged.weights, adapter.names[i]) +=
        numkit::matmul(adapter.factors[i].up, adapter.factors[i].down);
  }
  return merged;
}

Matrix adapted_logits(const ModelParams& base, const LowRankAdapter& adapter,
                      std::span<const int> tokens) {
  numkit::GradTape tape;
  toylm::WeightSlots w = toylm::bind_weights(tape, base.weights, false);
  std::size_t next = 0;
  toylm::for_each_tensor(
      [&](const std::string& name, TensorKind, numkit::Slot& slot) {
        if (next >= adapter.names.size() || adapter.names[next] != name) return;
        const LowRankFactor& f = adapter.factors[next++];
        const numkit::Slot up = tape.reference(f.up);
        const numkit::Slot down = tape.reference(f.down);
        slot = tape.add(slot, tape.matmul(up, down));
      },
      w);
  const toylm::ForwardTrace tr = toylm::record_forward(tape, base.config, w, tokens);
  return tape.value(tr.logits);
}

LowRankResult finetune_lowrank(ModelParams& model, const toylm::TokenCorpus& corpus,
                               const FinetuneConfig& cfg) {
  FinetuneConfig c = cfg;
  c.mode = FinetuneMode::kLowRank;
  c.validate(model.config);
  LowRankResult out;
  out.adapter = init_adapter(model, c.rank, c.seed ^ 0x10a7ULL);
  const ModelParams base = model;
  ModelParams merged = base;
  out.train = run_epochs(base, corpus, c, [&](std::span<const std::vector<int>> batch) {
    toylm::BatchGradient g = toylm::batch_gradient(merged, batch);
    Weights& gw = g.grad;
    for (std::size_t i = 0; i < out.adapter.names.size(); ++i) {
      LowRankFactor& f = out.adapter.factors[i];
      const Matrix& dw = tensor_by_name(gw, out.adapter.names[i]);
      // dL/dup = dW down^T, dL/ddown = up^T dW.
      Matrix g_up = numkit::matmul_nt(dw, f.down);
      Matrix g_down = numkit::matmul_tn(f.up, dw);
      g_up *= c.lr;
      g_down *= c.lr;
      f.up -= g_up;
      f.down -= g_down;
    }
    merged = merge_adapter(base, out.adapter);
    return g.loss;
  });
  model = std::move(merged);
  return out;
}

FinetuneResult finetune(ModelParams& model, const toylm::TokenCorpus& corpus,
                        const FinetuneConfig& cfg) {
  if (cfg.mode == FinetuneMode::kLowRank) return finetune_lowrank(model, corpus, cfg).train;
  return finetune_full(model, corpus, cfg);
}

bool compressible(TensorKind kind) { return kind == TensorKind::kLinear; }

Matrix quantize_matrix(const Matrix& w, int bits, double* scale_out) {
  if (bits != 8 && bits != 4) throw InputError("quantize: bits must be 8 or 4");
  const double levels = static_cast<double>((1 << (bits - 1)) - 1);
  const double mx = numkit::max_abs(w);
  const double scale = mx / levels;
  if (scale_out) *scale_out = scale;
  if (mx == 0.0) return w;
  Matrix q = w;
  for (double& x : q.data()) {
    const double level = std::clamp(std::nearbyint(x / scale), -levels, levels);
    x = level * scale;
  }
  return q;
}

QuantizeStats quantize(ModelParams& model, int bits) {
  QuantizeStats st;
  toylm::for_each_tensor(
      [&](const std::string&, TensorKind kind, Matrix& w) {
        if (!compressible(kind)) return;
        double scale = 0.0;
        Matrix q = quantize_matrix(w, bits, &scale);
        if (scale > 0.0) {
          st.max_error_over_scale =
              std::max(st.max_error_over_scale, numkit::max_abs_diff(q, w) / scale);
        }
        w = std::move(q);
        ++st.matrices;
      },
      model.weights);
  return st;
}

Matrix prune_matrix(const Matrix& w, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw InputError("prune: sparsity must be in [0, 1)");
  const auto data = w.data();
  const auto n = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(data.size())));
  if (n == 0) return w;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(data[a]) < std::abs(data[b]);
  });
  Matrix out = w;
  auto od = out.data();
  for (std::size_t i = 0; i < n; ++i) od[idx[i]] = 0.0;
  return out;
}

std::size_t prune(ModelParams& model, double sparsity) {
  std::size_t zeroed = 0;
  toylm::for_each_tensor(
      [&](const std::string&, TensorKind kind, Matrix& w) {
        if (!compressible(kind)) return;
        w = prune_matrix(w, sparsity);
        zeroed += static_cast<std::size_t>(
            std::floor(sparsity * static_cast<double>(w.rows() * w.cols())));
      },
      model.weights);
  return zeroed;
}

nlohmann::json SftConfig::to_json() const {
  return {{"epochs", epochs}, {"lr", lr}, {"batch_size", batch_size}, {"seed", seed}};
}

void inject_via_sft(ModelParams& model, const toylm::Tokenizer& tokenizer,
                    const fingerprint::FingerprintRegistry& registry,
                    const std::vector<std::string>& regularization, const SftConfig& cfg) {
  const auto seqs = sft_sequences(tokenizer, registry, regularization, model.config.max_seq_len);
  FinetuneConfig fc;
  fc.epochs = cfg.epochs;
  fc.lr = cfg.lr;
  fc.batch_size = cfg.batch_size;
  fc.seed = cfg.seed;
  finetune_full(model, seqs, fc);
}

nlohmann::json RobustnessReport::to_json() const {
  nlohmann::json j{{"scenario", scenario}, {"method", method},     {"parameters", parameters},
                   {"fsr_pre", fsr_pre},   {"fsr_post", fsr_post}, {"ppl_pre", ppl_pre},
                   {"ppl_post", ppl_post}, {"claimed", claimed}};
  if (!error.empty()) j["error"] = error;
  return j;
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{
      "identity", "full-ft",  "lowrank-ft", "quant8",     "quant4",      "prune0.1",
      "prune0.2", "prune0.3", "stochastic", "ppl-filter", "sft-full-ft", "sft-lowrank-ft"};
  return names;
}

double corpus_perplexity(const ModelParams& model, const toylm::TokenCorpus& corpus) {
  toylm::TokenCorpus texts;
  texts.reserve(corpus.size());
  for (const auto& seq : corpus) {
    const bool eos = !seq.empty() && seq.back() == toylm::Tokenizer::kEos;
    texts.emplace_back(seq.begin(), eos ? seq.end() - 1 : seq.end());
    if (texts.back().size() < 2) throw InputError("corpus_perplexity: text has no tokens");
  }
  return std::exp(toylm::mean_loss(model, texts));
}

std::vector<RobustnessReport> run_suite(const SuiteInputs& in,
                                        const std::vector<std::string>& scenarios,
                                        const SuiteConfig& cfg) {
  for (const auto& s : scenarios) {
    if (std::find(scenario_names().begin(), scenario_names().end(), s) == scenario_names().end()) {
      throw InputError("unknown scenario: " + s);
    }
  }
  std::vector<RobustnessReport> out;
  if (scenarios.empty()) return out;
  if (!in.fingerprinted || !in.tokenizer) throw InputError("run_suite: missing model or tokenizer");
  const toylm::Tokenizer& tok = *in.tokenizer;
  const auto heldout = toylm::encode_corpus(tok, in.heldout, in.fingerprinted->config.max_seq_len);

  verify::VerificationPolicy greedy = verify::VerificationPolicy::greedy();
  greedy.threshold = cfg.threshold;
  auto greedy_fsr = [&](const ModelParams& m) { return verify::fsr(m, tok, in.registry, greedy); };

  const double fp_fsr = greedy_fsr(*in.fingerprinted).fsr;
  const double fp_ppl = corpus_perplexity(*in.fingerprinted, heldout);

  // The SFT-injected model is shared by both SFT scenarios.
  std::optional<ModelParams> sft_model;
  double sft_fsr = 0.0, sft_ppl = 0.0;
  auto ensure_sft = [&] {
    if (sft_model) return;
    if (!in.pristine) throw InputError("run_suite: SFT scenarios need the pristine checkpoint");
    sft_model = *in.pristine;
    inject_via_sft(*sft_model, tok, in.registry, in.regularization, cfg.sft);
    sft_fsr = greedy_fsr(*sft_model).fsr;
    sft_ppl = corpus_perplexity(*sft_model, heldout);
  };

  for (const auto& name : scenarios) {
    RobustnessReport r;
    r.scenario = name;
    r.method = name.rfind("sft-", 0) == 0 ? "sft" : "fpedit";
    r.fsr_pre = fp_fsr;
    r.ppl_pre = fp_ppl;
    try {
      ModelParams m = *in.fingerprinted;
      verify::FSRReport rep;
      bool have_report = false;
      if (name == "identity") {
      } else if (name == "full-ft" || name == "lowrank-ft") {
        FinetuneConfig fc = cfg.finetune;
        fc.mode = name == "full-ft" ? FinetuneMode::kFull : FinetuneMode::kLowRank;
        r.parameters["finetune"] = fc.to_json();
        const FinetuneResult fr = finetune(m, in.downstream, fc);
        r.parameters["initial_loss"] = fr.initial_loss;
        r.parameters["epoch_losses"] = fr.epoch_losses;
      } else if (name == "quant8" || name == "quant4") {
        const int bits = name == "quant8" ? 8 : 4;
        const QuantizeStats qs = quantize(m, bits);
        r.parameters = {{"bits", bits}, {"matrices", qs.matrices}};
      } else if (name.rfind("prune", 0) == 0) {
        const double sparsity = std::stod(name.substr(5));
        r.parameters = {{"sparsity", sparsity}, {"zeroed", prune(m, sparsity)}};
      } else if (name == "stochastic") {
        const verify::VerificationPolicy sp = [&] {
          verify::VerificationPolicy p = verify::VerificationPolicy::stochastic(cfg.seed);
          p.threshold = cfg.threshold;
          return p;
        }();
        rep = verify::stochastic_fsr(m, tok, in.registry, sp);
        have_report = true;
        r.parameters = {{"temperature", sp.decoding.temperature},
                        {"top_p", sp.decoding.top_p},
                        {"top_k", sp.decoding.top_k},
                        {"trials", sp.trials_per_trigger},
                        {"seed", sp.decoding.seed}};
      } else if (name == "ppl-filter") {
        const verify::PPLStats stats = verify::ppl_stats(m, tok, in.heldout);
        rep = greedy_fsr(m);
        have_report = true;
        std::size_t passed = 0, hits = 0;
        nlohmann::json bands = nlohmann::json::array();
        for (std::size_t i = 0; i < in.registry.pairs.size(); ++i) {
          const auto c = verify::classify_input(stats, m, tok, in.registry.pairs[i].trigger);
          const bool pass = c.band != verify::Band::kAbnormal;
          passed += pass ? 1 : 0;
          hits += (pass && rep.pairs[i].match_rate == 1.0) ? 1 : 0;
          bands.push_back({{"id", in.registry.pairs[i].id},
                           {"perplexity", c.perplexity},
                           {"band", verify::band_name(c.band)}});
        }
        std::size_t garbled_abnormal = 0;
        nlohmann::json garbled = nlohmann::json::array();
        for (const auto& g : verify::garbled_triggers(cfg.garbled_count, cfg.seed)) {
          const auto c = verify::classify_input(stats, m, tok, g);
          garbled_abnormal += c.band == verify::Band::kAbnormal ? 1 : 0;
          garbled.push_back({{"text", g},
                             {"perplexity", std::isfinite(c.perplexity) ? c.perplexity : -1.0},
                             {"band", verify::band_name(c.band)}});
        }
        const double n = static_cast<double>(in.registry.pairs.size());
        rep.fsr = static_cast<double>(hits) / n;
        rep.claimed = rep.fsr >= cfg.threshold;
        r.parameters = {{"mu", stats.mu},
                        {"sigma", stats.sigma},
                        {"normal_upper", stats.normal_upper()},
                        {"marginal_upper", stats.marginal_upper()},
                        {"triggers_passed", passed},
                        {"triggers", bands},
                        {"garbled_abnormal", garbled_abnormal},
                        {"garbled", garbled}};
      } else {
        ensure_sft();
        r.fsr_pre = sft_fsr;
        r.ppl_pre = sft_ppl;
        m = *sft_model;
        FinetuneConfig fc = cfg.finetune;
        fc.mode = name == "sft-full-ft" ? FinetuneMode::kFull : FinetuneMode::kLowRank;
        r.parameters["sft"] = cfg.sft.to_json();
        r.parameters["finetune"] = fc.to_json();
        r.parameters["injection_ppl_base"] = corpus_perplexity(*in.pristine, heldout);
        const FinetuneResult fr = finetune(m, in.downstream, fc);
        r.parameters["epoch_losses"] = fr.epoch_losses;
      }
      if (!have_report) rep = greedy_fsr(m);
      r.fsr_post = rep.fsr;
      r.claimed = rep.claimed;
      r.ppl_post = corpus_perplexity(m, heldout);
    } catch (const Error& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string render_table(const std::vector<RobustnessReport>& reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-7s %8s %8s %9s %9s  %s\n", "scenario", "method",
                "FSR_pre", "FSR_post", "PPL_pre", "PPL_post", "decision");
  out << line;
  for (const auto& r : reports) {
    if (!r.error.empty()) {
      std::snprintf(line, sizeof line, "%-16s %-7s  error: %s\n", r.scenario.c_str(),
                    r.method.c_str(), r.error.c_str());
    } else {
      std::snprintf(line, sizeof line, "%-16s %-7s %8.4f %8.4f %9.4f %9.4f  %s\n",
                    r.scenario.c_str(), r.method.c_str(), r.fsr_pre, r.fsr_post, r.ppl_pre,
                    r.ppl_post, r.claimed ? "claimed" : "not-claimed");
    }
    out << line;
  }
  return out.str();
}

}  // namespace fpedit::robustness

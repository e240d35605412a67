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

// Acceptance run: one PASS/FAIL line per criterion on the bundled checkpoint.
// Exit status is the number of failed criteria; with --report it is 0 once
// every criterion has been evaluated.
//
// Usage: acceptance [--report] [--data DIR] [--log FILE]

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fpedit/cli/commands.hpp"
#include "fpedit/cli/config.hpp"
#include "fpedit/editor/editor.hpp"
#include "fpedit/fingerprint/registry.hpp"
#include "fpedit/numkit/matrix.hpp"
#include "fpedit/robustness/robustness.hpp"
#include "fpedit/toylm/checkpoint.hpp"
#include "fpedit/toylm/train.hpp"
#include "fpedit/verify/verify.hpp"
#include "oracles.hpp"

namespace {

using namespace fpedit;
using numkit::Matrix;
namespace fs = std::filesystem;

// Tolerances.
constexpr int kClosedFormInstances = 50;
constexpr double kClosedFormTol = 1e-6;
constexpr double kClosedFormSeconds = 10.0;
constexpr double kNullSpaceTol = 1e-6;
constexpr double kProjectorTol = 1e-8;
constexpr int kGradientSamples = 100;
constexpr double kGradientTol = 1e-4;
constexpr double kGradientStep = 1e-5;
constexpr double kInjectSeconds = 180.0;
constexpr double kFinetuneFloor = 0.9;
constexpr double kDriftCeiling = 0.02;
constexpr double kQuant8Floor = 0.9;
constexpr double kQuant4Floor = 0.8;
constexpr double kPruneFloor = 0.85;
constexpr double kStochasticFloor = 0.9;
constexpr int kGarbledAbnormalMin = 9;
constexpr double kNegativeCeiling = 0.1;

int failures = 0;
std::ofstream log_file;

void emit(const std::string& line) {
  std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  if (log_file.is_open()) log_file << line << "\n" << std::flush;
}

void report(int id, bool pass, const std::string& detail) {
  char head[32];
  std::snprintf(head, sizeof head, "criterion %2d: %s  ", id, pass ? "PASS" : "FAIL");
  emit(head + detail);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void closed_form_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int t = 0; t < kClosedFormInstances; ++t) {
    const std::size_t m = 2 + t % 3, n = 3 + t % 4, np = t % 3;
    const Matrix w = testing::random_matrix(m, n, rng);
    const Matrix k = testing::random_matrix(n, 1, rng);
    const Matrix v = testing::random_matrix(m, 1, rng);
    const Matrix kp = np ? testing::random_matrix(n, np, rng) : Matrix(n, 0);
    const Matrix p = testing::random_projector(n, 1 + t % n, rng);
    const double lambda = 0.5 + 0.25 * (t % 4);
    const Matrix d = editor::closed_form_delta(w, k, v, kp, p, lambda);
    const Matrix ref = testing::brute_force_edit(w, k, v, kp, p, lambda);
    worst = std::max(worst, testing::relative_frobenius(d, ref));
  }
  const double secs = seconds_since(t0);
  report(1, worst <= kClosedFormTol && secs < kClosedFormSeconds,
         fmt("max relative Frobenius error %.2e over %.0f instances (tol 1e-6), %.2f s", worst,
             kClosedFormInstances, secs));
}

void null_space_criterion(const editor::InjectionResult& res) {
  std::map<std::size_t, const Matrix*> k0;
  for (std::size_t i = 0; i < res.cache.layers.size(); ++i)
    k0[res.cache.layers[i]] = &res.cache.keys[i];
  double worst_delta = 0.0;
  for (const auto& r : res.state.log) {
    const Matrix& keys = *k0.at(r.layer);
    const double denom = numkit::frobenius_norm(r.delta) * numkit::frobenius_norm(keys);
    if (denom == 0.0) continue;
    worst_delta =
        std::max(worst_delta, numkit::frobenius_norm(numkit::matmul(r.delta, keys)) / denom);
  }
  double worst_idem = 0.0, worst_sym = 0.0;
  for (const auto& l : res.state.layers) {
    const Matrix& p = l.projector;
    worst_idem = std::max(worst_idem, numkit::frobenius_norm(numkit::matmul(p, p) - p));
    worst_sym = std::max(worst_sym, numkit::frobenius_norm(p - numkit::transpose(p)));
  }
  report(2,
         worst_delta <= kNullSpaceTol && worst_idem <= kProjectorTol && worst_sym <= kProjectorTol,
         fmt("max |D K0|/(|D||K0|) %.2e over %.0f edits (tol 1e-6); |P^2-P| %.2e, |P-P^T| %.2e "
             "(tol 1e-8)",
             worst_delta, static_cast<double>(res.state.log.size()), worst_idem, worst_sym));
}

void gradient_criterion(const toylm::ModelParams& model, const toylm::Tokenizer& tok,
                        const std::string& sentence) {
  const std::vector<std::vector<int>> batch =
      toylm::encode_corpus(tok, std::vector<std::string>{sentence}, model.config.max_seq_len);
  const toylm::BatchGradient g = toylm::batch_gradient(model, batch);
  std::vector<std::pair<std::string, std::size_t>> tensors;
  toylm::for_each_tensor([&](const std::string& name, toylm::TensorKind,
                             const Matrix& w) { tensors.emplace_back(name, w.size()); },
                         model.weights);
  std::vector<const Matrix*> grads;
  toylm::for_each_tensor(
      [&](const std::string&, toylm::TensorKind, const Matrix& m) { grads.push_back(&m); }, g.grad);
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int s = 0; s < kGradientSamples; ++s) {
    const std::size_t t = rng() % tensors.size();
    const std::size_t idx = rng() % tensors[t].second;
    toylm::ModelParams q = model;
    Matrix* target = nullptr;
    toylm::for_each_tensor(
        [&](const std::string& n, toylm::TensorKind, Matrix& m) {
          if (n == tensors[t].first) target = &m;
        },
        q.weights);
    const double w0 = target->data()[idx];
    target->data()[idx] = w0 + kGradientStep;
    const double up = toylm::nll_loss(q, batch[0]);
    target->data()[idx] = w0 - kGradientStep;
    const double down = toylm::nll_loss(q, batch[0]);
    const double fd = (up - down) / (2.0 * kGradientStep);
    const double tape = grads[t]->data()[idx];
    worst = std::max(worst, std::abs(tape - fd) / std::max(std::abs(fd), 1e-3));
  }
  report(3, worst <= kGradientTol,
         fmt("max relative error %.2e over %.0f weights (tol 1e-4, denominator max(|fd|, 1e-3))",
             worst, kGradientSamples));
}

const robustness::RobustnessReport& find(const std::vector<robustness::RobustnessReport>& rs,
                                         const std::string& name) {
  for (const auto& r : rs) {
    if (r.scenario == name) return r;
  }
  throw std::runtime_error("missing scenario " + name);
}

bool determinism_criterion(const cli::RunConfig& base_cfg, const fs::path& fingerprinted) {
  const fs::path dir =
      fs::temp_directory_path() / ("fpedit_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  std::ostringstream log;
  std::vector<std::string> first, second;
  for (int run = 0; run < 2; ++run) {
    cli::RunConfig c = base_cfg;
    c.out = dir;
    cli::cmd_inject(c, log);
    c.checkpoint = dir / cli::kInjectCheckpoint;
    cli::cmd_verify(c, log);
    auto& out = run == 0 ? first : second;
    for (const char* f :
         {cli::kInjectCheckpoint, cli::kEditStateFile, cli::kInjectReport, cli::kVerifyReport}) {
      out.push_back(read_file(dir / f));
    }
    if (run == 0)
      fs::copy_file(dir / cli::kInjectCheckpoint, fingerprinted,
                    fs::copy_options::overwrite_existing);
  }
  fs::remove_all(dir);
  bool same = true;
  for (std::size_t i = 0; i < first.size(); ++i)
    same = same && !first[i].empty() && first[i] == second[i];
  return same;
}

}  // namespace

int main(int argc, char** argv) {
  bool report_only = false;
  fs::path data = FPEDIT_DATA_DIR;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--report") {
      report_only = true;
    } else if (a == "--data" && i + 1 < argc) {
      data = argv[++i];
    } else if (a == "--log" && i + 1 < argc) {
      log_file.open(argv[++i], std::ios::trunc);
    } else {
      std::fprintf(stderr, "usage: acceptance [--report] [--data DIR] [--log FILE]\n");
      return 2;
    }
  }
  try {
    cli::Settings s = cli::default_settings();
    s["checkpoint"] = (data / "base.fplm").string();
    s["pristine_checkpoint"] = s["checkpoint"];
    s["registry"] = (data / "registry.json").string();
    for (const char* c : {"pretrain", "heldout", "downstream", "regularization"}) {
      s[std::string("corpus.") + c] = (data / (std::string(c) + ".txt")).string();
    }
    const cli::RunConfig cfg = cli::build_config(s);

    const toylm::ModelParams base = toylm::load_checkpoint(cfg.checkpoint);
    const toylm::Tokenizer tok = toylm::Tokenizer::load(toylm::vocab_path_for(cfg.checkpoint));
    const auto registry = fingerprint::load_registry(cfg.registry);
    const auto heldout = toylm::read_lines(cfg.heldout_corpus.string());
    const auto preservation = toylm::encode_corpus(
        tok, toylm::read_lines(cfg.pretrain_corpus.string()), base.config.max_seq_len);

    closed_form_criterion();

    toylm::ModelParams fp = base;
    const auto t0 = std::chrono::steady_clock::now();
    const editor::InjectionResult res =
        editor::inject_set(fp, cfg.edit, tok, registry, preservation);
    const verify::FSRReport pre = verify::fsr(fp, tok, registry, cfg.verify);
    const double inject_secs = seconds_since(t0);

    null_space_criterion(res);
    gradient_criterion(base, tok, heldout.front());
    report(4, pre.fsr == 1.0 && inject_secs < kInjectSeconds,
           fmt("FSR_pre %.2f (need 1.00), injection + verification %.1f s (limit 180 s)", pre.fsr,
               inject_secs));

    robustness::SuiteInputs in;
    in.fingerprinted = &fp;
    in.pristine = &base;
    in.tokenizer = &tok;
    in.registry = registry;
    in.downstream = toylm::encode_corpus(tok, toylm::read_lines(cfg.downstream_corpus.string()),
                                         base.config.max_seq_len);
    in.heldout = heldout;
    in.regularization = toylm::read_lines(cfg.regularization_corpus.string());
    const auto rs = robustness::run_suite(in, robustness::scenario_names(), cfg.suite);
    for (const auto& r : rs) {
      if (!r.error.empty()) emit("scenario " + r.scenario + " error: " + r.error);
    }

    const auto& full = find(rs, "full-ft");
    const auto& lora = find(rs, "lowrank-ft");
    const auto& sft_full = find(rs, "sft-full-ft");
    const auto& sft_lora = find(rs, "sft-lowrank-ft");
    report(5,
           full.fsr_post >= kFinetuneFloor && lora.fsr_post >= kFinetuneFloor &&
               full.fsr_post >= sft_full.fsr_post && lora.fsr_post >= sft_lora.fsr_post,
           fmt("FSR_post full %.2f, low-rank %.2f (need >= 0.90); SFT baseline full %.2f, low-rank "
               "%.2f",
               full.fsr_post, lora.fsr_post, sft_full.fsr_post, sft_lora.fsr_post));

    const toylm::TokenCorpus held = toylm::encode_corpus(tok, heldout, base.config.max_seq_len);
    const double ppl_base = robustness::corpus_perplexity(base, held);
    const double drift = robustness::corpus_perplexity(fp, held) / ppl_base - 1.0;
    const double sft_drift = sft_full.ppl_pre / ppl_base - 1.0;
    report(6, drift <= kDriftCeiling && sft_drift > drift,
           fmt("held-out perplexity drift %.4f (limit 0.0200); SFT baseline drift %.4f", drift,
               sft_drift));

    const double q8 = find(rs, "quant8").fsr_post, q4 = find(rs, "quant4").fsr_post;
    const double p1 = find(rs, "prune0.1").fsr_post, p2 = find(rs, "prune0.2").fsr_post;
    const double p3 = find(rs, "prune0.3").fsr_post;
    report(7, q8 >= kQuant8Floor && q4 >= kQuant4Floor && p1 >= kPruneFloor && p2 >= kPruneFloor,
           fmt("8-bit %.2f (>= 0.90), 4-bit %.2f (>= 0.80), prune 0.1 %.2f, 0.2 %.2f (>= 0.85)", q8,
               q4, p1, p2) +
               fmt("; prune 0.3 %.2f (reported)", p3));

    const double st = find(rs, "stochastic").fsr_post;
    report(8, st >= kStochasticFloor,
           fmt("trial-averaged FSR %.3f over %.0f trials per trigger (need >= 0.90)", st,
               static_cast<double>(cfg.stochastic_policy.trials_per_trigger)));

    const auto& filt = find(rs, "ppl-filter").parameters;
    const int passed = filt.at("triggers_passed").get<int>();
    const int abnormal = filt.at("garbled_abnormal").get<int>();
    const int n_triggers = static_cast<int>(registry.size());
    const int n_garbled = static_cast<int>(filt.at("garbled").size());
    report(
        9, passed == n_triggers && abnormal >= kGarbledAbnormalMin && n_garbled == 10,
        fmt("triggers normal/marginal %.0f/%.0f; garbled abnormal %.0f/%.0f (need >= 9); ", passed,
            n_triggers, abnormal, n_garbled) +
            fmt("mu %.2f sigma %.2f", filt.at("mu").get<double>(), filt.at("sigma").get<double>()));

    const verify::FSRReport neg = verify::fsr(base, tok, registry, cfg.verify);
    report(10, neg.fsr <= kNegativeCeiling && !neg.claimed,
           fmt("never-injected FSR %.2f (need <= 0.10), decision ", neg.fsr) +
               (neg.claimed ? "claimed" : "not-claimed"));

    const fs::path cli_fp =
        fs::temp_directory_path() / ("fpedit_acceptance_fp_" + std::to_string(::getpid()));
    const bool same = determinism_criterion(cfg, cli_fp);
    const bool matches_library = toylm::load_checkpoint(cli_fp).weights == fp.weights;
    fs::remove(cli_fp);
    report(11, same && matches_library,
           std::string("inject and greedy verify outputs ") + (same ? "identical" : "differ") +
               " across two runs; CLI model " + (matches_library ? "matches" : "differs from") +
               " the in-process injection");
  } catch (const std::exception& e) {
    emit(std::string("acceptance aborted: ") + e.what());
    return 100;
  }
  emit(std::to_string(failures) + " of 11 criteria failed");
  return report_only ? 0 : failures;
}

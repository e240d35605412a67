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

#include "fpedit/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>

#include "fpedit/fingerprint/registry.hpp"
#include "fpedit/numkit/errors.hpp"
#include "fpedit/numkit/io.hpp"
#include "fpedit/toylm/checkpoint.hpp"
#include "fpedit/toylm/train.hpp"

namespace fpedit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) throw InputError(what + ": no path given");
  if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path.string());
}

struct Loaded {
  toylm::ModelParams model;
  toylm::Tokenizer tokenizer;
};

Loaded load_model(const fs::path& checkpoint, const std::string& what) {
  require_file(checkpoint, what);
  require_file(toylm::vocab_path_for(checkpoint), what + " vocabulary");
  Loaded l{toylm::load_checkpoint(checkpoint),
           toylm::Tokenizer::load(toylm::vocab_path_for(checkpoint))};
  if (l.tokenizer.size() != l.model.config.vocab_size) {
    throw InputError(what + ": vocabulary size " + std::to_string(l.tokenizer.size()) +
                     " does not match the checkpoint's " +
                     std::to_string(l.model.config.vocab_size));
  }
  return l;
}

void write_json(const fs::path& path, const json& j) {
  numkit::write_file_atomic(path, j.dump(2) + "\n");
}

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw InputError("cannot create output directory " + dir.string());
}

int print_plan(const RunConfig& cfg, std::ostream& log, const std::string& command,
               const std::vector<fs::path>& reads, const std::vector<std::string>& writes) {
  log << "dry run: " << command << "\n";
  for (const auto& r : reads) log << "  read  " << r.string() << "\n";
  for (const auto& w : writes) log << "  write " << (cfg.out / w).string() << "\n";
  log << "config " << cfg.echo().dump() << "\n";
  return kExitOk;
}

double heldout_perplexity(const toylm::ModelParams& model, const toylm::Tokenizer& tok,
                          const std::vector<std::string>& lines) {
  return robustness::corpus_perplexity(model,
                                       toylm::encode_corpus(tok, lines, model.config.max_seq_len));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::optional<double> scenario_floor(const std::string& scenario, double threshold) {
  if (scenario == "identity") return threshold;
  if (scenario == "full-ft" || scenario == "lowrank-ft" || scenario == "quant8" ||
      scenario == "stochastic") {
    return 0.9;
  }
  if (scenario == "quant4") return 0.8;
  if (scenario == "prune0.1" || scenario == "prune0.2") return 0.85;
  return std::nullopt;
}

int cmd_pretrain(const RunConfig& cfg, std::ostream& log) {
  for (const auto& [p, what] : {std::pair{cfg.pretrain_corpus, "pretraining corpus"},
                                {cfg.heldout_corpus, "held-out corpus"},
                                {cfg.downstream_corpus, "downstream corpus"},
                                {cfg.regularization_corpus, "regularization corpus"},
                                {cfg.registry, "registry"}}) {
    require_file(p, what);
  }
  const std::string ckpt = kPretrainCheckpoint;
  if (cfg.dry_run) {
    return print_plan(cfg, log, "pretrain",
                      {cfg.pretrain_corpus, cfg.heldout_corpus, cfg.downstream_corpus,
                       cfg.regularization_corpus, cfg.registry},
                      {ckpt, ckpt + ".vocab", kPretrainReport});
  }
  const auto pre = toylm::read_lines(cfg.pretrain_corpus.string());
  const auto held = toylm::read_lines(cfg.heldout_corpus.string());
  std::vector<std::string> all = pre;
  all.insert(all.end(), held.begin(), held.end());
  for (const auto& p : {cfg.downstream_corpus, cfg.regularization_corpus}) {
    const auto l = toylm::read_lines(p.string());
    all.insert(all.end(), l.begin(), l.end());
  }
  const auto registry = fingerprint::load_registry(cfg.registry);
  const auto extra = fingerprint::registry_words(registry);
  const toylm::Tokenizer tok = toylm::Tokenizer::build(all, extra);

  toylm::ModelConfig mc = cfg.model;
  mc.vocab_size = tok.size();
  toylm::ModelParams model = toylm::ModelParams::initialize(mc);
  const auto train = toylm::encode_corpus(tok, pre, mc.max_seq_len);
  const auto heldc = toylm::encode_corpus(tok, held, mc.max_seq_len);

  const double initial_loss = toylm::mean_loss(model, train);
  const double initial_ppl = robustness::corpus_perplexity(model, heldc);
  log << "pretrain: vocab " << tok.size() << ", " << model.parameter_count() << " parameters, "
      << train.size() << " sequences\n";
  json epochs = json::array();
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "pretrain");
  for (std::size_t e = 0; e < cfg.pretrain.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double loss = toylm::train_epoch(
        model, train, {cfg.pretrain.lr, shuffle_seed + e, cfg.pretrain.batch_size});
    if (!std::isfinite(loss) || loss > 10.0 * initial_loss) {
      throw NumericalError("pretrain: training diverged at epoch " + std::to_string(e) +
                           " (mean loss " + std::to_string(loss) + ")");
    }
    const double ppl = robustness::corpus_perplexity(model, heldc);
    epochs.push_back({{"epoch", e}, {"train_loss", loss}, {"heldout_ppl", ppl}});
    log << "  epoch " << e << "  train loss " << loss << "  held-out ppl " << ppl << "  ("
        << seconds_since(t0) << " s)\n";
  }
  const double final_ppl = robustness::corpus_perplexity(model, heldc);
  log << "pretrain: held-out perplexity " << initial_ppl << " -> " << final_ppl << "\n";

  ensure_out_dir(cfg.out);
  toylm::save_checkpoint(cfg.out / ckpt, model);
  tok.save(cfg.out / (ckpt + ".vocab"));
  write_json(cfg.out / kPretrainReport, {{"command", "pretrain"},
                                         {"config", cfg.echo()},
                                         {"vocab_size", tok.size()},
                                         {"parameters", model.parameter_count()},
                                         {"initial_heldout_ppl", initial_ppl},
                                         {"final_heldout_ppl", final_ppl},
                                         {"epochs", epochs}});
  return kExitOk;
}

int cmd_inject(const RunConfig& cfg, std::ostream& log) {
  require_file(cfg.registry, "registry");
  require_file(cfg.pretrain_corpus, "preservation corpus");
  require_file(cfg.heldout_corpus, "held-out corpus");
  const std::string ckpt = kInjectCheckpoint;
  if (cfg.dry_run) {
    require_file(cfg.checkpoint, "checkpoint");
    log << "plan: association then termination edits on layers";
    for (auto l : cfg.edit.edited_layers) log << " " << l;
    log << " for every registry pair\n";
    return print_plan(cfg, log, "inject",
                      {cfg.checkpoint, cfg.registry, cfg.pretrain_corpus, cfg.heldout_corpus},
                      {ckpt, ckpt + ".vocab", kEditStateFile, kInjectReport});
  }
  Loaded base = load_model(cfg.checkpoint, "checkpoint");
  const auto registry = fingerprint::load_registry(cfg.registry);
  const auto preservation =
      toylm::encode_corpus(base.tokenizer, toylm::read_lines(cfg.pretrain_corpus.string()),
                           base.model.config.max_seq_len);
  const auto held = toylm::read_lines(cfg.heldout_corpus.string());

  toylm::ModelParams model = base.model;
  const auto t0 = std::chrono::steady_clock::now();
  const editor::InjectionResult res =
      editor::inject_set(model, cfg.edit, base.tokenizer, registry, preservation);
  log << "inject: " << registry.size() << " pairs in " << seconds_since(t0) << " s\n";

  const verify::FSRReport fsr = verify::fsr(model, base.tokenizer, registry, cfg.verify);
  const double ppl_pre = heldout_perplexity(base.model, base.tokenizer, held);
  const double ppl_post = heldout_perplexity(model, base.tokenizer, held);

  json pairs = json::array();
  for (const auto& p : res.report.pairs) {
    json e{{"id", p.id}, {"success", p.success}, {"continuation", p.continuation}};
    if (!p.error.empty()) e["error"] = p.error;
    pairs.push_back(std::move(e));
    if (!p.error.empty()) log << "  " << p.id << " skipped: " << p.error << "\n";
  }
  json layers = json::array();
  for (std::size_t i = 0; i < res.state.layers.size(); ++i) {
    const auto& ls = res.state.layers[i];
    const auto proj = editor::compute_projection(res.cache.keys[i], cfg.edit.null_space_threshold);
    layers.push_back({{"layer", ls.layer},
                      {"kept_dimensions", proj.kept_dimensions},
                      {"injected_keys", ls.kp.cols()},
                      {"prior_edit_residual", editor::prior_edit_residual(model, ls)}});
  }
  json edits = json::array();
  for (const auto& r : res.state.log) {
    edits.push_back({{"pair", r.pair_id},
                     {"stage", r.stage},
                     {"layer", r.layer},
                     {"residual_norm", r.residual_norm},
                     {"delta_norm", r.delta_norm},
                     {"initial_nll", r.initial_nll},
                     {"final_nll", r.final_nll},
                     {"value_steps", r.value_steps}});
  }

  ensure_out_dir(cfg.out);
  toylm::save_checkpoint(cfg.out / ckpt, model);
  base.tokenizer.save(cfg.out / (ckpt + ".vocab"));
  editor::save_edit_state(cfg.out / kEditStateFile, res.state);
  write_json(cfg.out / kInjectReport, {{"command", "inject"},
                                       {"config", cfg.echo()},
                                       {"pairs", pairs},
                                       {"layers", layers},
                                       {"edits", edits},
                                       {"heldout_ppl_pre", ppl_pre},
                                       {"heldout_ppl_post", ppl_post},
                                       {"heldout_ppl_drift", ppl_post / ppl_pre - 1.0},
                                       {"fsr_pre", fsr.to_json()}});
  log << fsr.to_table();
  log << "inject: held-out perplexity " << ppl_pre << " -> " << ppl_post << "\n";
  return fsr.claimed ? kExitOk : kExitVerificationFailure;
}

int cmd_verify(const RunConfig& cfg, std::ostream& log) {
  require_file(cfg.registry, "registry");
  if (cfg.dry_run) {
    require_file(cfg.checkpoint, "checkpoint");
    log << "plan: greedy verification" << (cfg.stochastic ? " plus stochastic trials" : "") << "\n";
    return print_plan(cfg, log, "verify", {cfg.checkpoint, cfg.registry}, {kVerifyReport});
  }
  const Loaded m = load_model(cfg.checkpoint, "checkpoint");
  const auto registry = fingerprint::load_registry(cfg.registry);
  const verify::FSRReport greedy = verify::fsr(m.model, m.tokenizer, registry, cfg.verify);
  json report{{"command", "verify"}, {"config", cfg.echo()}, {"greedy", greedy.to_json()}};
  bool claimed = greedy.claimed;
  log << greedy.to_table();
  if (cfg.stochastic) {
    const verify::FSRReport s =
        verify::stochastic_fsr(m.model, m.tokenizer, registry, cfg.stochastic_policy);
    report["stochastic"] = s.to_json();
    claimed = claimed && s.claimed;
    log << "stochastic:\n" << s.to_table();
  }
  report["decision"] = claimed ? "claimed" : "not-claimed";
  ensure_out_dir(cfg.out);
  write_json(cfg.out / kVerifyReport, report);
  return claimed ? kExitOk : kExitVerificationFailure;
}

int cmd_suite(const RunConfig& cfg, std::ostream& log) {
  require_file(cfg.registry, "registry");
  for (const auto& [p, what] : {std::pair{cfg.downstream_corpus, "downstream corpus"},
                                {cfg.heldout_corpus, "held-out corpus"},
                                {cfg.regularization_corpus, "regularization corpus"}}) {
    require_file(p, what);
  }
  if (!cfg.edit_state.empty()) require_file(cfg.edit_state, "edit state");
  if (cfg.dry_run) {
    require_file(cfg.checkpoint, "checkpoint");
    require_file(cfg.pristine_checkpoint, "pristine checkpoint");
    log << "plan: scenarios";
    for (const auto& s : cfg.scenarios) log << " " << s;
    log << "\n";
    return print_plan(cfg, log, "suite",
                      {cfg.checkpoint, cfg.pristine_checkpoint, cfg.registry, cfg.downstream_corpus,
                       cfg.heldout_corpus, cfg.regularization_corpus},
                      {kSuiteReport, kSuiteTable});
  }
  const Loaded fp = load_model(cfg.checkpoint, "checkpoint");
  const Loaded pristine = load_model(cfg.pristine_checkpoint, "pristine checkpoint");
  if (pristine.tokenizer.tokens() != fp.tokenizer.tokens()) {
    throw InputError("pristine checkpoint uses a different vocabulary");
  }
  json state_summary;
  if (!cfg.edit_state.empty()) {
    const editor::EditState st = editor::load_edit_state(cfg.edit_state);
    state_summary = json::array();
    for (const auto& ls : st.layers) {
      state_summary.push_back({{"layer", ls.layer},
                               {"injected_keys", ls.kp.cols()},
                               {"prior_edit_residual", editor::prior_edit_residual(fp.model, ls)}});
    }
  }

  robustness::SuiteInputs in;
  in.fingerprinted = &fp.model;
  in.pristine = &pristine.model;
  in.tokenizer = &fp.tokenizer;
  in.registry = fingerprint::load_registry(cfg.registry);
  in.downstream = toylm::encode_corpus(
      fp.tokenizer, toylm::read_lines(cfg.downstream_corpus.string()), fp.model.config.max_seq_len);
  in.heldout = toylm::read_lines(cfg.heldout_corpus.string());
  in.regularization = toylm::read_lines(cfg.regularization_corpus.string());

  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = robustness::run_suite(in, cfg.scenarios, cfg.suite);
  log << "suite: " << reports.size() << " scenarios in " << seconds_since(t0) << " s\n";

  bool all_met = true;
  json rows = json::array();
  for (const auto& r : reports) {
    json j = r.to_json();
    if (r.method == "fpedit") {
      bool met = r.error.empty();
      if (const auto floor = scenario_floor(r.scenario, cfg.suite.threshold)) {
        j["required_fsr"] = *floor;
        met = met && r.fsr_post >= *floor;
      } else if (r.scenario == "ppl-filter") {
        const std::size_t garbled = r.parameters.value("garbled_abnormal", std::size_t{0});
        met = met && r.parameters.value("triggers_passed", std::size_t{0}) == in.registry.size() &&
              10 * garbled >= 9 * cfg.suite.garbled_count;
      }
      j["met"] = met;
      if (r.scenario != "prune0.3") all_met = all_met && met;
    }
    rows.push_back(std::move(j));
  }
  const std::string table = robustness::render_table(reports);
  json report{
      {"command", "suite"}, {"config", cfg.echo()}, {"scenarios", rows}, {"all_met", all_met}};
  if (!state_summary.is_null()) report["edit_state"] = state_summary;
  ensure_out_dir(cfg.out);
  write_json(cfg.out / kSuiteReport, report);
  numkit::write_file_atomic(cfg.out / kSuiteTable, table);
  log << table;
  return all_met ? kExitOk : kExitVerificationFailure;
}

int cmd_registry_validate(const RunConfig& cfg, std::ostream& log) {
  require_file(cfg.registry, "registry");
  const auto registry = fingerprint::load_registry(cfg.registry);
  std::optional<toylm::Tokenizer> tok;
  if (!cfg.checkpoint.empty() && fs::is_regular_file(toylm::vocab_path_for(cfg.checkpoint))) {
    tok = toylm::Tokenizer::load(toylm::vocab_path_for(cfg.checkpoint));
  }
  std::size_t problems = 0;
  for (const auto& p : registry.pairs) {
    const auto violations = fingerprint::validate_pair(
        p,
        tok ? *tok : toylm::Tokenizer::build(std::vector<std::string>{p.trigger + " " + p.target}));
    for (const auto& v : violations) {
      log << p.id << ": " << v.field << ": " << v.message << "\n";
      ++problems;
    }
  }
  log << "registry: " << registry.size() << " pairs, " << problems << " violation(s)"
      << (tok ? "" : " (no vocabulary found; token checks skipped)") << "\n";
  return problems == 0 ? kExitOk : kExitInputError;
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumericalFailure;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternalError;
  }
}

}  // namespace fpedit::cli

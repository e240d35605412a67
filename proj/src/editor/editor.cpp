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

#include "fpedit/editor/editor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <utility>

#include "fpedit/fingerprint/match.hpp"
#include "fpedit/numkit/errors.hpp"
#include "fpedit/numkit/io.hpp"
#include "fpedit/numkit/linalg.hpp"
#include "fpedit/toylm/decode.hpp"
#include "json.hpp"

namespace fpedit::editor {

namespace {

using numkit::GradTape;
using numkit::Slot;

constexpr std::uint32_t kStateVersion = 1;

std::vector<int> strict_prompt(const toylm::Tokenizer& tokenizer, std::string_view text) {
  const auto words = toylm::Tokenizer::split_words(text);
  if (words.empty()) throw InputError("editor: prompt has no words");
  for (const auto& w : words) {
    if (!tokenizer.contains(w)) throw InputError("editor: word not in vocabulary: " + w);
  }
  return tokenizer.encode_prompt(text);
}

std::vector<int> strict_words(const toylm::Tokenizer& tokenizer, std::string_view text) {
  std::vector<int> ids = strict_prompt(tokenizer, text);
  ids.erase(ids.begin());
  return ids;
}

Matrix row_as_column(const Matrix& m, std::size_t row) {
  Matrix out(m.cols(), 1);
  for (std::size_t j = 0; j < m.cols(); ++j) out(j, 0) = m(row, j);
  return out;
}

void check_layer(const ModelParams& model, std::size_t layer) {
  if (layer >= model.config.n_layers) throw InputError("editor: layer outside the model");
}

void check_prompt(const ModelParams& model, std::span<const int> prompt) {
  if (prompt.empty()) throw InputError("editor: empty prompt");
  toylm::validate_tokens(model.config, prompt);
}

struct Stage {
  std::string name;
  std::vector<int> prompt;
  std::vector<int> target;
};

void run_stage(ModelParams& model, EditState& state, const EditConfig& cfg,
               const std::string& pair_id, const Stage& stage) {
  const std::size_t n = cfg.edited_layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t layer = cfg.edited_layers[i];
    LayerEditState& ls = state.layer(layer);
    Matrix& w = model.weights.blocks[layer].ffn_proj;

    const Matrix k = compute_key(model, layer, stage.prompt);
    const Matrix v_cur = numkit::matmul(w, k);
    const ValueSearch search = optimize_value(model, layer, stage.prompt, stage.target, cfg);
    const double share = 1.0 / static_cast<double>(n - i);
    Matrix v_star = search.v_star;
    v_star -= v_cur;
    v_star *= share;
    v_star += v_cur;

    Matrix delta =
        closed_form_delta(w, k, v_star, ls.kp, ls.projector, cfg.identity_regularizer_weight);
    if (!delta.all_finite()) throw NumericalError("editor: non-finite delta", 0.0);
    w += delta;

    ls.kp = numkit::append_column(ls.kp, k.data());
    ls.vp = numkit::append_column(ls.vp, numkit::matmul(w, k).data());

    Matrix residual = v_star;
    residual -= v_cur;
    EditRecord rec;
    rec.pair_id = pair_id;
    rec.stage = stage.name;
    rec.layer = layer;
    rec.residual_norm = numkit::frobenius_norm(residual);
    rec.delta_norm = numkit::frobenius_norm(delta);
    rec.initial_nll = search.initial_nll;
    rec.final_nll = search.final_nll;
    rec.value_steps = search.steps;
    rec.delta = std::move(delta);
    state.log.push_back(std::move(rec));
  }
}

Stage association_stage(const toylm::Tokenizer& tokenizer, const fingerprint::FingerprintPair& p) {
  return {"association", strict_prompt(tokenizer, p.trigger), strict_words(tokenizer, p.target)};
}

Stage termination_stage(const toylm::Tokenizer& tokenizer, const fingerprint::FingerprintPair& p) {
  return {"termination",
          strict_prompt(tokenizer, p.trigger + " " + p.target),
          {toylm::Tokenizer::kEos}};
}

}  // namespace

void EditConfig::validate(std::size_t n_layers) const {
  if (edited_layers.empty()) throw InputError("EditConfig: edited_layers is empty");
  for (std::size_t i = 0; i < edited_layers.size(); ++i) {
    if (edited_layers[i] >= n_layers) throw InputError("EditConfig: edited layer outside model");
    if (i > 0 && edited_layers[i] <= edited_layers[i - 1]) {
      throw InputError("EditConfig: edited_layers must be strictly ascending");
    }
  }
  if (!(null_space_threshold > 0.0)) throw InputError("EditConfig: threshold must be > 0");
  if (!(v_learning_rate > 0.0)) throw InputError("EditConfig: v_learning_rate must be > 0");
  if (!(identity_regularizer_weight > 0.0)) {
    throw InputError("EditConfig: identity_regularizer_weight must be > 0");
  }
  if (!(early_stop_nll >= 0.0)) throw InputError("EditConfig: early_stop_nll must be >= 0");
}

std::vector<std::pair<std::size_t, std::size_t>> preservation_positions(
    const toylm::TokenCorpus& corpus, std::size_t count, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> positions;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    for (std::size_t p = 0; p < corpus[s].size(); ++p) positions.emplace_back(s, p);
  }
  if (positions.size() < count) {
    throw InputError("collect_preservation_keys: corpus has " + std::to_string(positions.size()) +
                     " positions, " + std::to_string(count) + " requested");
  }
  if (count == 0) return {};
  const auto order = toylm::shuffled_order(positions.size(), seed);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) out.push_back(positions[order[j]]);
  return out;
}

PreservationCache collect_preservation_cache(const ModelParams& model,
                                             const toylm::TokenCorpus& corpus,
                                             std::span<const std::size_t> layers, std::size_t count,
                                             std::uint64_t seed) {
  for (std::size_t l : layers) check_layer(model, l);
  const auto draws = preservation_positions(corpus, count, seed);
  PreservationCache cache;
  cache.layers.assign(layers.begin(), layers.end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    cache.keys.emplace_back(model.config.d_ff, count);
  }
  if (count == 0) return cache;

  // Group draws by sentence so each sentence runs through the model once.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_sentence(corpus.size());
  for (std::size_t j = 0; j < count; ++j) {
    by_sentence[draws[j].first].emplace_back(j, draws[j].second);
  }
  std::vector<std::size_t> active;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (!by_sentence[s].empty()) active.push_back(s);
  }
  const auto n_active = static_cast<std::ptrdiff_t>(active.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t a = 0; a < n_active; ++a) {
    const std::size_t s = active[static_cast<std::size_t>(a)];
    const toylm::ForwardPass fp = toylm::forward(model, corpus[s]);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const Matrix& keys = fp.ffn_key[layers[li]];
      Matrix& dst = cache.keys[li];
      for (const auto& [col, pos] : by_sentence[s]) {
        for (std::size_t r = 0; r < keys.cols(); ++r) dst(r, col) = keys(pos, r);
      }
    }
  }
  return cache;
}

Matrix collect_preservation_keys(const ModelParams& model, const toylm::TokenCorpus& corpus,
                                 std::size_t layer, std::size_t count, std::uint64_t seed) {
  const std::size_t layers[] = {layer};
  return std::move(collect_preservation_cache(model, corpus, layers, count, seed).keys[0]);
}

NullSpaceProjector compute_projection(const Matrix& k0, double threshold) {
  if (!(threshold > 0.0)) throw InputError("compute_projection: threshold must be > 0");
  const std::size_t d = k0.rows();
  NullSpaceProjector out;
  if (k0.cols() == 0) {
    out.projector = Matrix::identity(d);
    out.eigenvalues.assign(d, 0.0);
    out.kept_dimensions = d;
    return out;
  }
  Matrix cov = numkit::matmul_nt(k0, k0);
  cov *= 1.0 / static_cast<double>(k0.cols());
  // Remove rounding asymmetry before the symmetric solver sees it.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double m = 0.5 * (cov(i, j) + cov(j, i));
      cov(i, j) = m;
      cov(j, i) = m;
    }
  }
  const numkit::EigenDecomposition eig = numkit::symmetric_eigendecomposition(cov);
  out.eigenvalues = eig.eigenvalues;
  std::size_t keep = 0;
  while (keep < d && eig.eigenvalues[keep] <= threshold) ++keep;
  out.kept_dimensions = keep;
  Matrix u(d, keep);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < keep; ++j) u(i, j) = eig.eigenvectors(i, j);
  }
  Matrix p = numkit::matmul_nt(u, u);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double m = 0.5 * (p(i, j) + p(j, i));
      p(i, j) = m;
      p(j, i) = m;
    }
  }
  out.projector = std::move(p);
  return out;
}

Matrix compute_key(const ModelParams& model, std::size_t layer, std::span<const int> prompt) {
  check_layer(model, layer);
  check_prompt(model, prompt);
  const toylm::ForwardPass fp = toylm::forward(model, prompt);
  return row_as_column(fp.ffn_key[layer], prompt.size() - 1);
}

Matrix compute_key(const ModelParams& model, const toylm::Tokenizer& tokenizer, std::size_t layer,
                   std::string_view trigger) {
  return compute_key(model, layer, strict_prompt(tokenizer, trigger));
}

Matrix current_value(const ModelParams& model, std::size_t layer, std::span<const int> prompt) {
  check_layer(model, layer);
  check_prompt(model, prompt);
  const toylm::ForwardPass fp = toylm::forward(model, prompt);
  return row_as_column(fp.ffn_output[layer], prompt.size() - 1);
}

namespace {

struct TargetProgram {
  GradTape tape;
  Slot z;
  Slot loss;
};

// Tape for prompt ++ target with the layer FFN output at the last prompt
// position read from leaf z.
void build_target_program(TargetProgram& prog, const ModelParams& model, std::size_t layer,
                          std::span<const int> prompt, std::span<const int> target,
                          const Matrix& z0) {
  std::vector<int> tokens(prompt.begin(), prompt.end());
  tokens.insert(tokens.end(), target.begin(), target.end());
  toylm::validate_tokens(model.config, tokens);
  const toylm::WeightSlots w = toylm::bind_weights(prog.tape, model.weights, false);
  prog.z = prog.tape.variable(numkit::transpose(z0));
  const toylm::FfnOverride ov{layer, prompt.size() - 1, prog.z};
  const toylm::ForwardTrace tr = toylm::record_forward(prog.tape, model.config, w, tokens, ov);
  std::vector<int> targets(tokens.size(), -1);
  std::vector<double> weights(tokens.size(), 0.0);
  for (std::size_t j = 0; j < target.size(); ++j) {
    targets[prompt.size() - 1 + j] = target[j];
    weights[prompt.size() - 1 + j] = 1.0;
  }
  prog.loss = prog.tape.cross_entropy(tr.logits, std::move(targets), std::move(weights));
}

}  // namespace

double target_nll(const ModelParams& model, std::span<const int> prompt,
                  std::span<const int> target,
                  const std::optional<std::pair<std::size_t, Matrix>>& value_override) {
  check_prompt(model, prompt);
  if (target.empty()) throw InputError("target_nll: empty target");
  if (value_override) {
    check_layer(model, value_override->first);
    TargetProgram prog;
    build_target_program(prog, model, value_override->first, prompt, target,
                         value_override->second);
    return prog.tape.value(prog.loss)(0, 0);
  }
  std::vector<int> tokens(prompt.begin(), prompt.end());
  tokens.insert(tokens.end(), target.begin(), target.end());
  const Matrix logp = toylm::log_softmax_rows(toylm::forward_logits(model, tokens));
  double nll = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    nll -= logp(prompt.size() - 1 + j, static_cast<std::size_t>(target[j]));
  }
  return nll;
}

ValueSearch optimize_value(const ModelParams& model, std::size_t layer, std::span<const int> prompt,
                           std::span<const int> target, const EditConfig& cfg) {
  check_layer(model, layer);
  check_prompt(model, prompt);
  if (target.empty()) throw InputError("optimize_value: target has no tokens");
  ValueSearch out;
  out.v_star = current_value(model, layer, prompt);
  TargetProgram prog;
  build_target_program(prog, model, layer, prompt, target, out.v_star);
  Matrix z = prog.tape.value(prog.z);
  double nll = prog.tape.value(prog.loss)(0, 0);
  if (!std::isfinite(nll)) throw NumericalError("optimize_value: non-finite target NLL", 0.0);
  out.initial_nll = nll;
  for (std::size_t step = 0; step < cfg.v_steps && nll >= cfg.early_stop_nll; ++step) {
    prog.tape.backward(prog.loss);
    Matrix g = prog.tape.adjoint(prog.z);
    g *= cfg.v_learning_rate;
    z -= g;
    prog.tape.set_value(prog.z, z);
    prog.tape.replay();
    nll = prog.tape.value(prog.loss)(0, 0);
    if (!std::isfinite(nll) || !z.all_finite()) {
      throw NumericalError("optimize_value: non-finite target NLL", 0.0);
    }
    out.steps = step + 1;
  }
  out.final_nll = nll;
  out.v_star = numkit::transpose(z);
  return out;
}

Matrix closed_form_delta(const Matrix& w_proj, const Matrix& k_star, const Matrix& v_star,
                         const Matrix& kp, const Matrix& projector, double lambda) {
  const std::size_t d_out = w_proj.rows();
  const std::size_t d_in = w_proj.cols();
  if (k_star.rows() != d_in || k_star.cols() != 1 || v_star.rows() != d_out || v_star.cols() != 1 ||
      projector.rows() != d_in || projector.cols() != d_in) {
    throw InputError("closed_form_delta: shape mismatch");
  }
  const bool has_prior = kp.cols() > 0;
  if (has_prior && kp.rows() != d_in) throw InputError("closed_form_delta: Kp shape mismatch");

  Matrix r = v_star;
  r -= numkit::matmul(w_proj, k_star);

  // M = Kp Kp^T P + k k^T P + lambda I. Delta = r k^T P M^-1, so with
  // y^T = k^T P M^-1 we solve M^T y = P k, where M^T = P (Kp Kp^T + k k^T) + lambda I.
  Matrix gram = numkit::matmul_nt(k_star, k_star);
  if (has_prior) gram += numkit::matmul_nt(kp, kp);
  Matrix a = numkit::matmul(projector, gram);
  for (std::size_t i = 0; i < d_in; ++i) a(i, i) += lambda;
  const Matrix y = numkit::solve_linear_system(a, numkit::matmul(projector, k_star));
  return numkit::outer(r.data(), y.data());
}

LayerEditState& EditState::layer(std::size_t index) {
  for (auto& l : layers) {
    if (l.layer == index) return l;
  }
  throw InputError("EditState: layer " + std::to_string(index) + " not tracked");
}

const LayerEditState& EditState::layer(std::size_t index) const {
  for (const auto& l : layers) {
    if (l.layer == index) return l;
  }
  throw InputError("EditState: layer " + std::to_string(index) + " not tracked");
}

EditState initial_state(const PreservationCache& cache, double threshold) {
  EditState state;
  for (std::size_t i = 0; i < cache.layers.size(); ++i) {
    LayerEditState ls;
    ls.layer = cache.layers[i];
    ls.projector = compute_projection(cache.keys[i], threshold).projector;
    state.layers.push_back(std::move(ls));
  }
  return state;
}

void inject_association(ModelParams& model, EditState& state, const EditConfig& cfg,
                        const toylm::Tokenizer& tokenizer,
                        const fingerprint::FingerprintPair& pair) {
  cfg.validate(model.config.n_layers);
  run_stage(model, state, cfg, pair.id, association_stage(tokenizer, pair));
}

void inject_termination(ModelParams& model, EditState& state, const EditConfig& cfg,
                        const toylm::Tokenizer& tokenizer,
                        const fingerprint::FingerprintPair& pair) {
  cfg.validate(model.config.n_layers);
  run_stage(model, state, cfg, pair.id, termination_stage(tokenizer, pair));
}

InjectionResult inject_set(ModelParams& model, const EditConfig& cfg,
                           const toylm::Tokenizer& tokenizer,
                           const fingerprint::FingerprintRegistry& registry,
                           const toylm::TokenCorpus& preservation_corpus) {
  using Clock = std::chrono::steady_clock;
  cfg.validate(model.config.n_layers);
  const auto t0 = Clock::now();
  InjectionResult result;
  result.cache = collect_preservation_cache(model, preservation_corpus, cfg.edited_layers,
                                            cfg.preservation_sample_count, cfg.harvest_seed);
  result.state = initial_state(result.cache, cfg.null_space_threshold);

  for (const auto& pair : registry.pairs) {
    const auto p0 = Clock::now();
    PairOutcome outcome;
    outcome.id = pair.id;
    const toylm::Weights snapshot = model.weights;
    EditState state_snapshot = result.state;
    try {
      const Stage assoc = association_stage(tokenizer, pair);
      const Stage term = termination_stage(tokenizer, pair);
      run_stage(model, result.state, cfg, pair.id, assoc);
      run_stage(model, result.state, cfg, pair.id, term);
      const auto ids = toylm::greedy_decode(model, assoc.prompt, assoc.target.size() + 2);
      outcome.continuation = tokenizer.decode(ids);
      outcome.success = fingerprint::response_matches(outcome.continuation, pair.target);
    } catch (const Error& e) {
      model.weights = snapshot;
      result.state = std::move(state_snapshot);
      outcome.error = e.what();
    }
    outcome.seconds = std::chrono::duration<double>(Clock::now() - p0).count();
    result.report.pairs.push_back(std::move(outcome));
  }
  result.report.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return result;
}

double prior_edit_residual(const ModelParams& model, const LayerEditState& layer) {
  if (layer.kp.cols() == 0) return 0.0;
  Matrix diff = numkit::matmul(model.weights.blocks[layer.layer].ffn_proj, layer.kp);
  diff -= layer.vp;
  const double denom = numkit::frobenius_norm(layer.vp);
  return denom > 0.0 ? numkit::frobenius_norm(diff) / denom : numkit::frobenius_norm(diff);
}

std::string serialize_edit_state(const EditState& state) {
  std::ostringstream out(std::ios::binary);
  numkit::write_magic(out, "FPES");
  numkit::write_u32(out, kStateVersion);
  numkit::write_u32(out, static_cast<std::uint32_t>(state.layers.size()));
  for (const auto& l : state.layers) {
    numkit::write_u32(out, static_cast<std::uint32_t>(l.layer));
    numkit::write_matrix(out, l.kp);
    numkit::write_matrix(out, l.vp);
  }
  nlohmann::json log = nlohmann::json::array();
  for (const auto& r : state.log) {
    log.push_back({{"pair_id", r.pair_id},
                   {"stage", r.stage},
                   {"layer", r.layer},
                   {"residual_norm", r.residual_norm},
                   {"delta_norm", r.delta_norm},
                   {"initial_nll", r.initial_nll},
                   {"final_nll", r.final_nll},
                   {"value_steps", r.value_steps}});
  }
  numkit::write_string(out, log.dump(2));
  return out.str();
}

EditState deserialize_edit_state(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  numkit::expect_magic(in, "FPES");
  if (numkit::read_u32(in) != kStateVersion) throw InputError("edit state: unsupported version");
  EditState state;
  const std::uint32_t n = numkit::read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    LayerEditState l;
    l.layer = numkit::read_u32(in);
    l.kp = numkit::read_matrix(in);
    l.vp = numkit::read_matrix(in);
    if (l.kp.cols() != l.vp.cols()) throw InputError("edit state: Kp/Vp column counts differ");
    state.layers.push_back(std::move(l));
  }
  const std::string text = numkit::read_string(in);
  if (in.peek() != std::char_traits<char>::eof()) throw InputError("edit state: trailing bytes");
  nlohmann::json log;
  try {
    log = nlohmann::json::parse(text);
    for (const auto& r : log) {
      EditRecord rec;
      rec.pair_id = r.at("pair_id").get<std::string>();
      rec.stage = r.at("stage").get<std::string>();
      rec.layer = r.at("layer").get<std::size_t>();
      rec.residual_norm = r.at("residual_norm").get<double>();
      rec.delta_norm = r.at("delta_norm").get<double>();
      rec.initial_nll = r.at("initial_nll").get<double>();
      rec.final_nll = r.at("final_nll").get<double>();
      rec.value_steps = r.at("value_steps").get<std::size_t>();
      state.log.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("edit state: bad edit log: ") + e.what());
  }
  return state;
}

void save_edit_state(const std::filesystem::path& path, const EditState& state) {
  numkit::write_file_atomic(path, serialize_edit_state(state));
}

EditState load_edit_state(const std::filesystem::path& path) {
  return deserialize_edit_state(numkit::read_file(path));
}

}  // namespace fpedit::editor

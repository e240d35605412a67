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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpedit/fingerprint/registry.hpp"
#include "fpedit/numkit/matrix.hpp"
#include "fpedit/toylm/model.hpp"
#include "fpedit/toylm/tokenizer.hpp"
#include "fpedit/toylm/train.hpp"

namespace fpedit::editor {

using numkit::Matrix;
using toylm::ModelParams;

struct EditConfig {
  std::vector<std::size_t> edited_layers{2, 3, 4};
  double v_learning_rate = 5e-1;
  std::size_t v_steps = 40;
  double null_space_threshold = 2e-2;
  std::size_t preservation_sample_count = 2000;
  double identity_regularizer_weight = 1.0;
  // Value search stops once the summed target NLL drops below this.
  double early_stop_nll = 0.01;
  std::uint64_t harvest_seed = 0;

  void validate(std::size_t n_layers) const;
};

// Preservation keys K0 for each edited layer, one key per column.
struct PreservationCache {
  std::vector<std::size_t> layers;
  std::vector<Matrix> keys;  // d_ff x sample_count
};

struct NullSpaceProjector {
  Matrix projector;                 // d_ff x d_ff, symmetric idempotent
  std::vector<double> eigenvalues;  // of the normalised key covariance, ascending
  std::size_t kept_dimensions = 0;
};

// The (sentence, position) draws behind column j of the harvested keys.
std::vector<std::pair<std::size_t, std::size_t>> preservation_positions(
    const toylm::TokenCorpus& corpus, std::size_t count, std::uint64_t seed);

// (sentence, position) pairs are drawn without replacement with `seed`;
// column j is the layer-`layer` key at the j-th draw.
Matrix collect_preservation_keys(const ModelParams& model, const toylm::TokenCorpus& corpus,
                                 std::size_t layer, std::size_t count, std::uint64_t seed);
PreservationCache collect_preservation_cache(const ModelParams& model,
                                             const toylm::TokenCorpus& corpus,
                                             std::span<const std::size_t> layers, std::size_t count,
                                             std::uint64_t seed);

// Keeps eigenvectors of K0 K0^T / n whose eigenvalue is <= threshold.
NullSpaceProjector compute_projection(const Matrix& k0, double threshold);

// Layer key at the last position of `prompt` (d_ff x 1).
Matrix compute_key(const ModelParams& model, std::size_t layer, std::span<const int> prompt);
Matrix compute_key(const ModelParams& model, const toylm::Tokenizer& tokenizer, std::size_t layer,
                   std::string_view trigger);

// Layer FFN output at the last position of `prompt` (d_model x 1).
Matrix current_value(const ModelParams& model, std::size_t layer, std::span<const int> prompt);

struct ValueSearch {
  Matrix v_star;  // d_model x 1
  double initial_nll = 0.0;
  double final_nll = 0.0;
  std::size_t steps = 0;
};

// Gradient descent on the layer-`layer` FFN output at the last prompt
// position, minimising the summed teacher-forced NLL of `target`.
ValueSearch optimize_value(const ModelParams& model, std::size_t layer, std::span<const int> prompt,
                           std::span<const int> target, const EditConfig& cfg);

// Summed teacher-forced NLL of target after prompt, with an optional
// replacement value for the layer FFN output at the last prompt position.
double target_nll(const ModelParams& model, std::span<const int> prompt,
                  std::span<const int> target,
                  const std::optional<std::pair<std::size_t, Matrix>>& value_override = {});

// Delta = (v - W k) k^T P (Kp Kp^T P + k k^T P + lambda I)^-1, realised as a
// solve against the transposed system.
Matrix closed_form_delta(const Matrix& w_proj, const Matrix& k_star, const Matrix& v_star,
                         const Matrix& kp, const Matrix& projector, double lambda = 1.0);

struct LayerEditState {
  std::size_t layer = 0;
  Matrix projector;  // not persisted
  Matrix kp;         // d_ff x m
  Matrix vp;         // d_model x m
};

struct EditRecord {
  std::string pair_id;
  std::string stage;  // "association" | "termination"
  std::size_t layer = 0;
  double residual_norm = 0.0;
  double delta_norm = 0.0;
  double initial_nll = 0.0;
  double final_nll = 0.0;
  std::size_t value_steps = 0;
  Matrix delta;  // in memory only
};

struct EditState {
  std::vector<LayerEditState> layers;
  std::vector<EditRecord> log;

  LayerEditState& layer(std::size_t index);
  const LayerEditState& layer(std::size_t index) const;
};

// Fresh state: projectors from the cache and empty Kp/Vp.
EditState initial_state(const PreservationCache& cache, double threshold);

// Association edit: trigger -> target, spread over the edited layers.
void inject_association(ModelParams& model, EditState& state, const EditConfig& cfg,
                        const toylm::Tokenizer& tokenizer,
                        const fingerprint::FingerprintPair& pair);
// Termination edit: trigger + " " + target -> <eos>.
void inject_termination(ModelParams& model, EditState& state, const EditConfig& cfg,
                        const toylm::Tokenizer& tokenizer,
                        const fingerprint::FingerprintPair& pair);

struct PairOutcome {
  std::string id;
  bool success = false;
  std::string error;  // non-empty when the pair was skipped
  std::string continuation;
  double seconds = 0.0;
};

struct InjectionReport {
  std::vector<PairOutcome> pairs;
  double seconds = 0.0;
};

struct InjectionResult {
  EditState state;
  PreservationCache cache;
  InjectionReport report;
};

// Builds K0 and P once from the unedited model, then runs both stages for
// every pair in registry order. A pair that throws is rolled back and
// reported rather than aborting the run.
InjectionResult inject_set(ModelParams& model, const EditConfig& cfg,
                           const toylm::Tokenizer& tokenizer,
                           const fingerprint::FingerprintRegistry& registry,
                           const toylm::TokenCorpus& preservation_corpus);

// Relative residual ||W_proj Kp - Vp||_F / ||Vp||_F for one layer.
double prior_edit_residual(const ModelParams& model, const LayerEditState& layer);

// "FPES", u32 version, u32 layer count, per layer (u32 index, FPMX Kp,
// FPMX Vp), then the edit log as length-prefixed JSON.
std::string serialize_edit_state(const EditState& state);
EditState deserialize_edit_state(const std::string& bytes);
void save_edit_state(const std::filesystem::path& path, const EditState& state);
EditState load_edit_state(const std::filesystem::path& path);

}  // namespace fpedit::editor

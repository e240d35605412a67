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

#include "fpedit/cli/config.hpp"

#include <algorithm>
#include <charconv>

#include "fpedit/numkit/errors.hpp"
#include "fpedit/numkit/io.hpp"

namespace fpedit::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw InputError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw InputError("config: " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError("config: " + key + " expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item = trim(std::string_view(v).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

const Settings& default_settings() {
  static const Settings defaults{
      {"seed", "1"},
      {"checkpoint", "data/base.fplm"},
      {"pristine_checkpoint", "data/base.fplm"},
      {"registry", "data/registry.json"},
      {"edit_state", ""},
      {"corpus.pretrain", "data/pretrain.txt"},
      {"corpus.heldout", "data/heldout.txt"},
      {"corpus.downstream", "data/downstream.txt"},
      {"corpus.regularization", "data/regularization.txt"},
      {"out", "out"},
      {"dry_run", "false"},
      {"model.n_layers", "8"},
      {"model.d_model", "64"},
      {"model.n_heads", "4"},
      {"model.d_ff", "256"},
      {"model.max_seq_len", "128"},
      {"pretrain.epochs", "20"},
      {"pretrain.lr", "0.03"},
      {"pretrain.batch_size", "8"},
      {"edit.layers", "2,3,4"},
      {"edit.v_lr", "0.5"},
      {"edit.v_steps", "40"},
      {"edit.threshold", "0.02"},
      {"edit.samples", "2000"},
      {"edit.lambda", "1"},
      {"edit.early_stop_nll", "0.01"},
      {"verify.threshold", "0.8"},
      {"verify.max_new_tokens", "16"},
      {"verify.stochastic", "false"},
      {"verify.trials", "10"},
      {"verify.temperature", "0.7"},
      {"verify.top_p", "0.95"},
      {"verify.top_k", "50"},
      {"finetune.epochs", "3"},
      {"finetune.lr", "0.001"},
      {"finetune.rank", "4"},
      {"finetune.batch_size", "8"},
      {"finetune.seed", "0"},
      {"sft.epochs", "3"},
      {"sft.lr", "0.1"},
      {"sft.batch_size", "8"},
      {"sft.seed", "0"},
      {"suite.scenarios", "all"},
      {"suite.garbled_count", "10"},
  };
  return defaults;
}

void apply_assignment(Settings& settings, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw InputError("expected key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (!default_settings().count(key)) throw InputError("unknown config key '" + key + "'");
  settings[key] = trim(assignment.substr(eq + 1));
}

Settings parse_settings(std::string_view text, std::string_view origin) {
  Settings out;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    try {
      apply_assignment(out, line);
    } catch (const InputError& e) {
      throw InputError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Settings load_settings(const std::filesystem::path& path) {
  return parse_settings(numkit::read_file(path), path.string());
}

Settings resolve(const Layers& layers) {
  Settings s = default_settings();
  if (layers.config_file) {
    for (const auto& [k, v] : load_settings(*layers.config_file)) s[k] = v;
  }
  if (layers.env_seed) s["seed"] = *layers.env_seed;
  for (const auto& [k, v] : layers.flags) {
    if (!default_settings().count(k)) throw InputError("unknown config key '" + k + "'");
    s[k] = v;
  }
  return s;
}

std::uint64_t derive_seed(std::uint64_t global, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (char c : name) mix(static_cast<unsigned char>(c));
  for (int b = 0; b < 8; ++b) mix(static_cast<unsigned char>(global >> (8 * b)));
  return h;
}

nlohmann::json RunConfig::echo() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : effective) j[k] = v;
  return j;
}

RunConfig build_config(const Settings& settings) {
  Settings s = default_settings();
  for (const auto& [k, v] : settings) s[k] = v;
  auto get = [&s](const std::string& k) -> const std::string& { return s.at(k); };
  auto count = [&](const std::string& k) { return parse_count(k, get(k)); };
  auto real = [&](const std::string& k) { return parse_real(k, get(k)); };

  RunConfig c;
  c.effective = s;
  c.seed = parse_u64("seed", get("seed"));
  c.checkpoint = get("checkpoint");
  c.pristine_checkpoint = get("pristine_checkpoint");
  c.registry = get("registry");
  c.edit_state = get("edit_state");
  c.pretrain_corpus = get("corpus.pretrain");
  c.heldout_corpus = get("corpus.heldout");
  c.downstream_corpus = get("corpus.downstream");
  c.regularization_corpus = get("corpus.regularization");
  c.out = get("out");
  c.dry_run = parse_bool("dry_run", get("dry_run"));

  c.model.n_layers = count("model.n_layers");
  c.model.d_model = count("model.d_model");
  c.model.n_heads = count("model.n_heads");
  c.model.d_ff = count("model.d_ff");
  c.model.max_seq_len = count("model.max_seq_len");
  c.model.seed = derive_seed(c.seed, "init");

  c.pretrain.epochs = count("pretrain.epochs");
  c.pretrain.lr = real("pretrain.lr");
  c.pretrain.batch_size = count("pretrain.batch_size");
  if (c.pretrain.epochs < 1) throw InputError("config: pretrain.epochs must be >= 1");
  if (c.pretrain.batch_size < 1) throw InputError("config: pretrain.batch_size must be >= 1");
  if (!(c.pretrain.lr >= 0.0)) throw InputError("config: pretrain.lr must be >= 0");

  c.edit.edited_layers.clear();
  for (const auto& item : split_list(get("edit.layers"))) {
    c.edit.edited_layers.push_back(parse_count("edit.layers", item));
  }
  c.edit.v_learning_rate = real("edit.v_lr");
  c.edit.v_steps = count("edit.v_steps");
  c.edit.null_space_threshold = real("edit.threshold");
  c.edit.preservation_sample_count = count("edit.samples");
  c.edit.identity_regularizer_weight = real("edit.lambda");
  c.edit.early_stop_nll = real("edit.early_stop_nll");
  c.edit.harvest_seed = derive_seed(c.seed, "harvest");

  const std::size_t max_new = count("verify.max_new_tokens");
  c.verify = verify::VerificationPolicy::greedy();
  c.verify.threshold = real("verify.threshold");
  c.verify.decoding = toylm::DecodingConfig::greedy(max_new);
  c.stochastic = parse_bool("verify.stochastic", get("verify.stochastic"));
  c.stochastic_policy = verify::VerificationPolicy::stochastic(derive_seed(c.seed, "decode"));
  c.stochastic_policy.threshold = c.verify.threshold;
  c.stochastic_policy.trials_per_trigger = count("verify.trials");
  c.stochastic_policy.decoding.temperature = real("verify.temperature");
  c.stochastic_policy.decoding.top_p = real("verify.top_p");
  c.stochastic_policy.decoding.top_k = count("verify.top_k");
  c.stochastic_policy.decoding.max_new_tokens = max_new;
  c.verify.validate();
  c.stochastic_policy.validate();

  auto& ft = c.suite.finetune;
  ft.epochs = count("finetune.epochs");
  ft.lr = real("finetune.lr");
  ft.rank = count("finetune.rank");
  ft.batch_size = count("finetune.batch_size");
  ft.seed = parse_u64("finetune.seed", get("finetune.seed"));
  c.suite.sft.epochs = count("sft.epochs");
  c.suite.sft.lr = real("sft.lr");
  c.suite.sft.batch_size = count("sft.batch_size");
  c.suite.sft.seed = parse_u64("sft.seed", get("sft.seed"));
  c.suite.threshold = c.verify.threshold;
  c.suite.seed = derive_seed(c.seed, "decode");
  c.suite.garbled_count = count("suite.garbled_count");

  const auto names = split_list(get("suite.scenarios"));
  if (names.size() == 1 && names[0] == "all") {
    c.scenarios = robustness::scenario_names();
  } else {
    for (const auto& n : names) {
      const auto& all = robustness::scenario_names();
      if (std::find(all.begin(), all.end(), n) == all.end()) {
        std::string valid;
        for (const auto& a : all) valid += (valid.empty() ? "" : ", ") + a;
        throw InputError("unknown scenario '" + n + "'; valid names: " + valid);
      }
      c.scenarios.push_back(n);
    }
  }
  c.edit.validate(c.model.n_layers);
  c.verify.validate();
  return c;
}

}  // namespace fpedit::cli

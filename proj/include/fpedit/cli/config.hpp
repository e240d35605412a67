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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fpedit/editor/editor.hpp"
#include "fpedit/robustness/robustness.hpp"
#include "fpedit/toylm/model.hpp"
#include "fpedit/verify/verify.hpp"
#include "json.hpp"

namespace fpedit::cli {

// Flat key=value settings. Later layers override earlier ones.
using Settings = std::map<std::string, std::string>;

// Built-in defaults for every recognised key.
const Settings& default_settings();

// Parses "key = value" lines; '#' starts a comment. Unknown keys and
// malformed lines raise InputError with the line number.
Settings parse_settings(std::string_view text, std::string_view origin = "config");
Settings load_settings(const std::filesystem::path& path);

// Applies a "key=value" assignment given on the command line.
void apply_assignment(Settings& settings, std::string_view assignment);

struct Layers {
  std::optional<std::filesystem::path> config_file;
  std::optional<std::string> env_seed;  // FPEDIT_SEED
  Settings flags;                       // explicit command-line values
};

// defaults < config file < FPEDIT_SEED < command-line flags.
Settings resolve(const Layers& layers);

std::uint64_t derive_seed(std::uint64_t global, std::string_view name);

struct PretrainSettings {
  std::size_t epochs = 20;
  double lr = 0.03;
  std::size_t batch_size = 8;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path pristine_checkpoint;
  std::filesystem::path registry;
  std::filesystem::path edit_state;
  std::filesystem::path pretrain_corpus;
  std::filesystem::path heldout_corpus;
  std::filesystem::path downstream_corpus;
  std::filesystem::path regularization_corpus;
  std::filesystem::path out;
  bool dry_run = false;

  toylm::ModelConfig model;  // vocab_size filled by pretrain
  PretrainSettings pretrain;
  editor::EditConfig edit;
  verify::VerificationPolicy verify;
  bool stochastic = false;
  verify::VerificationPolicy stochastic_policy;
  robustness::SuiteConfig suite;
  std::vector<std::string> scenarios;

  Settings effective;  // resolved settings, echoed into reports

  nlohmann::json echo() const;
};

RunConfig build_config(const Settings& settings);

}  // namespace fpedit::cli

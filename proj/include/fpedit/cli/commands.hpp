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

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "fpedit/cli/config.hpp"

namespace fpedit::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternalError = 1,
  kExitInputError = 2,
  kExitVerificationFailure = 3,
  kExitNumericalFailure = 4,
};

// File names written under RunConfig::out.
inline constexpr const char* kPretrainCheckpoint = "base.fplm";
inline constexpr const char* kPretrainReport = "pretrain_report.json";
inline constexpr const char* kInjectCheckpoint = "fingerprinted.fplm";
inline constexpr const char* kEditStateFile = "edit_state.fpes";
inline constexpr const char* kInjectReport = "inject_report.json";
inline constexpr const char* kVerifyReport = "verify_report.json";
inline constexpr const char* kSuiteReport = "suite_report.json";
inline constexpr const char* kSuiteTable = "suite_table.txt";

// Minimum post-transform FSR each FPEdit scenario must reach for the suite
// to pass; nullopt means reported only.
std::optional<double> scenario_floor(const std::string& scenario, double threshold);

// Each command reports to `log` and returns an exit code. Errors propagate
// as exceptions; run_guarded maps them to exit codes.
int cmd_pretrain(const RunConfig& cfg, std::ostream& log);
int cmd_inject(const RunConfig& cfg, std::ostream& log);
int cmd_verify(const RunConfig& cfg, std::ostream& log);
int cmd_suite(const RunConfig& cfg, std::ostream& log);
int cmd_registry_validate(const RunConfig& cfg, std::ostream& log);

int run_guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace fpedit::cli

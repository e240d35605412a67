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

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fpedit/cli/commands.hpp"
#include "fpedit/cli/config.hpp"

namespace {

using fpedit::cli::RunConfig;

struct Common {
  std::string config;
  std::optional<std::string> seed;
  std::vector<std::string> set;
  bool dry_run = false;
  std::optional<std::string> checkpoint, registry, out;
};

void add_common(CLI::App* sub, Common& c, bool with_checkpoint = true) {
  sub->add_option("--config", c.config, "key=value config file");
  sub->add_option("--seed", c.seed, "global seed (overrides FPEDIT_SEED and the config file)");
  sub->add_option("--set", c.set, "override one config key, key=value (repeatable)");
  sub->add_flag("--dry-run", c.dry_run, "check inputs and print the plan without writing");
  sub->add_option("--registry", c.registry, "fingerprint registry JSON");
  sub->add_option("--out", c.out, "output directory");
  if (with_checkpoint) sub->add_option("--checkpoint", c.checkpoint, "input checkpoint");
}

fpedit::cli::Settings flag_settings(const Common& c) {
  fpedit::cli::Settings s;
  for (const auto& a : c.set) fpedit::cli::apply_assignment(s, a);
  if (c.seed) s["seed"] = *c.seed;
  if (c.dry_run) s["dry_run"] = "true";
  if (c.checkpoint) s["checkpoint"] = *c.checkpoint;
  if (c.registry) s["registry"] = *c.registry;
  if (c.out) s["out"] = *c.out;
  return s;
}

RunConfig make_config(const Common& c, fpedit::cli::Settings extra) {
  fpedit::cli::Layers layers;
  if (!c.config.empty()) layers.config_file = c.config;
  if (const char* env = std::getenv("FPEDIT_SEED"); env && *env) layers.env_seed = env;
  layers.flags = flag_settings(c);
  for (auto& [k, v] : extra) layers.flags[k] = v;
  return fpedit::cli::build_config(fpedit::cli::resolve(layers));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Natural-language fingerprint injection and verification for a toy transformer"};
  app.require_subcommand(1);

  Common pre_c, inj_c, ver_c, suite_c, reg_c;
  auto* pre = app.add_subcommand("pretrain", "train the toy LM and write a checkpoint");
  add_common(pre, pre_c, false);
  auto* inj = app.add_subcommand("inject", "inject the registry into a checkpoint");
  add_common(inj, inj_c);
  auto* ver = app.add_subcommand("verify", "query triggers and decide ownership");
  add_common(ver, ver_c);
  bool stochastic = false;
  ver->add_flag("--stochastic", stochastic, "add a trial-averaged stochastic-decoding section");
  auto* suite = app.add_subcommand("suite", "run the robustness scenario grid");
  add_common(suite, suite_c);
  std::optional<std::string> scenarios, edit_state, pristine;
  suite->add_option("--scenarios", scenarios, "comma-separated scenario names, or 'all'");
  suite->add_option("--edit-state", edit_state, "edit state written by inject");
  suite->add_option("--pristine", pristine, "never-injected checkpoint for the SFT baseline");
  auto* reg = app.add_subcommand("registry-validate", "check a registry against a vocabulary");
  add_common(reg, reg_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fpedit::cli::kExitInputError;
  }

  return fpedit::cli::run_guarded(
      [&]() -> int {
        if (pre->parsed()) return fpedit::cli::cmd_pretrain(make_config(pre_c, {}), std::cerr);
        if (inj->parsed()) return fpedit::cli::cmd_inject(make_config(inj_c, {}), std::cerr);
        if (ver->parsed()) {
          fpedit::cli::Settings extra;
          if (stochastic) extra["verify.stochastic"] = "true";
          return fpedit::cli::cmd_verify(make_config(ver_c, extra), std::cerr);
        }
        if (suite->parsed()) {
          fpedit::cli::Settings extra;
          if (scenarios) extra["suite.scenarios"] = *scenarios;
          if (edit_state) extra["edit_state"] = *edit_state;
          if (pristine) extra["pristine_checkpoint"] = *pristine;
          return fpedit::cli::cmd_suite(make_config(suite_c, extra), std::cerr);
        }
        return fpedit::cli::cmd_registry_validate(make_config(reg_c, {}), std::cerr);
      },
      std::cerr);
}

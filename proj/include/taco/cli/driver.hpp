// Copyright 2026 The tacorl Authors
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

// Argument handling for the taco binary. Exit codes: 0 success, 1 runtime
// failure (missing inputs, IO), 2 usage error, 3 config error, 4 training
// divergence. Config precedence: file, then --set overrides in order, then
// the TACO_SEED environment variable.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "taco/cli/config.hpp"
#include "taco/cli/pipeline.hpp"
#include "taco/core/adam.hpp"

namespace taco {

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"scripted-play pipeline: collect data, train, evaluate"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "key=value config file");
  app.add_option("--set", overrides,
                 "override one config key (key=value, repeatable)");

  bool overwrite = false;
  bool resume = false;
  std::string baseline_kind;
  std::string method;
  std::string protocol;
  std::string inspect_path;

  CLI::App* collect = app.add_subcommand(
      "collect", "roll scripted play episodes into a dataset");
  collect->add_flag("--overwrite", overwrite, "replace an existing dataset");

  CLI::App* train_lmp =
      app.add_subcommand("train-lmp", "fit the latent plan model");
  train_lmp->add_flag("--resume", resume,
                      "continue from the newest epoch checkpoint");

  CLI::App* train_hrl = app.add_subcommand(
      "train-hrl", "fit the plan-space policy on top of a trained plan model");
  train_hrl->add_flag("--resume", resume,
                      "continue from the newest epoch checkpoint");

  CLI::App* train_baseline =
      app.add_subcommand("train-baseline", "fit a comparison method");
  train_baseline->add_option("kind", baseline_kind, "baseline to prepare")
      ->required()
      ->check(CLI::IsMember({"lmp", "cql-her"}));
  train_baseline->add_flag("--resume", resume,
                           "continue from the newest epoch checkpoint");

  CLI::App* eval =
      app.add_subcommand("eval", "run an evaluation protocol and write a report");
  eval->add_option("--method", method, "policy to evaluate")
      ->required()
      ->check(CLI::IsMember({"taco", "lmp", "cql-her"}));
  eval->add_option("--protocol", protocol, "evaluation protocol")
      ->required()
      ->check(CLI::IsMember({"chain5", "single-goal-2task", "hard"}));

  CLI::App* inspect =
      app.add_subcommand("inspect", "print dataset summary statistics");
  inspect->add_option("path", inspect_path,
                      "dataset directory (defaults to the configured one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the error itself
    return code == 0 ? 0 : 2;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const std::string& s : overrides) apply_override(cfg, s);
    apply_env_seed(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  }

  try {
    if (collect->parsed()) {
      cmd_collect(cfg, overwrite);
    } else if (train_lmp->parsed()) {
      cmd_train_lmp(cfg, resume);
    } else if (train_hrl->parsed()) {
      cmd_train_hrl(cfg, resume);
    } else if (train_baseline->parsed()) {
      cmd_train_baseline(cfg, baseline_kind, resume);
    } else if (eval->parsed()) {
      cmd_eval(cfg, method, protocol);
    } else if (inspect->parsed()) {
      cmd_inspect(inspect_path.empty() ? PipelinePaths::from(cfg).dataset_dir
                                       : inspect_path);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace taco

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

// The command implementations behind the taco binary. Each command reads a
// resolved RunConfig, runs one pipeline stage, and drops a run_manifest.json
// next to its outputs recording the command, the config fingerprint, input
// hashes, and output hashes. The manifest carries no timestamps so a re-run
// with the same seed and config reproduces it byte for byte. It is named
// run_manifest.json because the dataset directory already owns the plain
// manifest.json for its storage format.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "taco/baselines/flat_cql.hpp"
#include "taco/baselines/lmp_policy.hpp"
#include "taco/cli/config.hpp"
#include "taco/data/dataset.hpp"
#include "taco/env/collector.hpp"
#include "taco/eval/harness.hpp"
#include "taco/eval/policies.hpp"
#include "taco/hrl/cql.hpp"
#include "taco/lmp/trainer.hpp"

namespace taco {

class PipelineError : public std::runtime_error {
 public:
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

struct PipelinePaths {
  std::string out_root;
  uint64_t seed = 0;
  std::string dataset_dir;

  static PipelinePaths from(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    PipelinePaths p;
    p.out_root = cfg.out_dir;
    p.seed = cfg.seed;
    p.dataset_dir = cfg.dataset.empty()
                        ? (fs::path(cfg.out_dir) / "dataset").string()
                        : cfg.dataset;
    return p;
  }

  std::string seed_dir() const {
    return (std::filesystem::path(out_root) / ("s" + std::to_string(seed)))
        .string();
  }
  std::string lmp_dir() const {
    return (std::filesystem::path(seed_dir()) / "lmp").string();
  }
  std::string hrl_dir() const {
    return (std::filesystem::path(seed_dir()) / "hrl").string();
  }
  std::string flat_dir() const {
    return (std::filesystem::path(seed_dir()) / "flat").string();
  }
  std::string baseline_lmp_dir() const {
    return (std::filesystem::path(seed_dir()) / "baseline-lmp").string();
  }
  std::string eval_dir(const std::string& method,
                       const std::string& protocol) const {
    return (std::filesystem::path(seed_dir()) / "eval" /
            (method + "-" + protocol))
        .string();
  }
};

inline std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("cannot hash missing file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return to_hex(fnv1a64(ss.str()));
}

// Relative path -> content hash for every regular file under dir, minus the
// manifest itself (it cannot contain its own hash).
inline std::map<std::string, std::string> hash_dir_files(
    const std::string& dir) {
  namespace fs = std::filesystem;
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "run_manifest.json") continue;
    out[rel] = file_hash_hex(e.path().string());
  }
  return out;
}

inline std::string dir_hash_hex(const std::string& dir) {
  std::string canon;
  for (const auto& [rel, hash] : hash_dir_files(dir)) {
    canon += rel;
    canon += '=';
    canon += hash;
    canon += '\n';
  }
  return to_hex(fnv1a64(canon));
}

inline void write_run_manifest(
    const std::string& dir, const std::string& command, const RunConfig& cfg,
    const std::map<std::string, std::string>& inputs,
    const std::map<std::string, std::string>& extras = {}) {
  nlohmann::json j;
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash_hex(cfg);
  nlohmann::json jc = nlohmann::json::object();
  for (const ConfigField& f : config_fields()) jc[f.key] = f.get(cfg);
  j["config"] = jc;
  j["inputs"] = inputs;
  j["outputs"] = hash_dir_files(dir);
  j["extras"] = extras;
  const std::string path =
      (std::filesystem::path(dir) / "run_manifest.json").string();
  std::ofstream out(path);
  if (!out) throw PipelineError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

inline nlohmann::json load_run_manifest(const std::string& dir) {
  const std::string path =
      (std::filesystem::path(dir) / "run_manifest.json").string();
  std::ifstream in(path);
  if (!in) throw PipelineError("no run manifest at " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_collect(const RunConfig& cfg, bool overwrite,
                        std::ostream& out = std::cout) {
  const PipelinePaths paths = PipelinePaths::from(cfg);
  Dataset ds;
  ds.seed = cfg.seed;
  PlayCollector collector;
  for (int e = 0; e < cfg.collect_episodes; ++e) {
    Rng rng = Rng::derive(cfg.seed, "collect/" + std::to_string(e));
    CollectResult r =
        collector.run_episode(rng, cfg.collect_steps, e, &ds.spans);
    ds.episodes.push_back({std::move(r.observations), std::move(r.actions)});
  }
  save_dataset(paths.dataset_dir, ds, overwrite);
  write_run_manifest(paths.dataset_dir, "collect", cfg, {});
  out << "collected " << cfg.collect_episodes << " episodes ("
      << static_cast<long long>(cfg.collect_episodes) * cfg.collect_steps
      << " steps) -> " << paths.dataset_dir << "\n";
}

inline void cmd_inspect(const std::string& dataset_dir,
                        std::ostream& out = std::cout) {
  const Dataset ds = load_dataset(dataset_dir);
  long long total = 0;
  for (const EpisodeRecord& ep : ds.episodes) total += ep.num_steps();
  std::map<std::string, int> by_affordance;
  for (const AffordanceSpan& sp : ds.spans) ++by_affordance[sp.affordance];
  out << "dataset: " << dataset_dir << "\n";
  out << "episodes: " << ds.episodes.size() << "\n";
  out << "total_steps: " << total << "\n";
  out << "collection_seed: " << ds.seed << "\n";
  out << "affordance_spans: " << ds.spans.size() << "\n";
  for (const auto& [name, n] : by_affordance)
    out << "  spans." << name << ": " << n << "\n";
}

inline void cmd_train_lmp(const RunConfig& cfg, bool resume,
                          std::ostream& out = std::cout) {
  const PipelinePaths paths = PipelinePaths::from(cfg);
  const Dataset ds = load_dataset(paths.dataset_dir);
  Rng init = Rng::derive(cfg.seed, "init/lmp");
  LmpModel model(cfg.model, init);
  LmpTrainConfig tc = cfg.lmp;
  tc.seed = cfg.seed;
  tc.out_dir = paths.lmp_dir();
  tc.resume = resume;
  std::filesystem::create_directories(tc.out_dir);
  LmpTrainer(model, ds, tc).run();
  write_run_manifest(tc.out_dir, "train-lmp", cfg,
                     {{paths.dataset_dir, dir_hash_hex(paths.dataset_dir)}});
  out << "plan model trained -> " << tc.out_dir << "\n";
}

inline void cmd_train_hrl(const RunConfig& cfg, bool resume,
                          std::ostream& out = std::cout) {
  namespace fs = std::filesystem;
  const PipelinePaths paths = PipelinePaths::from(cfg);
  const std::string lmp_ckpt =
      (fs::path(paths.lmp_dir()) / "lmp_latest.ckpt").string();
  if (!fs::exists(lmp_ckpt))
    throw PipelineError("missing plan-model checkpoint: " + lmp_ckpt +
                        " (run train-lmp first)");
  const Dataset ds = load_dataset(paths.dataset_dir);
  Rng lrng = Rng::derive(cfg.seed, "init/lmp");
  LmpModel lmp(cfg.model, lrng);
  lmp.load(lmp_ckpt);
  Rng hrng = Rng::derive(cfg.seed, "init/hrl");
  HrlModel model(cfg.model, cfg.hrl.critic_hidden, hrng);
  HrlTrainConfig tc = cfg.hrl;
  tc.seed = cfg.seed;
  tc.out_dir = paths.hrl_dir();
  tc.resume = resume;
  // The entropy floor tracks the dimension of the action space, which for
  // the high-level policy is the plan itself.
  tc.cql.target_entropy = -static_cast<double>(cfg.model.latent);
  fs::create_directories(tc.out_dir);
  HrlTrainer(model, lmp, ds, tc).run();
  write_run_manifest(tc.out_dir, "train-hrl", cfg,
                     {{paths.dataset_dir, dir_hash_hex(paths.dataset_dir)},
                      {lmp_ckpt, file_hash_hex(lmp_ckpt)}});
  out << "plan-space policy trained -> " << tc.out_dir << "\n";
}

inline void cmd_train_baseline(const RunConfig& cfg, const std::string& kind,
                               bool resume, std::ostream& out = std::cout) {
  namespace fs = std::filesystem;
  const PipelinePaths paths = PipelinePaths::from(cfg);
  if (kind == "cql-her") {
    const Dataset ds = load_dataset(paths.dataset_dir);
    Rng init = Rng::derive(cfg.seed, "init/flat");
    FlatModel model(cfg.model, cfg.flat.critic_hidden, init);
    FlatTrainConfig tc = cfg.flat;
    tc.seed = cfg.seed;
    tc.out_dir = paths.flat_dir();
    tc.resume = resume;
    fs::create_directories(tc.out_dir);
    FlatTrainer(model, ds, tc).run();
    write_run_manifest(tc.out_dir, "train-baseline", cfg,
                       {{paths.dataset_dir, dir_hash_hex(paths.dataset_dir)}},
                       {{"kind", kind}});
    out << "flat policy trained -> " << tc.out_dir << "\n";
    return;
  }
  if (kind == "lmp") {
    // The plan-imitation baseline is the pretrained plan model run on its
    // own; there is nothing extra to fit. Record the adopted checkpoint so
    // the lineage is explicit.
    (void)resume;
    const std::string lmp_ckpt =
        (fs::path(paths.lmp_dir()) / "lmp_latest.ckpt").string();
    if (!fs::exists(lmp_ckpt))
      throw PipelineError("missing plan-model checkpoint: " + lmp_ckpt +
                          " (run train-lmp first)");
    fs::create_directories(paths.baseline_lmp_dir());
    write_run_manifest(paths.baseline_lmp_dir(), "train-baseline", cfg,
                       {{lmp_ckpt, file_hash_hex(lmp_ckpt)}},
                       {{"kind", kind}});
    out << "baseline 'lmp' reuses the plan model checkpoint at " << lmp_ckpt
        << "\n";
    return;
  }
  throw PipelineError("unknown baseline kind: '" + kind + "'");
}

namespace detail {

inline std::string format_chain_summary(const EvalSummary& s,
                                        const std::string& protocol) {
  std::ostringstream os;
  os << s.method << " " << protocol << ": n=" << s.n_chains
     << " avg_len=" << format_double(s.avg_len_mean)
     << " std=" << format_double(s.avg_len_std) << " sr=[";
  for (size_t k = 0; k < s.sr.size(); ++k)
    os << (k ? " " : "") << format_double(s.sr[k]);
  os << "]";
  return os.str();
}

inline std::string format_two_task_summary(const EvalSummary& s,
                                           const std::string& protocol) {
  std::ostringstream os;
  os << s.method << " " << protocol << ": n=" << s.n_chains
     << " one_task=" << format_double(s.sr[0])
     << " two_task=" << format_double(s.sr[1])
     << " avg_tasks=" << format_double(s.avg_len_mean);
  return os.str();
}

}  // namespace detail

inline EvalSummary cmd_eval(const RunConfig& cfg, const std::string& method,
                            const std::string& protocol,
                            std::ostream& out = std::cout) {
  namespace fs = std::filesystem;
  const PipelinePaths paths = PipelinePaths::from(cfg);

  if (protocol != "chain5" && protocol != "hard" &&
      protocol != "single-goal-2task")
    throw PipelineError("unknown eval protocol: '" + protocol + "'");

  // Models live here so the factory lambdas can reference them across the
  // worker fan-out; forward passes never mutate the graph.
  std::optional<LmpModel> lmp_model;
  std::optional<HrlModel> hrl_model;
  std::optional<FlatModel> flat_model;
  std::map<std::string, std::string> inputs;

  const auto require = [&](const std::string& path, const char* producer) {
    if (!fs::exists(path))
      throw PipelineError("missing checkpoint: " + path + " (run " + producer +
                          " first)");
    inputs[path] = file_hash_hex(path);
  };

  PolicyFactory factory;
  if (method == "taco") {
    const std::string lmp_ckpt =
        (fs::path(paths.lmp_dir()) / "lmp_latest.ckpt").string();
    const std::string hrl_ckpt =
        (fs::path(paths.hrl_dir()) / "hrl_latest.ckpt").string();
    require(lmp_ckpt, "train-lmp");
    require(hrl_ckpt, "train-hrl");
    Rng lrng = Rng::derive(cfg.seed, "init/lmp");
    lmp_model.emplace(cfg.model, lrng);
    lmp_model->load(lmp_ckpt);
    Rng hrng = Rng::derive(cfg.seed, "init/hrl");
    hrl_model.emplace(cfg.model, cfg.hrl.critic_hidden, hrng);
    hrl_model->load(hrl_ckpt);
    factory = [&lmp = *lmp_model, &hrl = *hrl_model] {
      return std::make_unique<TacoPolicy>(lmp, hrl);
    };
  } else if (method == "lmp") {
    const std::string lmp_ckpt =
        (fs::path(paths.lmp_dir()) / "lmp_latest.ckpt").string();
    require(lmp_ckpt, "train-lmp");
    Rng lrng = Rng::derive(cfg.seed, "init/lmp");
    lmp_model.emplace(cfg.model, lrng);
    lmp_model->load(lmp_ckpt);
    factory = [&lmp = *lmp_model] {
      return std::make_unique<LmpPolicy>(lmp, /*deterministic=*/true, 0);
    };
  } else if (method == "cql-her") {
    const std::string flat_ckpt =
        (fs::path(paths.flat_dir()) / "flat_latest.ckpt").string();
    require(flat_ckpt, "train-baseline cql-her");
    Rng frng = Rng::derive(cfg.seed, "init/flat");
    flat_model.emplace(cfg.model, cfg.flat.critic_hidden, frng);
    flat_model->load(flat_ckpt);
    factory = [&flat = *flat_model] {
      return std::make_unique<FlatPolicy>(flat);
    };
  } else {
    throw PipelineError("unknown eval method: '" + method + "'");
  }

  std::vector<ReportRow> rows;
  if (protocol == "single-goal-2task") {
    std::vector<TwoTaskSpec> specs;
    specs.reserve(static_cast<size_t>(cfg.eval_rollouts));
    for (int i = 0; i < cfg.eval_rollouts; ++i) {
      TwoTaskSpec sp = make_two_task(i, cfg.seed);
      sp.budget = cfg.eval_two_task_budget;
      specs.push_back(std::move(sp));
    }
    const std::vector<TwoTaskOutcome> outcomes =
        run_two_tasks(factory, specs, cfg.eval_threads);
    rows = two_task_rows(method, cfg.seed, outcomes);
  } else {
    ChainProtocol proto;
    proto.subtask_budget = cfg.eval_subtask_budget;
    proto.hard = (protocol == "hard");
    const std::vector<ChainSpec> chains =
        make_chains(cfg.eval_chains, cfg.seed, proto);
    const std::vector<ChainOutcome> outcomes =
        run_chains(factory, chains, cfg.eval_threads);
    rows = report_rows(method, cfg.seed, outcomes);
  }

  const std::string dir = paths.eval_dir(method, protocol);
  fs::create_directories(dir);
  const EvalSummary sum = emit_report(dir, rows);
  write_run_manifest(dir, "eval", cfg, inputs,
                     {{"method", method}, {"protocol", protocol}});
  out << (protocol == "single-goal-2task"
              ? detail::format_two_task_summary(sum, protocol)
              : detail::format_chain_summary(sum, protocol))
      << "\n";
  return sum;
}

}  // namespace taco

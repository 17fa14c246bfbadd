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

// Flat key=value run configuration. Every key is registered in one table
// that provides parsing, rendering, and the canonical dump the config hash
// is taken over; unknown keys are rejected by name rather than silently
// ignored. Defaults come straight from the library config structs, so the
// file only needs to list what differs. The reference file in configs/
// documents every key.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taco/baselines/flat_cql.hpp"
#include "taco/core/csv.hpp"
#include "taco/core/rng.hpp"
#include "taco/eval/harness.hpp"
#include "taco/hrl/cql.hpp"
#include "taco/lmp/trainer.hpp"

namespace taco {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
  uint64_t seed = 0;
  std::string out_dir = "runs";
  std::string dataset;  // empty -> <out_dir>/dataset

  int collect_episodes = 200;
  int collect_steps = 200;

  LmpSizes model;        // network sizes shared by every trained component
  LmpTrainConfig lmp;    // seed/out_dir/resume are filled in per run
  HrlTrainConfig hrl;
  FlatTrainConfig flat;

  int eval_chains = 100;
  int eval_rollouts = 200;  // single-goal two-task protocol
  int eval_subtask_budget = kSubtaskBudget;
  int eval_two_task_budget = kTwoTaskBudget;
  int eval_threads = 0;  // 0 -> hardware concurrency
};

struct ConfigField {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

namespace detail {

inline uint64_t parse_config_u64(const std::string& key,
                                 const std::string& v) {
  if (!v.empty() && v.find('-') == std::string::npos) {
    try {
      size_t pos = 0;
      const unsigned long long x = std::stoull(v, &pos);
      if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("config key '" + key +
                    "' expects an unsigned integer, got '" + v + "'");
}

inline int parse_config_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "' expects an integer, got '" + v +
                    "'");
}

inline double parse_config_double(const std::string& key,
                                  const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "' expects a number, got '" + v +
                    "'");
}

inline bool parse_config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" +
                    v + "'");
}

template <class Ref>
ConfigField u64_field(const char* key, Ref ref) {
  return {key,
          [key, ref](RunConfig& c, const std::string& v) {
            ref(c) = parse_config_u64(key, v);
          },
          [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}

template <class Ref>
ConfigField int_field(const char* key, Ref ref) {
  return {key,
          [key, ref](RunConfig& c, const std::string& v) {
            ref(c) = parse_config_int(key, v);
          },
          [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}

template <class Ref>
ConfigField double_field(const char* key, Ref ref) {
  return {key,
          [key, ref](RunConfig& c, const std::string& v) {
            ref(c) = parse_config_double(key, v);
          },
          [ref](const RunConfig& c) { return format_double(ref(c)); }};
}

template <class Ref>
ConfigField string_field(const char* key, Ref ref) {
  return {key,
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; },
          [ref](const RunConfig& c) { return ref(c); }};
}

// Goal relabeling and conservatism knobs apply to both the plan-space and
// the flat pipeline; each keeps its own structural fields (window length,
// target entropy).
template <class Ref>
ConfigField shared_double_field(const char* key, Ref ref) {
  return {key,
          [key, ref](RunConfig& c, const std::string& v) {
            const double x = parse_config_double(key, v);
            ref(c.hrl) = x;
            ref(c.flat) = x;
          },
          [ref](const RunConfig& c) { return format_double(ref(c.hrl)); }};
}

template <class Ref>
ConfigField shared_int_field(const char* key, Ref ref) {
  return {key,
          [key, ref](RunConfig& c, const std::string& v) {
            const int x = parse_config_int(key, v);
            ref(c.hrl) = x;
            ref(c.flat) = x;
          },
          [ref](const RunConfig& c) { return std::to_string(ref(c.hrl)); }};
}

template <class Ref>
ConfigField shared_bool_field(const char* key, Ref ref) {
  return {key,
          [key, ref](RunConfig& c, const std::string& v) {
            const bool x = parse_config_bool(key, v);
            ref(c.hrl) = x;
            ref(c.flat) = x;
          },
          [ref](const RunConfig& c) {
            return ref(c.hrl) ? std::string("true") : std::string("false");
          }};
}

inline std::string trim_config(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    using detail::double_field;
    using detail::int_field;
    using detail::shared_bool_field;
    using detail::shared_double_field;
    using detail::shared_int_field;
    using detail::string_field;
    using detail::u64_field;
    std::vector<ConfigField> f;

    f.push_back(u64_field("seed", [](auto& c) -> auto& { return c.seed; }));
    f.push_back(
        string_field("out_dir", [](auto& c) -> auto& { return c.out_dir; }));
    f.push_back(
        string_field("dataset", [](auto& c) -> auto& { return c.dataset; }));

    f.push_back(int_field("collect.episodes",
                          [](auto& c) -> auto& { return c.collect_episodes; }));
    f.push_back(int_field("collect.steps",
                          [](auto& c) -> auto& { return c.collect_steps; }));

    f.push_back(int_field("model.obs_embed_hidden", [](auto& c) -> auto& {
      return c.model.obs_embed_hidden;
    }));
    f.push_back(int_field("model.obs_embed",
                          [](auto& c) -> auto& { return c.model.obs_embed; }));
    f.push_back(int_field("model.enc_width",
                          [](auto& c) -> auto& { return c.model.enc_width; }));
    f.push_back(int_field("model.enc_ff",
                          [](auto& c) -> auto& { return c.model.enc_ff; }));
    f.push_back(int_field("model.enc_heads",
                          [](auto& c) -> auto& { return c.model.enc_heads; }));
    f.push_back(int_field("model.enc_blocks",
                          [](auto& c) -> auto& { return c.model.enc_blocks; }));
    f.push_back(int_field("model.latent",
                          [](auto& c) -> auto& { return c.model.latent; }));
    f.push_back(int_field("model.prior_hidden", [](auto& c) -> auto& {
      return c.model.prior_hidden;
    }));
    f.push_back(int_field("model.dec_hidden",
                          [](auto& c) -> auto& { return c.model.dec_hidden; }));
    f.push_back(int_field("model.dec_layers",
                          [](auto& c) -> auto& { return c.model.dec_layers; }));

    f.push_back(int_field("lmp.epochs",
                          [](auto& c) -> auto& { return c.lmp.epochs; }));
    f.push_back(int_field("lmp.steps_per_epoch", [](auto& c) -> auto& {
      return c.lmp.steps_per_epoch;
    }));
    f.push_back(
        int_field("lmp.batch", [](auto& c) -> auto& { return c.lmp.batch; }));
    f.push_back(
        double_field("lmp.lr", [](auto& c) -> auto& { return c.lmp.lr; }));
    f.push_back(
        double_field("lmp.beta", [](auto& c) -> auto& { return c.lmp.beta; }));
    f.push_back(double_field("lmp.kl_alpha",
                             [](auto& c) -> auto& { return c.lmp.kl_alpha; }));

    f.push_back(shared_double_field("goal.geometric_p", [](auto& t) -> auto& {
      return t.goals.geometric_p;
    }));
    f.push_back(shared_double_field(
        "goal.positive_fraction",
        [](auto& t) -> auto& { return t.goals.positive_fraction; }));
    f.push_back(shared_bool_field("goal.mine_negatives", [](auto& t) -> auto& {
      return t.goals.mine_negatives;
    }));

    f.push_back(shared_double_field(
        "cql.gamma", [](auto& t) -> auto& { return t.cql.gamma; }));
    f.push_back(shared_double_field(
        "cql.tau", [](auto& t) -> auto& { return t.cql.tau; }));
    f.push_back(shared_double_field(
        "cql.alpha", [](auto& t) -> auto& { return t.cql.cql_alpha; }));
    f.push_back(shared_int_field(
        "cql.ood_samples", [](auto& t) -> auto& { return t.cql.ood_samples; }));

    f.push_back(int_field("hrl.epochs",
                          [](auto& c) -> auto& { return c.hrl.epochs; }));
    f.push_back(int_field("hrl.steps_per_epoch", [](auto& c) -> auto& {
      return c.hrl.steps_per_epoch;
    }));
    f.push_back(
        int_field("hrl.batch", [](auto& c) -> auto& { return c.hrl.batch; }));
    f.push_back(double_field("hrl.critic_lr",
                             [](auto& c) -> auto& { return c.hrl.critic_lr; }));
    f.push_back(double_field("hrl.actor_lr",
                             [](auto& c) -> auto& { return c.hrl.actor_lr; }));
    f.push_back(double_field("hrl.alpha_lr",
                             [](auto& c) -> auto& { return c.hrl.alpha_lr; }));
    f.push_back(int_field("hrl.warmstart_epochs", [](auto& c) -> auto& {
      return c.hrl.warmstart_epochs;
    }));
    f.push_back(int_field("hrl.pool_size",
                          [](auto& c) -> auto& { return c.hrl.pool_size; }));
    f.push_back(int_field("hrl.critic_hidden", [](auto& c) -> auto& {
      return c.hrl.critic_hidden;
    }));

    f.push_back(int_field("flat.epochs",
                          [](auto& c) -> auto& { return c.flat.epochs; }));
    f.push_back(int_field("flat.steps_per_epoch", [](auto& c) -> auto& {
      return c.flat.steps_per_epoch;
    }));
    f.push_back(
        int_field("flat.batch", [](auto& c) -> auto& { return c.flat.batch; }));
    f.push_back(double_field(
        "flat.critic_lr", [](auto& c) -> auto& { return c.flat.critic_lr; }));
    f.push_back(double_field(
        "flat.actor_lr", [](auto& c) -> auto& { return c.flat.actor_lr; }));
    f.push_back(double_field(
        "flat.alpha_lr", [](auto& c) -> auto& { return c.flat.alpha_lr; }));
    f.push_back(int_field("flat.warmstart_epochs", [](auto& c) -> auto& {
      return c.flat.warmstart_epochs;
    }));
    f.push_back(int_field("flat.critic_hidden", [](auto& c) -> auto& {
      return c.flat.critic_hidden;
    }));
    f.push_back(double_field(
        "flat.temp_start", [](auto& c) -> auto& { return c.flat.temp_start; }));
    f.push_back(double_field(
        "flat.temp_end", [](auto& c) -> auto& { return c.flat.temp_end; }));

    f.push_back(int_field("eval.chains",
                          [](auto& c) -> auto& { return c.eval_chains; }));
    f.push_back(int_field("eval.rollouts",
                          [](auto& c) -> auto& { return c.eval_rollouts; }));
    f.push_back(int_field("eval.subtask_budget", [](auto& c) -> auto& {
      return c.eval_subtask_budget;
    }));
    f.push_back(int_field("eval.two_task_budget", [](auto& c) -> auto& {
      return c.eval_two_task_budget;
    }));
    f.push_back(int_field("eval.threads",
                          [](auto& c) -> auto& { return c.eval_threads; }));

    std::sort(f.begin(), f.end(),
              [](const ConfigField& a, const ConfigField& b) {
                return a.key < b.key;
              });
    return f;
  }();
  return fields;
}

inline void set_config_value(RunConfig& cfg, const std::string& key,
                             const std::string& value) {
  for (const ConfigField& f : config_fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key: '" + key + "'");
}

inline RunConfig parse_config_text(const std::string& text,
                                   RunConfig cfg = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim_config(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("malformed config line " + std::to_string(lineno) +
                        ": '" + line + "' (expected key=value)");
    set_config_value(cfg, detail::trim_config(line.substr(0, eq)),
                     detail::trim_config(line.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path, RunConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(cfg));
}

inline void apply_override(RunConfig& cfg, const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + spec + "' must look like key=value");
  set_config_value(cfg, detail::trim_config(spec.substr(0, eq)),
                   detail::trim_config(spec.substr(eq + 1)));
}

// TACO_SEED wins over both the file and --set overrides.
inline void apply_env_seed(RunConfig& cfg) {
  if (const char* env = std::getenv("TACO_SEED"); env != nullptr && *env)
    cfg.seed = detail::parse_config_u64("TACO_SEED", env);
}

// Sorted key=value dump of the fully resolved config; the run fingerprint
// is the FNV-1a hash of exactly these bytes.
inline std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const ConfigField& f : config_fields()) {
    out += f.key;
    out += '=';
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

inline uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(canonical_config(cfg));
}

inline std::string config_hash_hex(const RunConfig& cfg) {
  return to_hex(config_hash(cfg));
}

}  // namespace taco

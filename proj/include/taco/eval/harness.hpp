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

// Goal-reaching evaluation on the desk. Three pieces:
//
//  * chain specs: five sub-goals staged by the scripted oracle, optionally
//    with the effector retreated before each goal is read so the pose does
//    not leak the solution ("hard" goals);
//  * rollouts: a policy conditioned on one goal at a time, judged by the
//    task predicate, advancing through the chain whether or not a position
//    succeeded;
//  * reports: raw per-position CSV rows plus a pooled JSON summary whose
//    numbers can be recomputed from the rows.
//
// Everything treats trained models as read-only and scenes as plain values,
// so independent chains can be fanned out across threads.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "taco/baselines/policy.hpp"
#include "taco/core/csv.hpp"
#include "taco/core/rng.hpp"
#include "taco/env/collector.hpp"
#include "taco/env/playtable.hpp"

namespace taco {

// The oracle finishes any single desk task in well under 40 steps from a
// fresh scene, so these budgets are generous without being unbounded.
constexpr int kSubtaskBudget = 90;
constexpr int kTwoTaskBudget = 150;
constexpr int kChainLength = 5;

struct ChainTask {
  TaskSpec task;
  Observation goal{};
};

struct ChainSpec {
  int id = 0;
  Observation start{};
  std::vector<ChainTask> tasks;
  int subtask_budget = kSubtaskBudget;

  int total_budget() const {
    return subtask_budget * static_cast<int>(tasks.size());
  }
};

struct ChainProtocol {
  int length = kChainLength;
  int subtask_budget = kSubtaskBudget;
  bool hard = false;  // retreat the effector before reading each goal
};

namespace detail {

constexpr int kOracleBudget = 400;   // staging budget per task
constexpr int kRetreatBudget = 200;  // enough to cross the whole desk

inline bool satisfied(const TaskSpec& task, const EnvState& s) {
  const Observation o = s.obs();
  return evaluate_task(task, o, o);
}

// Tasks still open at the given scene, in the fixed catalog order.
// place-block always qualifies because its zone is drawn (and redrawn until
// unsatisfied) only once selected. Hard goals skip lift-block: the retreat
// opens the gripper, which would drop the block and undo the task.
inline std::vector<std::string> open_tasks(const EnvState& s, bool hard) {
  std::vector<std::string> pool;
  for (const char* name : task_names()) {
    const std::string n = name;
    if (hard && n == "lift-block") continue;
    if (n == "place-block" || !satisfied(TaskSpec{n}, s)) pool.push_back(n);
  }
  return pool;
}

inline TaskSpec draw_zone_if_needed(TaskSpec task, const EnvState& s,
                                    Rng& rng) {
  if (task.name == "place-block") {
    do {
      task.zone_x = rng.uniform(0.15, 0.85);
      task.zone_y = rng.uniform(0.15, 0.85);
    } while (satisfied(task, s));
  }
  return task;
}

inline TaskSpec draw_task(const EnvState& s, bool hard, Rng& rng) {
  const std::vector<std::string> pool = open_tasks(s, hard);
  TaskSpec task;
  task.name = pool[rng.uniform_int(pool.size())];
  return draw_zone_if_needed(task, s, rng);
}

// Completes the task with the scripted oracle, optionally backs the open
// gripper away from the landmark, and reads the goal off the scene. The
// scene advances in place so a chain continues from wherever its previous
// goal left the desk.
inline Observation capture_goal(EnvState& s, const TaskSpec& task, bool hard,
                                Rng& rng) {
  if (run_oracle(s, task, kOracleBudget) < 0)
    throw EnvError("goal staging stalled on " + task.label());
  if (hard) {
    const double min_dist = rng.uniform(0.3, 0.5);
    if (!oracle_retreat(s, task, min_dist, kRetreatBudget))
      throw EnvError("goal retreat stalled on " + task.label());
  }
  return s.obs();
}

}  // namespace detail

inline ChainSpec make_chain(int id, uint64_t seed,
                            const ChainProtocol& proto = {}) {
  Rng rng = Rng::derive(seed, "eval/chain/" + std::to_string(id));
  ChainSpec chain;
  chain.id = id;
  chain.subtask_budget = proto.subtask_budget;
  EnvState s = env_reset(rng);
  chain.start = s.obs();
  chain.tasks.reserve(static_cast<size_t>(proto.length));
  for (int i = 0; i < proto.length; ++i) {
    const TaskSpec task = detail::draw_task(s, proto.hard, rng);
    const Observation goal = detail::capture_goal(s, task, proto.hard, rng);
    chain.tasks.push_back({task, goal});
  }
  return chain;
}

inline std::vector<ChainSpec> make_chains(int n, uint64_t seed,
                                          const ChainProtocol& proto = {}) {
  std::vector<ChainSpec> chains;
  chains.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) chains.push_back(make_chain(i, seed, proto));
  return chains;
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

struct GoalRollout {
  std::vector<Observation> trajectory;  // starting observation first
  bool success = false;
  int steps_used = 0;

  const Observation& final_obs() const { return trajectory.back(); }
};

// Runs one policy toward one goal until the predicate holds or the budget
// runs out. The predicate is checked before the first step, so a zero
// budget still succeeds on an already-satisfied task.
inline GoalRollout run_goal(GoalPolicy& policy, const TaskSpec& task,
                            const EnvState& start, const Observation& goal,
                            int budget) {
  GoalRollout out;
  EnvState s = start;
  const Observation initial = s.obs();
  out.trajectory.push_back(initial);
  policy.reset();
  for (;;) {
    if (evaluate_task(task, initial, out.trajectory.back())) {
      out.success = true;
      return out;
    }
    if (out.steps_used >= budget) return out;
    s = env_step(s, policy.act(out.trajectory.back(), goal));
    ++out.steps_used;
    out.trajectory.push_back(s.obs());
  }
}

struct PositionOutcome {
  bool success = false;
  int steps_used = 0;
};

struct ChainOutcome {
  int chain_id = 0;
  std::vector<PositionOutcome> positions;

  // Sub-goals completed before the first failure.
  int prefix_length() const {
    int n = 0;
    for (const PositionOutcome& p : positions) {
      if (!p.success) break;
      ++n;
    }
    return n;
  }
};

// Conditions the policy on each sub-goal in turn. A failed position only
// expires its budget; the scene still advances, so later successes are
// recorded even though they no longer extend the prefix.
inline ChainOutcome run_chain(GoalPolicy& policy, const ChainSpec& chain) {
  ChainOutcome out;
  out.chain_id = chain.id;
  out.positions.reserve(chain.tasks.size());
  EnvState s = EnvState::from_obs(chain.start);
  for (const ChainTask& ct : chain.tasks) {
    GoalRollout r =
        run_goal(policy, ct.task, s, ct.goal, chain.subtask_budget);
    out.positions.push_back({r.success, r.steps_used});
    s = EnvState::from_obs(r.final_obs());
  }
  return out;
}

using PolicyFactory = std::function<std::unique_ptr<GoalPolicy>()>;

// Fans independent chains out across threads. Each worker builds its own
// policy instance; scenes are values and models are only read, so results
// land by chain index and a deterministic policy reports the same numbers
// for any worker count.
inline std::vector<ChainOutcome> run_chains(
    const PolicyFactory& make_policy, const std::vector<ChainSpec>& chains,
    int threads = 0) {
  std::vector<ChainOutcome> out(chains.size());
  if (threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw > 0 ? static_cast<int>(hw) : 1;
  }
  threads = std::max(1, std::min<int>(threads, static_cast<int>(chains.size())));
  if (threads == 1) {
    std::unique_ptr<GoalPolicy> policy = make_policy();
    for (size_t i = 0; i < chains.size(); ++i)
      out[i] = run_chain(*policy, chains[i]);
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      std::unique_ptr<GoalPolicy> policy = make_policy();
      for (size_t i = static_cast<size_t>(w); i < chains.size();
           i += static_cast<size_t>(threads))
        out[i] = run_chain(*policy, chains[i]);
    });
  }
  for (std::thread& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------------------
// Single goal, two tasks
// ---------------------------------------------------------------------------

struct TwoTaskSpec {
  int id = 0;
  Observation start{};
  std::array<TaskSpec, 2> tasks;
  Observation goal{};
  int budget = kTwoTaskBudget;
};

namespace detail {

// Affordance groups whose effects persist together in one scene. lift-block
// is left out: holding the block conflicts with the parking the second
// staging run performs, so its effect cannot survive into the goal.
inline const std::array<std::vector<const char*>, 4>& task_groups() {
  static const std::array<std::vector<const char*>, 4> groups = {{
      {"open-drawer", "close-drawer"},
      {"slider-left", "slider-right"},
      {"light-on", "light-off"},
      {"place-block"},
  }};
  return groups;
}

inline std::vector<TaskSpec> open_group_members(int group, const EnvState& s,
                                                Rng& rng) {
  std::vector<TaskSpec> open;
  for (const char* name : task_groups()[static_cast<size_t>(group)]) {
    TaskSpec t{name};
    if (t.name == "place-block") {
      open.push_back(draw_zone_if_needed(t, s, rng));
    } else if (!satisfied(t, s)) {
      open.push_back(t);
    }
  }
  return open;
}

}  // namespace detail

// Stages one goal observation showing the effects of two tasks from
// different affordance groups. Staging the second task can occasionally
// disturb the first (the block drops near a handle, say), so the pair is
// redrawn until both predicates hold at the captured goal.
inline TwoTaskSpec make_two_task(int id, uint64_t seed) {
  Rng rng = Rng::derive(seed, "eval/twotask/" + std::to_string(id));
  TwoTaskSpec spec;
  spec.id = id;
  for (int attempt = 0; attempt < 50; ++attempt) {
    EnvState s = env_reset(rng);
    spec.start = s.obs();
    const int first = static_cast<int>(rng.uniform_int(4));
    int second = static_cast<int>(rng.uniform_int(3));
    if (second >= first) ++second;
    int i = 0;
    for (const int group : {first, second}) {
      std::vector<TaskSpec> members = detail::open_group_members(group, s, rng);
      spec.tasks[static_cast<size_t>(i++)] =
          members[rng.uniform_int(members.size())];
    }
    for (const TaskSpec& task : spec.tasks)
      if (run_oracle(s, task, detail::kOracleBudget) < 0)
        throw EnvError("goal staging stalled on " + task.label());
    spec.goal = s.obs();
    if (detail::satisfied(spec.tasks[0], s) &&
        detail::satisfied(spec.tasks[1], s))
      return spec;
  }
  throw EnvError("could not stage a two-task goal for id " +
                 std::to_string(id));
}

struct TwoTaskOutcome {
  std::array<bool, 2> done{{false, false}};
  int steps_used = 0;

  int tasks_done() const { return (done[0] ? 1 : 0) + (done[1] ? 1 : 0); }
  bool one_task() const { return done[0] || done[1]; }
  bool both_tasks() const { return done[0] && done[1]; }
};

// Scores one rollout toward the combined goal on both predicates. Each
// latches once it holds at any visited state; the rollout stops early once
// both have, or when the budget expires.
inline TwoTaskOutcome run_two_task(GoalPolicy& policy,
                                   const TwoTaskSpec& spec) {
  TwoTaskOutcome out;
  EnvState s = EnvState::from_obs(spec.start);
  Observation cur = spec.start;
  policy.reset();
  for (;;) {
    for (size_t i = 0; i < 2; ++i)
      if (!out.done[i] && evaluate_task(spec.tasks[i], spec.start, cur))
        out.done[i] = true;
    if (out.both_tasks() || out.steps_used >= spec.budget) return out;
    s = env_step(s, policy.act(cur, spec.goal));
    ++out.steps_used;
    cur = s.obs();
  }
}

// Fans independent two-task rollouts out across threads, mirroring
// run_chains: one policy instance per worker, results stored by index.
inline std::vector<TwoTaskOutcome> run_two_tasks(
    const PolicyFactory& make_policy, const std::vector<TwoTaskSpec>& specs,
    int threads = 0) {
  std::vector<TwoTaskOutcome> out(specs.size());
  if (threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw > 0 ? static_cast<int>(hw) : 1;
  }
  threads = std::max(1, std::min<int>(threads, static_cast<int>(specs.size())));
  if (threads == 1) {
    std::unique_ptr<GoalPolicy> policy = make_policy();
    for (size_t i = 0; i < specs.size(); ++i)
      out[i] = run_two_task(*policy, specs[i]);
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      std::unique_ptr<GoalPolicy> policy = make_policy();
      for (size_t i = static_cast<size_t>(w); i < specs.size();
           i += static_cast<size_t>(threads))
        out[i] = run_two_task(*policy, specs[i]);
    });
  }
  for (std::thread& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string method;
  uint64_t seed = 0;
  int chain_id = 0;
  int position = 0;  // 1-based within the chain
  bool success = false;
  int steps_used = 0;
};

inline std::vector<ReportRow> report_rows(
    const std::string& method, uint64_t seed,
    const std::vector<ChainOutcome>& outcomes) {
  std::vector<ReportRow> rows;
  for (const ChainOutcome& c : outcomes)
    for (size_t p = 0; p < c.positions.size(); ++p)
      rows.push_back({method, seed, c.chain_id, static_cast<int>(p) + 1,
                      c.positions[p].success, c.positions[p].steps_used});
  return rows;
}

// Two-task outcomes in the same row shape as chains: position 1 records
// "at least one task done", position 2 records "both done". Both implies
// one, so the prefix recount stays monotone and summarize() reads out the
// one-task rate as sr_1, the two-task rate as sr_2, and the mean number of
// tasks completed as avg_len_mean.
inline std::vector<ReportRow> two_task_rows(
    const std::string& method, uint64_t seed,
    const std::vector<TwoTaskOutcome>& outcomes) {
  std::vector<ReportRow> rows;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    rows.push_back({method, seed, static_cast<int>(i), 1,
                    outcomes[i].one_task(), outcomes[i].steps_used});
    rows.push_back({method, seed, static_cast<int>(i), 2,
                    outcomes[i].both_tasks(), outcomes[i].steps_used});
  }
  return rows;
}

namespace detail {

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {
      "method", "seed", "chain_id", "position", "success", "steps_used"};
  return cols;
}

}  // namespace detail

inline void write_report_csv(const std::string& path,
                             const std::vector<ReportRow>& rows) {
  CsvWriter csv(path, detail::report_columns());
  for (const ReportRow& r : rows)
    csv.row({r.method, std::to_string(r.seed), std::to_string(r.chain_id),
             std::to_string(r.position), r.success ? "1" : "0",
             std::to_string(r.steps_used)});
}

inline std::vector<ReportRow> load_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read report: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty report: " + path);
  std::string expected;
  for (const std::string& c : detail::report_columns()) {
    if (!expected.empty()) expected += ',';
    expected += c;
  }
  if (line != expected)
    throw std::runtime_error("unexpected report header in " + path + ": " +
                             line);
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != detail::report_columns().size())
      throw std::runtime_error("malformed report row in " + path + ": " +
                               line);
    ReportRow r;
    r.method = cells[0];
    r.seed = std::stoull(cells[1]);
    r.chain_id = std::stoi(cells[2]);
    r.position = std::stoi(cells[3]);
    r.success = cells[4] == "1";
    r.steps_used = std::stoi(cells[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct EvalSummary {
  std::string method;
  int n_chains = 0;
  std::array<double, kChainLength> sr{};  // success rate by position, pooled
  double avg_len_mean = 0.0;  // mean over per-seed average prefix lengths
  double avg_len_std = 0.0;   // spread over seeds; a single seed gives 0
};

// Pools raw rows into the summary. Prefix lengths are recounted from the
// rows here, so the summary is exactly recomputable from the CSV.
inline EvalSummary summarize(const std::vector<ReportRow>& rows) {
  EvalSummary sum;
  if (rows.empty()) return sum;
  sum.method = rows.front().method;
  std::map<uint64_t, std::map<int, std::vector<const ReportRow*>>> by_seed;
  for (const ReportRow& r : rows) {
    if (r.method != sum.method)
      throw std::invalid_argument("summary rows mix methods: " + sum.method +
                                  " vs " + r.method);
    by_seed[r.seed][r.chain_id].push_back(&r);
  }
  std::array<int, kChainLength> hits{};
  std::array<int, kChainLength> seen{};
  std::vector<double> seed_avg_len;
  for (auto& [seed, chains] : by_seed) {
    double len_total = 0.0;
    for (auto& [chain_id, chain_rows] : chains) {
      std::sort(chain_rows.begin(), chain_rows.end(),
                [](const ReportRow* a, const ReportRow* b) {
                  return a->position < b->position;
                });
      bool intact = true;
      for (const ReportRow* r : chain_rows) {
        const int k = r->position - 1;
        if (k < 0 || k >= kChainLength)
          throw std::invalid_argument("report position out of range: " +
                                      std::to_string(r->position));
        ++seen[k];
        if (r->success) ++hits[k];
        if (intact && r->success) len_total += 1.0;
        if (!r->success) intact = false;
      }
      ++sum.n_chains;
    }
    seed_avg_len.push_back(len_total / static_cast<double>(chains.size()));
  }
  for (int k = 0; k < kChainLength; ++k)
    sum.sr[k] = seen[k] > 0 ? static_cast<double>(hits[k]) / seen[k] : 0.0;
  double mean = 0.0;
  for (const double v : seed_avg_len) mean += v;
  mean /= static_cast<double>(seed_avg_len.size());
  double var = 0.0;
  for (const double v : seed_avg_len) var += (v - mean) * (v - mean);
  var /= static_cast<double>(seed_avg_len.size());
  sum.avg_len_mean = mean;
  sum.avg_len_std = std::sqrt(var);
  return sum;
}

// Per-task tally over chain positions: task label -> {successes, attempts}.
// Needs the chain specs, since CSV rows identify positions, not tasks.
inline std::map<std::string, std::array<int, 2>> per_task_table(
    const std::vector<ReportRow>& rows, const std::vector<ChainSpec>& chains) {
  std::map<int, const ChainSpec*> by_id;
  for (const ChainSpec& c : chains) by_id[c.id] = &c;
  std::map<std::string, std::array<int, 2>> table;
  for (const ReportRow& r : rows) {
    const auto it = by_id.find(r.chain_id);
    if (it == by_id.end())
      throw std::invalid_argument("report row for unknown chain " +
                                  std::to_string(r.chain_id));
    const std::string name =
        it->second->tasks.at(static_cast<size_t>(r.position - 1)).task.name;
    std::array<int, 2>& cell = table[name];
    if (r.success) ++cell[0];
    ++cell[1];
  }
  return table;
}

inline void write_summary_json(const std::string& path,
                               const EvalSummary& sum) {
  nlohmann::json j;
  j["method"] = sum.method;
  j["n_chains"] = sum.n_chains;
  for (int k = 0; k < kChainLength; ++k)
    j["sr_" + std::to_string(k + 1)] = sum.sr[static_cast<size_t>(k)];
  j["avg_len_mean"] = sum.avg_len_mean;
  j["avg_len_std"] = sum.avg_len_std;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write summary: " + path);
  out << j.dump(2) << "\n";
}

inline EvalSummary load_summary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read summary: " + path);
  nlohmann::json j;
  in >> j;
  EvalSummary sum;
  sum.method = j.at("method").get<std::string>();
  sum.n_chains = j.at("n_chains").get<int>();
  for (int k = 0; k < kChainLength; ++k)
    sum.sr[static_cast<size_t>(k)] =
        j.at("sr_" + std::to_string(k + 1)).get<double>();
  sum.avg_len_mean = j.at("avg_len_mean").get<double>();
  sum.avg_len_std = j.at("avg_len_std").get<double>();
  return sum;
}

// Writes report.csv and summary.json under out_dir and returns the summary.
inline EvalSummary emit_report(const std::string& out_dir,
                               const std::vector<ReportRow>& rows) {
  write_report_csv(out_dir + "/report.csv", rows);
  const EvalSummary sum = summarize(rows);
  write_summary_json(out_dir + "/summary.json", sum);
  return sum;
}

}  // namespace taco

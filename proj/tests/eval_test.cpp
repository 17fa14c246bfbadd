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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "taco/eval/harness.hpp"
#include "taco/eval/policies.hpp"

namespace taco {
namespace {

namespace fs = std::filesystem;

LmpSizes tiny_sizes() {
  LmpSizes sz;
  sz.obs_embed_hidden = 16;
  sz.obs_embed = 8;
  sz.enc_width = 16;
  sz.enc_ff = 32;
  sz.enc_heads = 2;
  sz.enc_blocks = 2;
  sz.latent = 6;
  sz.prior_hidden = 16;
  sz.dec_hidden = 24;
  sz.dec_layers = 2;
  return sz;
}

// Zero motion and a grip command equal to the current grip, so the scene
// stays exactly where it is. Lets a test pick outcomes purely by whether a
// predicate already holds.
struct HoldPolicy : GoalPolicy {
  void reset() override {}
  EnvAction act(const Observation& s, const Observation&) override {
    return {0.0, 0.0, s[2]};
  }
};

EnvState scene_light_on_drawer_open() {
  EnvState s;
  s.light = 1.0;
  s.drawer = 1.0;
  return s;
}

int group_of(const std::string& name) {
  const auto& groups = detail::task_groups();
  for (size_t g = 0; g < groups.size(); ++g)
    for (const char* n : groups[g])
      if (name == n) return static_cast<int>(g);
  return -1;
}

void expect_chains_equal(const std::vector<ChainSpec>& a,
                         const std::vector<ChainSpec>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].start, b[i].start);
    EXPECT_EQ(a[i].subtask_budget, b[i].subtask_budget);
    ASSERT_EQ(a[i].tasks.size(), b[i].tasks.size());
    for (size_t p = 0; p < a[i].tasks.size(); ++p) {
      EXPECT_EQ(a[i].tasks[p].task.name, b[i].tasks[p].task.name);
      EXPECT_EQ(a[i].tasks[p].task.zone_x, b[i].tasks[p].task.zone_x);
      EXPECT_EQ(a[i].tasks[p].task.zone_y, b[i].tasks[p].task.zone_y);
      EXPECT_EQ(a[i].tasks[p].goal, b[i].tasks[p].goal);
    }
  }
}

TEST(ChainGeneration, SameSeedReproducesAndSeedsDiffer) {
  const std::vector<ChainSpec> a = make_chains(3, 77);
  const std::vector<ChainSpec> b = make_chains(3, 77);
  expect_chains_equal(a, b);

  const ChainSpec c = make_chain(0, 78);
  EXPECT_NE(a[0].start, c.start);

  for (const ChainSpec& chain : a) {
    EXPECT_EQ(chain.tasks.size(), 5u);
    EXPECT_EQ(chain.subtask_budget, kSubtaskBudget);
    EXPECT_EQ(chain.total_budget(), 5 * kSubtaskBudget);
  }
}

TEST(ChainGeneration, GoalsSatisfyTheirTaskAndWereOpenWhenDrawn) {
  for (const ChainSpec& chain : make_chains(4, 123)) {
    Observation prev = chain.start;
    for (const ChainTask& ct : chain.tasks) {
      EXPECT_TRUE(is_known_task(ct.task.name));
      EXPECT_FALSE(evaluate_task(ct.task, prev, prev))
          << ct.task.label() << " was already satisfied when drawn";
      EXPECT_TRUE(evaluate_task(ct.task, chain.start, ct.goal))
          << ct.task.label() << " not satisfied at its own goal";
      prev = ct.goal;
    }
  }
}

TEST(ChainGeneration, HardGoalsKeepTheEffectorAwayFromTheLandmark) {
  ChainProtocol proto;
  proto.hard = true;
  for (const ChainSpec& chain : make_chains(3, 9, proto)) {
    Observation prev = chain.start;
    for (const ChainTask& ct : chain.tasks) {
      EXPECT_NE(ct.task.name, "lift-block");
      EXPECT_FALSE(evaluate_task(ct.task, prev, prev));
      EXPECT_TRUE(evaluate_task(ct.task, chain.start, ct.goal));

      const EnvState g = EnvState::from_obs(ct.goal);
      double fx = 0.0, fy = 0.0;
      task_focus(ct.task, g, &fx, &fy);
      const double dist = std::hypot(g.eff_x - fx, g.eff_y - fy);
      EXPECT_GE(dist, 0.3 - 1e-12) << ct.task.label();
      prev = ct.goal;
    }
  }
}

TEST(GoalRollout, ZeroBudgetJudgesTheStartingScene) {
  const EnvState scene = scene_light_on_drawer_open();
  HoldPolicy hold;

  GoalRollout lit = run_goal(hold, TaskSpec{"light-on"}, scene, scene.obs(), 0);
  EXPECT_TRUE(lit.success);
  EXPECT_EQ(lit.steps_used, 0);
  EXPECT_EQ(lit.trajectory.size(), 1u);

  GoalRollout dark =
      run_goal(hold, TaskSpec{"light-off"}, scene, scene.obs(), 0);
  EXPECT_FALSE(dark.success);
  EXPECT_EQ(dark.steps_used, 0);
}

TEST(GoalRollout, HoldingStillFailsOnceTheBudgetExpires) {
  const EnvState scene = scene_light_on_drawer_open();
  HoldPolicy hold;
  GoalRollout r = run_goal(hold, TaskSpec{"light-off"}, scene, scene.obs(), 7);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.steps_used, 7);
  EXPECT_EQ(r.trajectory.size(), 8u);
  EXPECT_EQ(r.final_obs(), scene.obs());
}

TEST(TacoPolicy, PlanIsTheSquashedActorMean) {
  Rng mrng(11);
  const LmpSizes sz = tiny_sizes();
  LmpModel lmp(sz, mrng);
  HrlModel hrl(sz, 32, mrng);

  Rng srng(21);
  const Observation s = env_reset(srng).obs();
  const Observation g = env_reset(srng).obs();

  TacoPolicy policy(lmp, hrl);
  policy.act(s, g);

  GaussHead d = hrl.actor()(
      Tensor::constant({1, kObsDim}, std::vector<double>(s.begin(), s.end())),
      Tensor::constant({1, kObsDim}, std::vector<double>(g.begin(), g.end())));
  const std::vector<double> mean = d.mean.value();
  const std::vector<double>& plan = policy.current_plan();
  ASSERT_EQ(plan.size(), static_cast<size_t>(sz.latent));
  for (size_t i = 0; i < plan.size(); ++i)
    EXPECT_DOUBLE_EQ(plan[i], std::tanh(mean[i]));

  TacoPolicy sampled_a(lmp, hrl, false, 3);
  TacoPolicy sampled_b(lmp, hrl, false, 3);
  TacoPolicy sampled_c(lmp, hrl, false, 4);
  sampled_a.act(s, g);
  sampled_b.act(s, g);
  sampled_c.act(s, g);
  EXPECT_EQ(sampled_a.current_plan(), sampled_b.current_plan());
  EXPECT_NE(sampled_a.current_plan(), sampled_c.current_plan());
  EXPECT_NE(sampled_a.current_plan(), plan);
}

TEST(TacoPolicy, MeanModeRolloutsAreRepeatable) {
  Rng mrng(13);
  LmpModel lmp(tiny_sizes(), mrng);
  HrlModel hrl(tiny_sizes(), 32, mrng);
  const ChainSpec chain = make_chain(0, 31);

  TacoPolicy policy(lmp, hrl);
  const EnvState start = EnvState::from_obs(chain.start);
  GoalRollout a =
      run_goal(policy, chain.tasks[0].task, start, chain.tasks[0].goal, 30);
  GoalRollout b =
      run_goal(policy, chain.tasks[0].task, start, chain.tasks[0].goal, 30);
  EXPECT_EQ(a.success, b.success);
  EXPECT_EQ(a.steps_used, b.steps_used);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (size_t i = 0; i < a.trajectory.size(); ++i)
    EXPECT_EQ(a.trajectory[i], b.trajectory[i]);
}

TEST(RandomPlanPolicy, DrawsFreshPlansInsideTheCubeOnSchedule) {
  Rng mrng(17);
  LmpModel lmp(tiny_sizes(), mrng);

  RandomPlanPolicy pol(lmp, 7);
  RandomPlanPolicy twin(lmp, 7);
  Rng srng(23);
  const Observation s = env_reset(srng).obs();
  const Observation g = env_reset(srng).obs();

  std::vector<std::vector<double>> snapshots;
  for (int t = 0; t < 31; ++t) {
    pol.act(s, g);
    twin.act(s, g);
    EXPECT_EQ(pol.current_plan(), twin.current_plan());
    snapshots.push_back(pol.current_plan());
  }
  EXPECT_EQ(pol.plans_drawn(), 3);
  for (int t = 0; t < 31; ++t) {
    const int replan = (t / 15) * 15;
    EXPECT_EQ(snapshots[static_cast<size_t>(t)],
              snapshots[static_cast<size_t>(replan)]);
    for (const double v : snapshots[static_cast<size_t>(t)]) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
  EXPECT_NE(snapshots[0], snapshots[15]);
  EXPECT_NE(snapshots[15], snapshots[30]);
}

TEST(ChainRun, InstantlySatisfiedPositionsCompleteWithoutSteps) {
  const EnvState scene = scene_light_on_drawer_open();
  ChainSpec chain;
  chain.id = 7;
  chain.start = scene.obs();
  for (int i = 0; i < 5; ++i)
    chain.tasks.push_back(
        {TaskSpec{i % 2 ? "open-drawer" : "light-on"}, chain.start});

  HoldPolicy hold;
  const ChainOutcome out = run_chain(hold, chain);
  EXPECT_EQ(out.chain_id, 7);
  ASSERT_EQ(out.positions.size(), 5u);
  for (const PositionOutcome& p : out.positions) {
    EXPECT_TRUE(p.success);
    EXPECT_EQ(p.steps_used, 0);
  }
  EXPECT_EQ(out.prefix_length(), 5);
}

TEST(ChainRun, FailedFirstPositionZeroesThePrefix) {
  const EnvState scene = scene_light_on_drawer_open();
  ChainSpec chain;
  chain.start = scene.obs();
  chain.subtask_budget = 5;
  chain.tasks.push_back({TaskSpec{"light-off"}, chain.start});
  chain.tasks.push_back({TaskSpec{"light-on"}, chain.start});

  HoldPolicy hold;
  const ChainOutcome out = run_chain(hold, chain);
  ASSERT_EQ(out.positions.size(), 2u);
  EXPECT_FALSE(out.positions[0].success);
  EXPECT_EQ(out.positions[0].steps_used, 5);
  EXPECT_TRUE(out.positions[1].success);
  EXPECT_EQ(out.positions[1].steps_used, 0);
  EXPECT_EQ(out.prefix_length(), 0);
}

ChainSpec pattern_chain(int id, const std::vector<std::string>& tasks) {
  const EnvState scene = scene_light_on_drawer_open();
  ChainSpec chain;
  chain.id = id;
  chain.start = scene.obs();
  chain.subtask_budget = 3;
  for (const std::string& name : tasks)
    chain.tasks.push_back({TaskSpec{name}, chain.start});
  return chain;
}

TEST(ChainRun, PrefixAndSummaryMatchARecountFromTheRows) {
  // The scene has the light on and the drawer open; under HoldPolicy a
  // satisfied predicate succeeds instantly and anything else expires.
  const std::vector<ChainSpec> chains = {
      pattern_chain(0, {"light-on", "open-drawer", "light-off", "light-on",
                        "close-drawer"}),
      pattern_chain(1, {"light-on", "open-drawer", "light-on", "open-drawer",
                        "light-on"}),
      pattern_chain(2, {"light-off", "light-on", "open-drawer", "light-on",
                        "open-drawer"}),
  };

  HoldPolicy hold;
  std::vector<ChainOutcome> outcomes;
  for (const ChainSpec& c : chains) outcomes.push_back(run_chain(hold, c));
  EXPECT_EQ(outcomes[0].prefix_length(), 2);
  EXPECT_EQ(outcomes[1].prefix_length(), 5);
  EXPECT_EQ(outcomes[2].prefix_length(), 0);

  const std::vector<ReportRow> rows = report_rows("taco", 5, outcomes);
  ASSERT_EQ(rows.size(), 15u);

  // Recount each chain's prefix straight from the rows.
  for (const ChainOutcome& out : outcomes) {
    int prefix = 0;
    for (int pos = 1; pos <= 5; ++pos) {
      bool ok = false;
      for (const ReportRow& r : rows)
        if (r.chain_id == out.chain_id && r.position == pos) ok = r.success;
      if (!ok) break;
      ++prefix;
    }
    EXPECT_EQ(prefix, out.prefix_length());
  }

  const EvalSummary sum = summarize(rows);
  EXPECT_EQ(sum.method, "taco");
  EXPECT_EQ(sum.n_chains, 3);
  EXPECT_DOUBLE_EQ(sum.avg_len_mean, (2.0 + 5.0 + 0.0) / 3.0);
  EXPECT_DOUBLE_EQ(sum.avg_len_std, 0.0);  // single seed
  EXPECT_DOUBLE_EQ(sum.sr[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(sum.sr[1], 1.0);
  EXPECT_DOUBLE_EQ(sum.sr[2], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(sum.sr[3], 1.0);
  EXPECT_DOUBLE_EQ(sum.sr[4], 2.0 / 3.0);

  const auto table = per_task_table(rows, chains);
  EXPECT_EQ(table.at("light-on")[0], 7);
  EXPECT_EQ(table.at("light-on")[1], 7);
  EXPECT_EQ(table.at("open-drawer")[0], 5);
  EXPECT_EQ(table.at("open-drawer")[1], 5);
  EXPECT_EQ(table.at("light-off")[0], 0);
  EXPECT_EQ(table.at("light-off")[1], 2);
  EXPECT_EQ(table.at("close-drawer")[0], 0);
  EXPECT_EQ(table.at("close-drawer")[1], 1);
}

TEST(ChainRun, WorkerCountDoesNotChangeDeterministicOutcomes) {
  Rng mrng(19);
  LmpModel lmp(tiny_sizes(), mrng);
  HrlModel hrl(tiny_sizes(), 32, mrng);

  ChainProtocol proto;
  proto.subtask_budget = 25;
  const std::vector<ChainSpec> chains = make_chains(6, 42, proto);
  const PolicyFactory factory = [&]() -> std::unique_ptr<GoalPolicy> {
    return std::make_unique<TacoPolicy>(lmp, hrl);
  };

  const std::vector<ChainOutcome> serial = run_chains(factory, chains, 1);
  const std::vector<ChainOutcome> fanned = run_chains(factory, chains, 3);
  ASSERT_EQ(serial.size(), fanned.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].chain_id, fanned[i].chain_id);
    ASSERT_EQ(serial[i].positions.size(), fanned[i].positions.size());
    for (size_t p = 0; p < serial[i].positions.size(); ++p) {
      EXPECT_EQ(serial[i].positions[p].success, fanned[i].positions[p].success);
      EXPECT_EQ(serial[i].positions[p].steps_used,
                fanned[i].positions[p].steps_used);
    }
  }
}

TEST(TwoTask, GoalShowsBothEffectsAndPairsCrossGroups) {
  for (int id = 0; id < 4; ++id) {
    const TwoTaskSpec spec = make_two_task(id, 99);
    EXPECT_EQ(spec.id, id);
    EXPECT_EQ(spec.budget, kTwoTaskBudget);
    EXPECT_TRUE(evaluate_task(spec.tasks[0], spec.start, spec.goal))
        << spec.tasks[0].label();
    EXPECT_TRUE(evaluate_task(spec.tasks[1], spec.start, spec.goal))
        << spec.tasks[1].label();
    const int g0 = group_of(spec.tasks[0].name);
    const int g1 = group_of(spec.tasks[1].name);
    EXPECT_GE(g0, 0);
    EXPECT_GE(g1, 0);
    EXPECT_NE(g0, g1);
    EXPECT_NE(spec.tasks[0].name, "lift-block");
    EXPECT_NE(spec.tasks[1].name, "lift-block");
  }

  const TwoTaskSpec a = make_two_task(1, 99);
  const TwoTaskSpec b = make_two_task(1, 99);
  EXPECT_EQ(a.start, b.start);
  EXPECT_EQ(a.goal, b.goal);
  EXPECT_EQ(a.tasks[0].name, b.tasks[0].name);
  EXPECT_EQ(a.tasks[1].name, b.tasks[1].name);
}

TEST(TwoTask, PredicatesLatchAndBothImpliesOne) {
  EnvState scene;
  scene.light = 1.0;  // drawer stays shut
  HoldPolicy hold;

  TwoTaskSpec half;
  half.start = scene.obs();
  half.goal = scene.obs();
  half.tasks = {TaskSpec{"light-on"}, TaskSpec{"open-drawer"}};
  half.budget = 6;
  const TwoTaskOutcome one = run_two_task(hold, half);
  EXPECT_TRUE(one.done[0]);
  EXPECT_FALSE(one.done[1]);
  EXPECT_TRUE(one.one_task());
  EXPECT_FALSE(one.both_tasks());
  EXPECT_EQ(one.tasks_done(), 1);
  EXPECT_EQ(one.steps_used, 6);

  TwoTaskSpec both = half;
  both.tasks = {TaskSpec{"light-on"}, TaskSpec{"close-drawer"}};
  const TwoTaskOutcome two = run_two_task(hold, both);
  EXPECT_TRUE(two.both_tasks());
  EXPECT_TRUE(two.one_task());
  EXPECT_EQ(two.tasks_done(), 2);
  EXPECT_EQ(two.steps_used, 0);

  TwoTaskSpec neither = half;
  neither.tasks = {TaskSpec{"light-off"}, TaskSpec{"open-drawer"}};
  const TwoTaskOutcome zero = run_two_task(hold, neither);
  EXPECT_FALSE(zero.one_task());
  EXPECT_FALSE(zero.both_tasks());
  EXPECT_EQ(zero.tasks_done(), 0);
  EXPECT_EQ(zero.steps_used, 6);

  for (const TwoTaskOutcome& out : {one, two, zero})
    EXPECT_GE(out.one_task(), out.both_tasks());
}

TEST(TwoTask, RowsEncodeOneThenBothSoSummaryReadsRates) {
  TwoTaskOutcome just_one;
  just_one.done = {true, false};
  just_one.steps_used = 5;
  TwoTaskOutcome both;
  both.done = {true, true};
  both.steps_used = 3;
  TwoTaskOutcome neither;
  neither.done = {false, false};
  neither.steps_used = 9;

  const std::vector<ReportRow> rows =
      two_task_rows("taco", 4, {just_one, both, neither});
  ASSERT_EQ(rows.size(), 6u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[2 * i].chain_id, static_cast<int>(i));
    EXPECT_EQ(rows[2 * i].position, 1);
    EXPECT_EQ(rows[2 * i + 1].position, 2);
  }
  EXPECT_TRUE(rows[0].success);
  EXPECT_FALSE(rows[1].success);
  EXPECT_TRUE(rows[2].success);
  EXPECT_TRUE(rows[3].success);
  EXPECT_FALSE(rows[4].success);
  EXPECT_FALSE(rows[5].success);

  const EvalSummary sum = summarize(rows);
  EXPECT_EQ(sum.n_chains, 3);
  EXPECT_DOUBLE_EQ(sum.sr[0], 2.0 / 3.0);  // at least one task
  EXPECT_DOUBLE_EQ(sum.sr[1], 1.0 / 3.0);  // both tasks
  EXPECT_DOUBLE_EQ(sum.avg_len_mean, (1.0 + 2.0 + 0.0) / 3.0);
}

TEST(TwoTask, WorkerCountDoesNotChangeDeterministicOutcomes) {
  Rng mrng(37);
  LmpModel lmp(tiny_sizes(), mrng);
  HrlModel hrl(tiny_sizes(), 32, mrng);

  std::vector<TwoTaskSpec> specs;
  for (int i = 0; i < 4; ++i) {
    specs.push_back(make_two_task(i, 77));
    specs.back().budget = 20;
  }
  const PolicyFactory factory = [&]() -> std::unique_ptr<GoalPolicy> {
    return std::make_unique<TacoPolicy>(lmp, hrl);
  };
  const std::vector<TwoTaskOutcome> serial = run_two_tasks(factory, specs, 1);
  const std::vector<TwoTaskOutcome> fanned = run_two_tasks(factory, specs, 2);
  ASSERT_EQ(serial.size(), fanned.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].done, fanned[i].done);
    EXPECT_EQ(serial[i].steps_used, fanned[i].steps_used);
  }
}

std::vector<ReportRow> synthetic_rows() {
  struct Pattern {
    uint64_t seed;
    int chain;
    std::vector<int> wins;
  };
  const std::vector<Pattern> patterns = {
      {1, 0, {1, 1, 0, 1, 0}},
      {1, 1, {1, 1, 1, 1, 1}},
      {2, 0, {0, 0, 0, 0, 0}},
      {2, 1, {1, 0, 0, 0, 0}},
  };
  std::vector<ReportRow> rows;
  for (const Pattern& p : patterns)
    for (int k = 0; k < 5; ++k)
      rows.push_back({"lmp", p.seed, p.chain, k + 1,
                      p.wins[static_cast<size_t>(k)] == 1,
                      p.wins[static_cast<size_t>(k)] == 1 ? k : 9});
  return rows;
}

TEST(Report, CsvRoundTripsAndSummaryRecomputesFromRows) {
  const fs::path dir = fs::temp_directory_path() / "taco_eval_report";
  fs::create_directories(dir);
  const std::vector<ReportRow> rows = synthetic_rows();

  const EvalSummary sum = emit_report(dir.string(), rows);
  EXPECT_EQ(sum.method, "lmp");
  EXPECT_EQ(sum.n_chains, 4);
  // Prefixes: seed 1 -> {2, 5}, seed 2 -> {0, 1}.
  EXPECT_DOUBLE_EQ(sum.avg_len_mean, 2.0);
  EXPECT_DOUBLE_EQ(sum.avg_len_std, 1.5);
  EXPECT_DOUBLE_EQ(sum.sr[0], 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(sum.sr[1], 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(sum.sr[2], 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(sum.sr[3], 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(sum.sr[4], 1.0 / 4.0);

  const std::vector<ReportRow> loaded =
      load_report_csv((dir / "report.csv").string());
  ASSERT_EQ(loaded.size(), rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(loaded[i].method, rows[i].method);
    EXPECT_EQ(loaded[i].seed, rows[i].seed);
    EXPECT_EQ(loaded[i].chain_id, rows[i].chain_id);
    EXPECT_EQ(loaded[i].position, rows[i].position);
    EXPECT_EQ(loaded[i].success, rows[i].success);
    EXPECT_EQ(loaded[i].steps_used, rows[i].steps_used);
  }

  // Row order must not matter.
  std::vector<ReportRow> reversed = loaded;
  std::reverse(reversed.begin(), reversed.end());
  const EvalSummary again = summarize(reversed);
  EXPECT_DOUBLE_EQ(again.avg_len_mean, sum.avg_len_mean);
  EXPECT_DOUBLE_EQ(again.avg_len_std, sum.avg_len_std);
  for (int k = 0; k < kChainLength; ++k)
    EXPECT_DOUBLE_EQ(again.sr[static_cast<size_t>(k)],
                     sum.sr[static_cast<size_t>(k)]);

  const EvalSummary round =
      load_summary_json((dir / "summary.json").string());
  EXPECT_EQ(round.method, sum.method);
  EXPECT_EQ(round.n_chains, sum.n_chains);
  EXPECT_DOUBLE_EQ(round.avg_len_mean, sum.avg_len_mean);
  EXPECT_DOUBLE_EQ(round.avg_len_std, sum.avg_len_std);
  for (int k = 0; k < kChainLength; ++k)
    EXPECT_DOUBLE_EQ(round.sr[static_cast<size_t>(k)],
                     sum.sr[static_cast<size_t>(k)]);

  fs::remove_all(dir);
}

TEST(Report, SingleSeedHasZeroSpread) {
  std::vector<ReportRow> rows;
  for (const ReportRow& r : synthetic_rows())
    if (r.seed == 1) rows.push_back(r);
  const EvalSummary sum = summarize(rows);
  EXPECT_EQ(sum.n_chains, 2);
  EXPECT_DOUBLE_EQ(sum.avg_len_mean, 3.5);
  EXPECT_EQ(sum.avg_len_std, 0.0);
}

TEST(Report, MixedMethodsAreRejected) {
  std::vector<ReportRow> rows = synthetic_rows();
  rows.back().method = "taco";
  EXPECT_THROW(summarize(rows), std::invalid_argument);
}

std::vector<double> snapshot_params(LmpModel& lmp, HrlModel& hrl) {
  std::vector<double> flat;
  for (ParamList params : {lmp.params(), hrl.actor_params(),
                           hrl.critic_params(), hrl.target_params()})
    for (const NamedParam& p : params)
      for (const double v : p.tensor.value()) flat.push_back(v);
  return flat;
}

TEST(Harness, EvaluationLeavesModelParametersUntouched) {
  Rng mrng(29);
  LmpModel lmp(tiny_sizes(), mrng);
  HrlModel hrl(tiny_sizes(), 32, mrng);
  const std::vector<double> before = snapshot_params(lmp, hrl);

  ChainProtocol proto;
  proto.length = 2;
  proto.subtask_budget = 20;
  const std::vector<ChainSpec> chains = make_chains(2, 51, proto);
  TacoPolicy policy(lmp, hrl);
  for (const ChainSpec& c : chains) run_chain(policy, c);

  const TwoTaskSpec spec = make_two_task(0, 51);
  run_two_task(policy, spec);

  const std::vector<double> after = snapshot_params(lmp, hrl);
  ASSERT_EQ(before.size(), after.size());
  for (size_t i = 0; i < before.size(); ++i)
    EXPECT_EQ(before[i], after[i]) << "parameter " << i << " moved";
}

}  // namespace
}  // namespace taco

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

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "taco/cli/driver.hpp"

namespace taco {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() /
            ("taco_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string str() const { return path_.string(); }
  fs::path path() const { return path_; }

 private:
  fs::path path_;
};

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in.good()) << path;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr,
            std::string* err = nullptr) {
  std::vector<const char*> argv;
  argv.push_back("taco");
  for (const std::string& a : args) argv.push_back(a.c_str());
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int code = cli_main(static_cast<int>(argv.size()), argv.data());
  const std::string so = testing::internal::GetCapturedStdout();
  const std::string se = testing::internal::GetCapturedStderr();
  if (out) *out = so;
  if (err) *err = se;
  return code;
}

// Small enough that every stage finishes in a few seconds.
std::string tiny_config_text(const std::string& out_dir) {
  return "seed = 5\n"
         "out_dir = " + out_dir + "\n"
         "collect.episodes = 3\n"
         "collect.steps = 50\n"
         "model.obs_embed_hidden = 16\n"
         "model.obs_embed = 8\n"
         "model.enc_width = 16\n"
         "model.enc_ff = 32\n"
         "model.enc_heads = 2\n"
         "model.enc_blocks = 2\n"
         "model.latent = 6\n"
         "model.prior_hidden = 16\n"
         "model.dec_hidden = 24\n"
         "model.dec_layers = 2\n"
         "lmp.epochs = 1\n"
         "lmp.steps_per_epoch = 4\n"
         "lmp.batch = 8\n"
         "hrl.epochs = 1\n"
         "hrl.steps_per_epoch = 4\n"
         "hrl.batch = 8\n"
         "hrl.warmstart_epochs = 1\n"
         "hrl.pool_size = 512\n"
         "hrl.critic_hidden = 16\n"
         "flat.epochs = 1\n"
         "flat.steps_per_epoch = 4\n"
         "flat.batch = 8\n"
         "flat.warmstart_epochs = 1\n"
         "flat.critic_hidden = 16\n"
         "eval.chains = 2\n"
         "eval.subtask_budget = 8\n"
         "eval.rollouts = 2\n"
         "eval.two_task_budget = 8\n"
         "eval.threads = 1\n";
}

TEST(Config, DefaultsMatchTheLibraryStructs) {
  const RunConfig cfg;
  const LmpTrainConfig lmp;
  EXPECT_EQ(cfg.lmp.epochs, lmp.epochs);
  EXPECT_EQ(cfg.lmp.steps_per_epoch, lmp.steps_per_epoch);
  EXPECT_EQ(cfg.lmp.batch, lmp.batch);
  EXPECT_EQ(cfg.lmp.lr, lmp.lr);
  EXPECT_EQ(cfg.lmp.beta, lmp.beta);
  EXPECT_EQ(cfg.lmp.kl_alpha, lmp.kl_alpha);

  const HrlTrainConfig hrl;
  EXPECT_EQ(cfg.hrl.critic_lr, hrl.critic_lr);
  EXPECT_EQ(cfg.hrl.cql.gamma, hrl.cql.gamma);
  EXPECT_EQ(cfg.hrl.goals.geometric_p, hrl.goals.geometric_p);
  EXPECT_EQ(cfg.hrl.goals.positive_fraction, hrl.goals.positive_fraction);

  const FlatTrainConfig flat;
  EXPECT_EQ(cfg.flat.temp_start, flat.temp_start);
  EXPECT_EQ(cfg.flat.temp_end, flat.temp_end);
  EXPECT_EQ(cfg.flat.cql.target_entropy, flat.cql.target_entropy);

  EXPECT_EQ(cfg.model.latent, LmpSizes{}.latent);
  EXPECT_EQ(cfg.eval_subtask_budget, kSubtaskBudget);
  EXPECT_EQ(cfg.eval_two_task_budget, kTwoTaskBudget);
  EXPECT_EQ(cfg.eval_chains, 100);
  EXPECT_EQ(cfg.eval_rollouts, 200);
}

TEST(Config, CanonicalDumpIsSortedAndHashStable) {
  const RunConfig cfg;
  const std::string canon = canonical_config(cfg);

  std::vector<std::string> keys;
  std::istringstream in(canon);
  std::string line;
  while (std::getline(in, line)) {
    const size_t eq = line.find('=');
    ASSERT_NE(eq, std::string::npos) << line;
    keys.push_back(line.substr(0, eq));
  }
  EXPECT_EQ(keys.size(), config_fields().size());
  for (size_t i = 1; i < keys.size(); ++i) EXPECT_LT(keys[i - 1], keys[i]);

  // Feeding the dump back through the parser is a fixed point.
  const RunConfig reparsed = parse_config_text(canon);
  EXPECT_EQ(canonical_config(reparsed), canon);
  EXPECT_EQ(config_hash(reparsed), config_hash(cfg));

  RunConfig changed = cfg;
  set_config_value(changed, "lmp.lr", "0.0002");
  EXPECT_NE(config_hash(changed), config_hash(cfg));
}

TEST(Config, FileParsingHandlesCommentsAndWhitespace) {
  const std::string text =
      "# leading comment\n"
      "\n"
      "seed = 42   # inline comment\n"
      "  lmp.batch=128\n"
      "out_dir = /tmp/somewhere \n";
  const RunConfig cfg = parse_config_text(text);
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.lmp.batch, 128);
  EXPECT_EQ(cfg.out_dir, "/tmp/somewhere");
}

TEST(Config, SharedKeysUpdateBothTrainers) {
  RunConfig cfg;
  set_config_value(cfg, "goal.positive_fraction", "0.7");
  set_config_value(cfg, "goal.mine_negatives", "false");
  set_config_value(cfg, "cql.alpha", "2.5");
  set_config_value(cfg, "cql.ood_samples", "8");
  EXPECT_EQ(cfg.hrl.goals.positive_fraction, 0.7);
  EXPECT_EQ(cfg.flat.goals.positive_fraction, 0.7);
  EXPECT_FALSE(cfg.hrl.goals.mine_negatives);
  EXPECT_FALSE(cfg.flat.goals.mine_negatives);
  EXPECT_EQ(cfg.hrl.cql.cql_alpha, 2.5);
  EXPECT_EQ(cfg.flat.cql.cql_alpha, 2.5);
  EXPECT_EQ(cfg.hrl.cql.ood_samples, 8);
  EXPECT_EQ(cfg.flat.cql.ood_samples, 8);
  // Structural fields stay per-method.
  EXPECT_EQ(cfg.hrl.cql.target_entropy, -16.0);
  EXPECT_EQ(cfg.flat.cql.target_entropy, -3.0);
  EXPECT_NE(cfg.hrl.goals.window_k, cfg.flat.goals.window_k);

  const std::string canon = canonical_config(cfg);
  EXPECT_NE(canon.find("goal.positive_fraction=0.7\n"), std::string::npos);
}

TEST(Config, ErrorsNameTheOffendingKeyOrLine) {
  RunConfig cfg;
  try {
    set_config_value(cfg, "lmp.learning_rate", "0.1");
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lmp.learning_rate"),
              std::string::npos);
  }
  try {
    set_config_value(cfg, "lmp.batch", "sixty-four");
    FAIL() << "bad value accepted";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("lmp.batch"), std::string::npos);
    EXPECT_NE(what.find("sixty-four"), std::string::npos);
  }
  try {
    parse_config_text("seed = 1\njust some words\n");
    FAIL() << "malformed line accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(set_config_value(cfg, "seed", "-3"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "goal.mine_negatives", "maybe"),
               ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config/file"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "no-equals-sign"), ConfigError);
}

TEST(Config, OverridesAndEnvSeedTakePrecedence) {
  RunConfig cfg = parse_config_text("seed = 1\n");
  EXPECT_EQ(cfg.seed, 1u);
  apply_override(cfg, "seed=2");
  EXPECT_EQ(cfg.seed, 2u);

  ASSERT_EQ(::setenv("TACO_SEED", "7", 1), 0);
  apply_env_seed(cfg);
  EXPECT_EQ(cfg.seed, 7u);

  ASSERT_EQ(::setenv("TACO_SEED", "not-a-number", 1), 0);
  EXPECT_THROW(apply_env_seed(cfg), ConfigError);

  ASSERT_EQ(::unsetenv("TACO_SEED"), 0);
  apply_env_seed(cfg);  // absent variable leaves the seed alone
  EXPECT_EQ(cfg.seed, 7u);
}

TEST(Cli, UsageErrorsExitTwoAndHelpExitsZero) {
  std::string out, err;
  EXPECT_EQ(run_cli({}, &out, &err), 2);
  EXPECT_NE(err.find("subcommand"), std::string::npos);

  EXPECT_EQ(run_cli({"frobnicate"}, &out, &err), 2);
  EXPECT_EQ(run_cli({"--bogus-flag", "collect"}, &out, &err), 2);
  EXPECT_EQ(run_cli({"eval", "--method", "nope", "--protocol", "chain5"},
                    &out, &err),
            2);
  EXPECT_EQ(run_cli({"eval", "--method", "taco"}, &out, &err), 2);
  EXPECT_EQ(run_cli({"train-baseline"}, &out, &err), 2);

  EXPECT_EQ(run_cli({"--help"}, &out, &err), 0);
  EXPECT_NE(out.find("collect"), std::string::npos);
  EXPECT_NE(out.find("train-lmp"), std::string::npos);
  EXPECT_EQ(run_cli({"eval", "--help"}, &out, &err), 0);
  EXPECT_NE(out.find("--protocol"), std::string::npos);
}

TEST(Cli, ConfigProblemsExitThree) {
  TempDir dir("badcfg");
  const std::string path = (dir.path() / "bad.cfg").string();
  write_text(path, "lmp.learning_rate = 0.1\n");

  std::string out, err;
  EXPECT_EQ(run_cli({"-c", path, "collect"}, &out, &err), 3);
  EXPECT_NE(err.find("config error:"), std::string::npos);
  EXPECT_NE(err.find("lmp.learning_rate"), std::string::npos);

  EXPECT_EQ(run_cli({"--set", "nope=1", "collect"}, &out, &err), 3);
  EXPECT_EQ(run_cli({"-c", "/missing/file.cfg", "collect"}, &out, &err), 3);
}

TEST(Cli, MissingInputsExitOne) {
  TempDir dir("missing");
  std::string out, err;
  EXPECT_EQ(run_cli({"inspect", (dir.path() / "nowhere").string()}, &out,
                    &err),
            1);
  EXPECT_NE(err.find("error:"), std::string::npos);

  const std::string set_out = "out_dir=" + dir.str();
  EXPECT_EQ(run_cli({"--set", set_out, "eval", "--method", "taco",
                     "--protocol", "chain5"},
                    &out, &err),
            1);
  EXPECT_NE(err.find("train-lmp"), std::string::npos);
  EXPECT_EQ(run_cli({"--set", set_out, "train-hrl"}, &out, &err), 1);
}

TEST(Cli, CollectRefusesToClobberWithoutOverwrite) {
  TempDir dir("clobber");
  const std::vector<std::string> base = {"--set", "out_dir=" + dir.str(),
                                         "--set", "collect.episodes=1",
                                         "--set", "collect.steps=10"};
  std::string out, err;
  std::vector<std::string> args = base;
  args.push_back("collect");
  EXPECT_EQ(run_cli(args, &out, &err), 0);
  EXPECT_NE(out.find("collected 1 episodes"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path() / "dataset" / "run_manifest.json"));

  EXPECT_EQ(run_cli(args, &out, &err), 1);  // same target, no --overwrite

  args.push_back("--overwrite");
  EXPECT_EQ(run_cli(args, &out, &err), 0);
}

// One artifact tree shared by the pipeline tests below; building it runs
// every stage once.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new TempDir("pipeline");
    cfg_ = new RunConfig(parse_config_text(tiny_config_text(root_->str())));
    std::ostringstream sink;
    cmd_collect(*cfg_, false, sink);
    cmd_train_lmp(*cfg_, false, sink);
    cmd_train_hrl(*cfg_, false, sink);
    cmd_train_baseline(*cfg_, "cql-her", false, sink);
    cmd_train_baseline(*cfg_, "lmp", false, sink);
  }

  static void TearDownTestSuite() {
    delete cfg_;
    cfg_ = nullptr;
    delete root_;
    root_ = nullptr;
  }

  static PipelinePaths paths() { return PipelinePaths::from(*cfg_); }

  static TempDir* root_;
  static RunConfig* cfg_;
};

TempDir* PipelineTest::root_ = nullptr;
RunConfig* PipelineTest::cfg_ = nullptr;

TEST_F(PipelineTest, StagesLeaveCheckpointsAndConsistentManifests) {
  const PipelinePaths p = paths();
  EXPECT_TRUE(fs::exists(fs::path(p.lmp_dir()) / "lmp_latest.ckpt"));
  EXPECT_TRUE(fs::exists(fs::path(p.hrl_dir()) / "hrl_latest.ckpt"));
  EXPECT_TRUE(fs::exists(fs::path(p.flat_dir()) / "flat_latest.ckpt"));
  EXPECT_EQ(p.seed_dir(), (fs::path(root_->str()) / "s5").string());

  for (const std::string& dir :
       {p.dataset_dir, p.lmp_dir(), p.hrl_dir(), p.flat_dir(),
        p.baseline_lmp_dir()}) {
    const nlohmann::json m = load_run_manifest(dir);
    EXPECT_EQ(m.at("seed").get<uint64_t>(), 5u) << dir;
    EXPECT_EQ(m.at("config_hash").get<std::string>(), config_hash_hex(*cfg_))
        << dir;
    // Recorded output hashes must match what is on disk right now.
    const auto outputs =
        m.at("outputs").get<std::map<std::string, std::string>>();
    EXPECT_EQ(outputs, hash_dir_files(dir)) << dir;
  }

  const nlohmann::json lmp_m = load_run_manifest(p.lmp_dir());
  EXPECT_EQ(lmp_m.at("command").get<std::string>(), "train-lmp");
  const auto lmp_inputs =
      lmp_m.at("inputs").get<std::map<std::string, std::string>>();
  ASSERT_EQ(lmp_inputs.count(p.dataset_dir), 1u);
  EXPECT_EQ(lmp_inputs.at(p.dataset_dir), dir_hash_hex(p.dataset_dir));

  const std::string lmp_ckpt =
      (fs::path(p.lmp_dir()) / "lmp_latest.ckpt").string();
  const nlohmann::json adopt_m = load_run_manifest(p.baseline_lmp_dir());
  EXPECT_EQ(adopt_m.at("extras").at("kind").get<std::string>(), "lmp");
  const auto adopt_inputs =
      adopt_m.at("inputs").get<std::map<std::string, std::string>>();
  ASSERT_EQ(adopt_inputs.count(lmp_ckpt), 1u);
  EXPECT_EQ(adopt_inputs.at(lmp_ckpt), file_hash_hex(lmp_ckpt));
}

TEST_F(PipelineTest, InspectReportsTheCollectedTotals) {
  std::ostringstream out;
  cmd_inspect(paths().dataset_dir, out);
  const std::string text = out.str();
  EXPECT_NE(text.find("episodes: 3"), std::string::npos);
  EXPECT_NE(text.find("total_steps: 150"), std::string::npos);
  EXPECT_NE(text.find("collection_seed: 5"), std::string::npos);
  EXPECT_NE(text.find("spans."), std::string::npos);
  // Read-only command: it must not drop a manifest of its own anywhere new.
  EXPECT_FALSE(fs::exists(fs::path(paths().dataset_dir) / "inspect"));
}

TEST_F(PipelineTest, EvalCoversEveryMethodAndRerunsAreByteIdentical) {
  const PipelinePaths p = paths();
  std::ostringstream out;
  const EvalSummary taco_sum = cmd_eval(*cfg_, "taco", "chain5", out);
  EXPECT_EQ(taco_sum.method, "taco");
  EXPECT_EQ(taco_sum.n_chains, 2);
  cmd_eval(*cfg_, "lmp", "chain5", out);
  cmd_eval(*cfg_, "cql-her", "chain5", out);
  const EvalSummary two = cmd_eval(*cfg_, "taco", "single-goal-2task", out);
  EXPECT_GE(two.sr[0], two.sr[1]);  // both tasks is at least as hard as one
  cmd_eval(*cfg_, "taco", "hard", out);

  EXPECT_NE(out.str().find("taco chain5:"), std::string::npos);
  EXPECT_NE(out.str().find("one_task="), std::string::npos);

  for (const char* m : {"taco", "lmp", "cql-her"}) {
    const std::string dir = p.eval_dir(m, "chain5");
    EXPECT_TRUE(fs::exists(fs::path(dir) / "report.csv")) << m;
    EXPECT_TRUE(fs::exists(fs::path(dir) / "summary.json")) << m;
    EXPECT_EQ(load_run_manifest(dir).at("extras").at("method"), m);
  }

  const std::string report =
      (fs::path(p.eval_dir("taco", "chain5")) / "report.csv").string();
  const std::string summary =
      (fs::path(p.eval_dir("taco", "chain5")) / "summary.json").string();
  const std::string report_before = read_bytes(report);
  const std::string summary_before = read_bytes(summary);
  std::ostringstream rerun;
  cmd_eval(*cfg_, "taco", "chain5", rerun);
  EXPECT_EQ(read_bytes(report), report_before);
  EXPECT_EQ(read_bytes(summary), summary_before);
}

TEST_F(PipelineTest, RetrainingFromTheSameSeedIsByteIdentical) {
  TempDir second("pipeline_retrain");
  RunConfig cfg2 = *cfg_;
  cfg2.out_dir = second.str();
  cfg2.dataset = paths().dataset_dir;  // reuse the collected episodes

  std::ostringstream sink;
  cmd_train_lmp(cfg2, false, sink);

  const PipelinePaths p1 = paths();
  const PipelinePaths p2 = PipelinePaths::from(cfg2);
  for (const char* name : {"lmp_latest.ckpt", "lmp_train.csv"}) {
    EXPECT_EQ(read_bytes((fs::path(p2.lmp_dir()) / name).string()),
              read_bytes((fs::path(p1.lmp_dir()) / name).string()))
        << name;
  }
}

TEST_F(PipelineTest, UnknownMethodOrBaselineIsRejected) {
  EXPECT_THROW(cmd_eval(*cfg_, "oracle", "chain5"), PipelineError);
  EXPECT_THROW(cmd_eval(*cfg_, "taco", "chain7"), PipelineError);
  EXPECT_THROW(cmd_train_baseline(*cfg_, "bc", false), PipelineError);
}

}  // namespace
}  // namespace taco

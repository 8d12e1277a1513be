#include "ebc/cli/config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace ebc;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "ebc_test_cli";

int run(const std::string& args, std::string* out = nullptr) {
  const fs::path log = kRoot / "stdout.txt";
  const std::string cmd = "EBC_RUN_ROOT=" + kRoot.string() + " " + EBC_CLI_PATH + " " + args + " > " + log.string() +
                          " 2> " + (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& body) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << body;
  return p;
}

const char* kSmallChain = R"({
  "tasks": {"num_examples": 20},
  "approx": {"hidden": [32, 32], "tau": 0.005},
  "trainer": {"total": 3000, "warmup": 100, "exploration": 200, "replay_batch": 32, "example_batch": 32,
              "log_every": 250},
  "eval": {"every": 1500, "episodes": 5, "resamples": 500}
})";

}  // namespace

TEST(Config, DefaultsAndUnknownKeys) {
  const Json d = load_config_text("{}");
  EXPECT_EQ(d, default_config());
  EXPECT_NO_THROW(validate_config(d));
  EXPECT_THROW(load_config_text(R"({"trainer": {"totl": 5}})"), ConfigError);
  EXPECT_THROW(load_config_text(R"({"extra": {}})"), ConfigError);
  EXPECT_THROW(load_config_text(R"({"trainer": {"total": "many"}})"), ConfigError);
  EXPECT_THROW(load_config_text(R"({"trainer": 5})"), ConfigError);
  EXPECT_THROW(load_config_text("{not json"), ConfigError);
  EXPECT_NO_THROW(load_config_text(R"({"approx": {"target_entropy": -2.0}})"));
}

TEST(Config, OverridesUseDottedPathsLastWins) {
  Json c = default_config();
  apply_override(c, "trainer.total=1000");
  apply_override(c, "trainer.total=1200");
  apply_override(c, "reward_model.kind=dac");
  apply_override(c, "approx.hidden=[8,8]");
  EXPECT_EQ(c["trainer"]["total"], 1200);
  EXPECT_EQ(c["reward_model"]["kind"], "dac");
  const RunConfig rc = make_run_config(c);
  EXPECT_EQ(rc.total_steps, 1200u);
  EXPECT_EQ(rc.intention.reward.kind, RewardKind::dac);
  EXPECT_EQ(rc.intention.hidden, (std::vector<std::size_t>{8, 8}));
  EXPECT_THROW(apply_override(c, "trainer.nope=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "no_equals"), ConfigError);
}

TEST(Config, BuildsEnvTasksAndSchedulers) {
  Json c = load_config_text(R"({"env": {"name": "point_grab", "frame_stack": 3},
    "tasks": {"main": "stack", "aux": ["reach", "grasp", "lift", "release"]},
    "scheduler": {"preset": "panda", "handcraft_rate": 0.5}})");
  validate_config(c);
  const auto env = make_env(c);
  EXPECT_EQ(env->spec().obs_dim, 39u);
  const RunConfig rc = make_run_config(c);
  EXPECT_EQ(rc.scheduler.num_periods, 8u);
  EXPECT_EQ(rc.scheduler.trajectories.size(), 3u);
  EXPECT_TRUE(std::isnan(rc.intention.target_entropy));

  apply_override(c, "tasks.aux=[\"fly\"]");
  EXPECT_THROW(validate_config(c), ConfigError);
  Json bad = default_config();
  apply_override(bad, "env.name=mars");
  EXPECT_THROW(validate_config(bad), ConfigError);
  Json warm = default_config();
  apply_override(warm, "trainer.warmup=5000");
  EXPECT_THROW(validate_config(warm), ConfigError);
}

TEST(Config, ShippedSampleConfigsValidate) {
  const fs::path dir = fs::path(EBC_SOURCE_DIR) / "configs";
  ASSERT_TRUE(fs::exists(dir));
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    ++n;
    EXPECT_NO_THROW(validate_config(load_config_file(e.path().string()))) << e.path();
  }
  EXPECT_GT(n, 0u);
}

TEST(Cli, UsageAndConfigErrorsExitTwo) {
  fs::create_directories(kRoot);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("train"), 2);
  EXPECT_EQ(run("train " + (kRoot / "missing.json").string()), 2);
  const auto bad = write_config("bad.json", R"({"trainer": {"bogus": 1}})");
  EXPECT_EQ(run("train " + bad.string()), 2);
  EXPECT_EQ(run("eval " + (kRoot / "nowhere").string()), 2);
}

TEST(Cli, TrainEvalDiagnoseExport) {
  fs::remove_all(kRoot / "chain_a");
  const auto cfg = write_config("small.json", kSmallChain);
  const std::string before = slurp(cfg);
  std::string out;
  ASSERT_EQ(run("train " + cfg.string() + " -r chain_a -o trainer.total=1000 -o trainer.total=3000", &out), 0);
  EXPECT_EQ(slurp(cfg), before);
  const fs::path dir = kRoot / "chain_a";
  for (const char* f : {"config.json", "metadata.json", "metrics.jsonl", "examples/goal.txt",
                        "checkpoints/latest.ckpt", "checkpoints/step_1500.ckpt", "checkpoints/step_3000.ckpt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const Json meta = Json::parse(slurp(dir / "metadata.json"));
  EXPECT_EQ(meta["config"]["trainer"]["total"], 3000);
  EXPECT_EQ(meta["version"], kVersion);
  EXPECT_FALSE(meta["finished"].get<std::string>().empty());

  ASSERT_EQ(run("eval chain_a -n 10", &out), 0);
  EXPECT_NE(out.find("goal\t10\t1\t"), std::string::npos) << out;
  EXPECT_TRUE(fs::exists(dir / "eval_summary.tsv"));
  ASSERT_EQ(run("eval chain_a -n 0", &out), 0);
  EXPECT_EQ(out, "task\tepisodes\tsuccess\treturn\n");

  ASSERT_EQ(run("diagnose chain_a", &out), 0);
  EXPECT_NE(out.find("goal\t0\t"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "q_trace_goal.tsv"));

  // Re-running the same config into another directory is bit-identical.
  ASSERT_EQ(run("train " + (dir / "config.json").string() + " -r chain_b"), 0);
  EXPECT_EQ(slurp(dir / "metrics.jsonl"), slurp(kRoot / "chain_b" / "metrics.jsonl"));

  ASSERT_EQ(run("train " + (dir / "config.json").string() + " -r chain_c -o trainer.seed=1"), 0);
  const fs::path table = kRoot / "table.tsv";
  ASSERT_EQ(run("export-table chain_a chain_c -t goal -m eval_success -w 2 --resamples 200 --out " + table.string()),
            0);
  const std::string t = slurp(table);
  EXPECT_EQ(t.rfind("task\tstep\tiqm\tci_low\tci_high\n", 0), 0u);
  EXPECT_NE(t.find("goal\t3000\t"), std::string::npos);
}

TEST(Cli, CorruptedOrMissingArtifacts) {
  const auto cfg = write_config("tiny.json", R"({"tasks": {"num_examples": 5},
    "approx": {"hidden": [8]}, "trainer": {"total": 300, "warmup": 100, "exploration": 200,
    "replay_batch": 8, "example_batch": 8, "log_every": 100}, "eval": {"every": 300, "episodes": 2}})");
  fs::remove_all(kRoot / "tiny");
  ASSERT_EQ(run("train " + cfg.string() + " -r tiny"), 0);
  const fs::path ck = kRoot / "tiny" / "checkpoints" / "latest.ckpt";
  std::string bytes = slurp(ck);
  bytes[bytes.size() / 2] ^= 0x5a;
  std::ofstream(ck, std::ios::binary | std::ios::trunc) << bytes;
  std::string err;
  EXPECT_EQ(run("eval tiny -n 2"), 3);
  fs::remove(ck);
  EXPECT_EQ(run("eval tiny -n 2"), 3);
  // No checkpoint: diagnose traces the untrained intentions.
  EXPECT_EQ(run("diagnose tiny"), 0);
  fs::remove(kRoot / "tiny" / "examples" / "goal.txt");
  EXPECT_EQ(run("diagnose tiny"), 3);
}

TEST(Cli, ZeroStepRunWritesMetadataAndEmptyMetrics) {
  const auto cfg = write_config("empty.json", R"({"trainer": {"total": 0, "warmup": 0, "exploration": 0},
    "tasks": {"num_examples": 3}})");
  fs::remove_all(kRoot / "empty");
  ASSERT_EQ(run("train " + cfg.string() + " -r empty"), 0);
  EXPECT_TRUE(fs::exists(kRoot / "empty" / "metadata.json"));
  EXPECT_EQ(slurp(kRoot / "empty" / "metrics.jsonl"), "");
}

// ebc command-line entry point: train, eval, diagnose, export-table.
#include "ebc/cli/config.hpp"
#include "ebc/eval/q_trace.hpp"
#include "ebc/eval/stats.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace ebc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

fs::path run_root() {
  const char* r = std::getenv("EBC_RUN_ROOT");
  return r && *r ? fs::path(r) : fs::path("runs");
}

fs::path resolve_run_dir(const std::string& d) {
  fs::path p(d);
  return p.is_absolute() || fs::exists(p) ? p : run_root() / p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

std::string example_file(const fs::path& dir, const std::string& task) {
  return (dir / "examples" / (task + ".txt")).string();
}

/// Loads a run directory's config and rebuilds its untrained state.
struct LoadedRun {
  Json cfg;
  std::unique_ptr<Env> env;
  TaskSet tasks;
  RunConfig rc;
  TrainState state;
};

LoadedRun load_run(const fs::path& dir, bool need_checkpoint) {
  const fs::path cfg_path = dir / "config.json";
  if (!fs::exists(cfg_path)) throw ConfigError("'" + dir.string() + "' is not a run directory (no config.json)");
  LoadedRun r;
  r.cfg = load_config_file(cfg_path.string());
  r.env = make_env(r.cfg);
  r.tasks = make_tasks(r.cfg);
  r.rc = make_run_config(r.cfg);
  Rng rng(derive_seed(r.rc.seed, 1));
  r.state = make_train_state(r.rc, r.env->spec(), r.tasks, rng);
  const fs::path ck = dir / "checkpoints" / "latest.ckpt";
  if (fs::exists(ck)) r.state.restore(Checkpoint::load(ck.string()));
  else if (need_checkpoint) throw Error("run directory '" + dir.string() + "' has no checkpoint");
  return r;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& run_dir) {
  Json cfg = load_config_file(config_path);
  for (const auto& o : overrides) apply_override(cfg, o);
  validate_config(cfg);

  auto env = make_env(cfg);
  const TaskSet tasks = make_tasks(cfg);
  const RunConfig rc = make_run_config(cfg);
  const fs::path dir = run_dir.empty() ? run_root() / (env->id() + "-" + cfg["reward_model"]["kind"].get<std::string>() +
                                                       "-s" + std::to_string(rc.seed))
                                       : resolve_run_dir(run_dir);
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "examples");
  write_file(dir / "config.json", cfg.dump(2) + "\n");

  RunMetadata meta;
  meta.config = cfg.dump();
  meta.env_id = env->id();
  meta.started = utc_timestamp();
  auto write_meta = [&] {
    Json m{{"version", meta.version}, {"env", meta.env_id}, {"started", meta.started}, {"finished", meta.finished},
           {"config", cfg}};
    write_file(dir / "metadata.json", m.dump(2) + "\n");
  };
  write_meta();

  const auto count = cfg["tasks"]["num_examples"].get<std::size_t>();
  const auto ex_seed = cfg["tasks"]["example_seed"].get<std::uint64_t>();
  std::vector<ExampleBuffer> examples;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    examples.push_back(env->generate_examples(tasks[k], count, derive_seed(ex_seed, k)));
    save_examples(examples.back(), example_file(dir, tasks[k].name));
  }

  std::ofstream metrics_out(dir / "metrics.jsonl", std::ios::trunc);
  MetricsWriter metrics(&metrics_out);
  TrainHooks hooks;
  hooks.metrics = &metrics;
  hooks.on_checkpoint = [&](const TrainState& st) {
    const Checkpoint ck = st.checkpoint();
    ck.save((dir / "checkpoints" / ("step_" + std::to_string(st.steps) + ".ckpt")).string());
    ck.save((dir / "checkpoints" / "latest.ckpt").string());
    metrics_out.flush();
  };
  const TrainState st = train(rc, *env, tasks, examples, hooks);
  meta.finished = utc_timestamp();
  write_meta();

  std::cout << "run directory: " << dir.string() << "\n";
  for (const auto& r : st.last_eval)
    std::cout << r.task << "\tsuccess=" << format_double(r.success_rate) << "\treturn=" << format_double(r.mean_return)
              << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, std::size_t episodes) {
  const fs::path dir = resolve_run_dir(run_dir);
  LoadedRun r = load_run(dir, true);
  std::vector<SuccessPredicate> preds;
  for (const auto& t : r.tasks.all()) preds.push_back(r.env->success_predicate(t));
  const auto res = evaluate(r.state.intentions[0], *r.env, episodes, preds, derive_seed(r.rc.seed, 0xe7a1e7a1));
  std::string table = "task\tepisodes\tsuccess\treturn\n";
  if (episodes > 0)
    for (const auto& e : res)
      table += e.task + "\t" + std::to_string(e.episodes) + "\t" + format_double(e.success_rate) + "\t" +
               format_double(e.mean_return) + "\n";
  std::cout << table;
  write_file(dir / "eval_summary.tsv", table);
  return kExitOk;
}

int cmd_diagnose(const std::string& run_dir) {
  const fs::path dir = resolve_run_dir(run_dir);
  LoadedRun r = load_run(dir, false);
  const auto episodes = r.cfg["eval"]["trace_episodes"].get<std::size_t>();
  std::string summary = "task\tepisode\tmax_diff\tviolations\tsteps\n";
  for (std::size_t k = 0; k < r.tasks.size(); ++k) {
    const std::string& name = r.tasks[k].name;
    const std::string path = example_file(dir, name);
    if (!fs::exists(path)) throw Error("run directory has no examples for task '" + name + "'");
    const ExampleBuffer ex = load_examples(path, r.tasks[k].kind);
    std::string trace = "episode\tt\tq\tdiff\n";
    for (std::size_t e = 0; e < episodes; ++e) {
      const QTrace tr = q_trace(r.state.intentions[k], *r.env, ex, derive_seed(r.rc.seed, 0xd1a9 + e));
      for (const auto& p : tr.points)
        trace += std::to_string(e) + "\t" + std::to_string(p.t) + "\t" + format_double(p.q) + "\t" +
                 format_double(p.diff) + "\n";
      summary += name + "\t" + std::to_string(e) + "\t" + format_double(tr.max_diff()) + "\t" +
                 std::to_string(tr.violations()) + "\t" + std::to_string(tr.points.size()) + "\n";
    }
    write_file(dir / ("q_trace_" + name + ".tsv"), trace);
  }
  std::cout << summary;
  write_file(dir / "diagnose_summary.tsv", summary);
  return kExitOk;
}

/// Reads one metric for one task from several runs (seeds) into a RunMatrix.
RunMatrix read_metric(const std::vector<std::string>& runs, const std::string& task, const std::string& metric) {
  RunMatrix m;
  m.task = task;
  for (const auto& rd : runs) {
    const fs::path p = resolve_run_dir(rd) / "metrics.jsonl";
    std::ifstream in(p);
    if (!in) throw Error("cannot read '" + p.string() + "'");
    std::vector<double> row;
    std::vector<std::size_t> steps;
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      if (j["task"] != task || j["metric_name"] != metric) continue;
      steps.push_back(j["step"].get<std::size_t>());
      row.push_back(j["value"].is_null() ? std::numeric_limits<double>::quiet_NaN() : j["value"].get<double>());
    }
    if (m.values.empty()) m.steps = steps;
    else if (steps != m.steps) throw Error("run '" + rd + "' has different evaluation points");
    m.values.push_back(std::move(row));
  }
  return m;
}

int cmd_export(const std::vector<std::string>& runs, const std::string& task, const std::string& metric,
               std::size_t window, std::size_t resamples, double level, const std::string& out_path) {
  const RunMatrix m = read_metric(runs, task, metric);
  if (m.points() == 0) throw Error("no '" + metric + "' records for task '" + task + "'");
  std::string table = "task\tstep\tiqm\tci_low\tci_high\n";
  for (const auto& r : windowed_summary(m, window, resamples, level, 0))
    table += r.task + "\t" + std::to_string(r.step) + "\t" + format_double(r.iqm) + "\t" + format_double(r.ci.low) +
             "\t" + format_double(r.ci.high) + "\n";
  if (out_path.empty()) std::cout << table;
  else write_file(out_path, table);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Example-based control experiments"};
  app.require_subcommand(1);

  std::string config_path, run_dir, task = "goal", metric = "eval_success", out_path;
  std::vector<std::string> overrides, runs;
  std::size_t episodes = 50, window = 5, resamples = 10000;
  double level = 0.95;

  auto* train = app.add_subcommand("train", "Train intentions from a config");
  train->add_option("config", config_path, "JSON config file")->required();
  train->add_option("-o,--override", overrides, "dotted.key=value; later ones win");
  train->add_option("-r,--run-dir", run_dir, "run directory (relative paths go under $EBC_RUN_ROOT)");

  auto* eval = app.add_subcommand("eval", "Evaluate the main policy of a run");
  eval->add_option("run_dir", run_dir)->required();
  eval->add_option("-n,--episodes", episodes);

  auto* diag = app.add_subcommand("diagnose", "Q-value traces and bound violations");
  diag->add_option("run_dir", run_dir)->required();

  auto* exp = app.add_subcommand("export-table", "IQM/CI table across runs (one run per seed)");
  exp->add_option("runs", runs)->required();
  exp->add_option("-t,--task", task);
  exp->add_option("-m,--metric", metric);
  exp->add_option("-w,--window", window);
  exp->add_option("--resamples", resamples);
  exp->add_option("--level", level);
  exp->add_option("--out", out_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(config_path, overrides, run_dir);
    if (*eval) return cmd_eval(run_dir, episodes);
    if (*diag) return cmd_diagnose(run_dir);
    if (*exp) return cmd_export(runs, task, metric, window, resamples, level, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

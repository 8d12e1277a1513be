#pragma once

#include "ebc/envs/chain_world.hpp"
#include "ebc/envs/frame_stack.hpp"
#include "ebc/envs/point_grab.hpp"
#include "ebc/trainer/trainer.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace ebc {

using Json = nlohmann::ordered_json;

/// Every recognised key with its default. A config file may set any subset;
/// keys not present here are rejected.
inline Json default_config() {
  return Json::parse(R"({
  "env": {
    "name": "chain",
    "frame_stack": 1,
    "chain": {"n_states": 5, "goal_state": -1, "slip_prob": 0.0, "horizon": 50, "gamma": 0.9},
    "point_grab": {"horizon": 120, "gamma": 0.99, "max_move": 0.1, "reach_threshold": 0.05,
                   "grasp_threshold": 0.3, "lift_height": 0.2, "block_size": 0.1, "z_max": 0.5}
  },
  "tasks": {"main": "goal", "aux": [], "num_examples": 200, "example_seed": 0},
  "reward_model": {"kind": "sqil", "scale": 0.1, "replay_label": -1.0, "example_label": 1.0,
                   "gradient_penalty": 10.0, "logit_clamp": 15.0, "normalize_input": false,
                   "disc_hidden": [64, 64], "disc_lr": 0.0003},
  "penalty": {"kind": "vp", "lambda": 10.0, "filter_len": 50, "alt_coeff": 1.0, "cql_samples": 10},
  "scheduler": {"preset": "none", "num_periods": 1, "p_main": 0.5, "handcraft_rate": 0.0, "trajectories": []},
  "approx": {"hidden": [64, 64], "critic_lr": 0.0003, "policy_lr": 0.0003, "alpha_lr": 0.0003,
             "weight_decay": 0.01, "max_grad_norm": 10.0, "tau": 0.001, "initial_alpha": 0.01,
             "target_entropy": null, "learn_alpha": true, "n_step": 1, "entropy_in_td": false,
             "example_td": true},
  "trainer": {"total": 20000, "warmup": 500, "exploration": 1000, "update_every": 1, "gradient_steps": 1,
              "actor_every": 1, "target_every": 1, "seed": 0, "aug_factor": 0.1, "replay_batch": 128,
              "example_batch": 128, "buffer_capacity": 1000000, "log_schedule": true, "log_every": 500},
  "eval": {"every": 5000, "episodes": 10, "window": 5, "resamples": 10000, "level": 0.95, "trace_episodes": 1}
})");
}

namespace detail {

// Leaves whose value is an array or may be null are replaced wholesale.
inline void merge_into(Json& base, const Json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    Json& dst = base[it.key()];
    if (dst.is_object()) {
      merge_into(dst, it.value(), key);
    } else {
      const bool numeric_ok = dst.is_number() && it.value().is_number();
      const bool nullable = key == "approx.target_entropy";
      if (!numeric_ok && !nullable && dst.type() != it.value().type())
        throw ConfigError("config key '" + key + "' has the wrong type");
      dst = it.value();
    }
  }
}

}  // namespace detail

inline Json load_config_text(const std::string& text) {
  Json cfg = default_config();
  Json user;
  try {
    user = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  detail::merge_into(cfg, user, "");
  return cfg;
}

inline Json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str());
}

/// "a.b.c=value". The value is parsed as JSON when possible, otherwise taken as a string.
inline void apply_override(Json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  // Build a nested patch and merge it, so overrides get the same checks as files.
  Json patch = value;
  std::string rest = path;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  detail::merge_into(cfg, patch, "");
}

namespace detail {
template <class T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}
}  // namespace detail

inline std::unique_ptr<Env> make_env(const Json& cfg) {
  const Json& e = cfg.at("env");
  const auto name = detail::get<std::string>(e, "name");
  std::unique_ptr<Env> env;
  if (name == "chain") {
    const Json& c = e.at("chain");
    ChainWorldConfig cc;
    cc.n_states = detail::get<std::size_t>(c, "n_states");
    const auto goal = detail::get<long long>(c, "goal_state");
    if (goal >= 0) cc.goal_state = static_cast<std::size_t>(goal);
    cc.slip_prob = detail::get<double>(c, "slip_prob");
    cc.horizon = detail::get<std::size_t>(c, "horizon");
    cc.gamma = detail::get<double>(c, "gamma");
    env = std::make_unique<ChainWorld>(cc);
  } else if (name == "point_grab") {
    const Json& c = e.at("point_grab");
    PointGrabConfig pc;
    pc.horizon = detail::get<std::size_t>(c, "horizon");
    pc.gamma = detail::get<double>(c, "gamma");
    pc.max_move = detail::get<double>(c, "max_move");
    pc.reach_threshold = detail::get<double>(c, "reach_threshold");
    pc.grasp_threshold = detail::get<double>(c, "grasp_threshold");
    pc.lift_height = detail::get<double>(c, "lift_height");
    pc.block_size = detail::get<double>(c, "block_size");
    pc.z_max = detail::get<double>(c, "z_max");
    env = std::make_unique<PointGrab>(pc);
  } else {
    throw ConfigError("unknown environment '" + name + "' (expected chain or point_grab)");
  }
  const auto k = detail::get<std::size_t>(e, "frame_stack");
  if (k > 1) env = std::make_unique<FrameStack>(std::move(env), k);
  else if (k == 0) throw ConfigError("frame_stack must be >= 1");
  return env;
}

inline TaskSet make_tasks(const Json& cfg) {
  const Json& t = cfg.at("tasks");
  return TaskSet(detail::get<std::string>(t, "main"), detail::get<std::vector<std::string>>(t, "aux"));
}

inline RunConfig make_run_config(const Json& cfg) {
  using detail::get;
  RunConfig rc;
  const Json& tr = cfg.at("trainer");
  rc.total_steps = get<std::size_t>(tr, "total");
  rc.warmup = get<std::size_t>(tr, "warmup");
  rc.exploration = get<std::size_t>(tr, "exploration");
  rc.update_every = get<std::size_t>(tr, "update_every");
  rc.gradient_steps = get<std::size_t>(tr, "gradient_steps");
  rc.actor_every = get<std::size_t>(tr, "actor_every");
  rc.target_every = get<std::size_t>(tr, "target_every");
  rc.seed = get<std::uint64_t>(tr, "seed");
  rc.aug_factor = get<double>(tr, "aug_factor");
  rc.replay_batch = get<std::size_t>(tr, "replay_batch");
  rc.example_batch = get<std::size_t>(tr, "example_batch");
  rc.buffer_capacity = get<std::size_t>(tr, "buffer_capacity");
  rc.log_schedule = get<bool>(tr, "log_schedule");
  rc.log_every = get<std::size_t>(tr, "log_every");

  const Json& ev = cfg.at("eval");
  rc.eval_every = get<std::size_t>(ev, "every");
  rc.eval_episodes = get<std::size_t>(ev, "episodes");

  const Json& rm = cfg.at("reward_model");
  auto& ic = rc.intention;
  ic.reward.kind = reward_kind_from_string(get<std::string>(rm, "kind"));
  ic.reward.scale = get<double>(rm, "scale");
  ic.reward.replay_label = get<double>(rm, "replay_label");
  ic.reward.example_label = get<double>(rm, "example_label");
  ic.reward.gradient_penalty = get<double>(rm, "gradient_penalty");
  ic.reward.logit_clamp = get<double>(rm, "logit_clamp");
  ic.reward.normalize_input = get<bool>(rm, "normalize_input");
  rc.disc_hidden = get<std::vector<std::size_t>>(rm, "disc_hidden");

  const Json& ap = cfg.at("approx");
  const double wd = get<double>(ap, "weight_decay"), clip = get<double>(ap, "max_grad_norm");
  rc.disc_opt = OptimConfig{get<double>(rm, "disc_lr"), 0.9, 0.999, 1e-8, wd, clip};
  ic.hidden = get<std::vector<std::size_t>>(ap, "hidden");
  ic.critic_opt = OptimConfig{get<double>(ap, "critic_lr"), 0.9, 0.999, 1e-8, wd, clip};
  ic.policy_opt = OptimConfig{get<double>(ap, "policy_lr"), 0.9, 0.999, 1e-8, wd, clip};
  ic.alpha_opt = OptimConfig{get<double>(ap, "alpha_lr"), 0.9, 0.999, 1e-8, 0.0, 0.0};
  ic.tau = get<double>(ap, "tau");
  ic.initial_alpha = get<double>(ap, "initial_alpha");
  ic.target_entropy = ap.at("target_entropy").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                        : get<double>(ap, "target_entropy");
  ic.learn_alpha = get<bool>(ap, "learn_alpha");
  ic.n_step = get<std::size_t>(ap, "n_step");
  ic.entropy_in_td = get<bool>(ap, "entropy_in_td");
  ic.example_td = get<bool>(ap, "example_td");

  const Json& pe = cfg.at("penalty");
  ic.penalty.kind = regularizer_from_string(get<std::string>(pe, "kind"));
  ic.penalty.lambda = get<double>(pe, "lambda");
  ic.penalty.filter_len = get<std::size_t>(pe, "filter_len");
  ic.penalty.alt_coeff = get<double>(pe, "alt_coeff");
  ic.penalty.cql_samples = get<std::size_t>(pe, "cql_samples");

  const Json& sc = cfg.at("scheduler");
  const auto preset = get<std::string>(sc, "preset");
  if (preset == "panda") rc.scheduler = panda_scheduler();
  else if (preset == "sawyer") rc.scheduler = sawyer_scheduler();
  else if (preset == "none") rc.scheduler.num_periods = get<std::size_t>(sc, "num_periods");
  else throw ConfigError("unknown scheduler preset '" + preset + "' (expected none, panda or sawyer)");
  auto trajs = get<std::vector<std::vector<std::string>>>(sc, "trajectories");
  if (!trajs.empty()) {
    rc.scheduler.trajectories = std::move(trajs);
    rc.scheduler.num_periods = get<std::size_t>(sc, "num_periods");
  }
  rc.scheduler.p_main = get<double>(sc, "p_main");
  rc.scheduler.handcraft_rate = get<double>(sc, "handcraft_rate");
  return rc;
}

/// Full validation of a parsed config: everything a run would construct.
inline void validate_config(const Json& cfg) {
  const auto env = make_env(cfg);
  const TaskSet tasks = make_tasks(cfg);
  const auto names = env->task_names();
  for (const auto& t : tasks.all())
    if (std::find(names.begin(), names.end(), t.name) == names.end())
      throw ConfigError("environment '" + env->id() + "' has no task '" + t.name + "'");
  RunConfig rc = make_run_config(cfg);
  rc.intention.gamma = env->spec().gamma;
  rc.validate();
  rc.scheduler.validate(tasks);
  if (env->spec().episode_horizon < rc.scheduler.num_periods)
    throw ConfigError("episode horizon is shorter than the number of scheduler periods");
  if (cfg.at("tasks").at("num_examples").get<std::size_t>() == 0) throw ConfigError("num_examples must be >= 1");
}

}  // namespace ebc

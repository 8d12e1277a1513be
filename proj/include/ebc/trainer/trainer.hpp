#pragma once

#include "ebc/approx/checkpoint.hpp"
#include "ebc/core/example_buffer.hpp"
#include "ebc/core/replay_buffer.hpp"
#include "ebc/core/task.hpp"
#include "ebc/envs/env.hpp"
#include "ebc/intentions/intention.hpp"
#include "ebc/reward/reward_models.hpp"
#include "ebc/scheduler/scheduler.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ebc {

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  std::size_t total_steps = 20000;
  std::size_t warmup = 500;
  std::size_t exploration = 1000;
  /// Environment steps between update rounds.
  std::size_t update_every = 1;
  /// Gradient steps per update round.
  std::size_t gradient_steps = 1;
  /// Actor and target updates happen on every n-th gradient step.
  std::size_t actor_every = 1;
  std::size_t target_every = 1;
  std::size_t eval_every = 5000;  // 0 disables periodic evaluation
  std::size_t eval_episodes = 10;
  std::uint64_t seed = 0;
  double aug_factor = 0.1;
  std::size_t replay_batch = 128;
  std::size_t example_batch = 128;
  std::size_t buffer_capacity = 1000000;
  std::vector<std::size_t> disc_hidden{64, 64};
  OptimConfig disc_opt{};
  bool log_schedule = true;
  /// Update scalars are averaged over this many environment steps before logging.
  std::size_t log_every = 500;
  IntentionConfig intention{};
  SchedulerConfig scheduler{};

  void validate() const {
    if (warmup > exploration) throw ConfigError("warmup must not exceed exploration");
    if (exploration > total_steps && total_steps > 0)
      throw ConfigError("exploration must not exceed the total number of steps");
    if (log_every == 0) throw ConfigError("log_every must be >= 1");
    if (update_every == 0 || gradient_steps == 0 || actor_every == 0 || target_every == 0)
      throw ConfigError("update frequencies must be >= 1");
    if (aug_factor < 0.0) throw ConfigError("augmentation factor must be non-negative");
    if (replay_batch == 0 || example_batch == 0) throw ConfigError("batch sizes must be >= 1");
    if (buffer_capacity == 0) throw ConfigError("replay capacity must be >= 1");
    intention.validate();
    scheduler.validate();
  }
};

struct RunMetadata {
  std::string config;  // verbatim snapshot
  std::string version = kVersion;
  std::string env_id;
  std::string started;
  std::string finished;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Per-dimension Gaussian jitter with sigma_i = factor * per_dim_std[i].
inline Vec augment_example(const Vec& state, const Vec& per_dim_std, double factor, Rng& rng) {
  if (factor < 0.0) throw ConfigError("augmentation factor must be non-negative");
  if (state.size() != per_dim_std.size())
    throw DimensionError("augmentation std", static_cast<std::size_t>(state.size()),
                         static_cast<std::size_t>(per_dim_std.size()));
  Vec out = state;
  if (factor == 0.0) return out;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double z = std_normal(rng);  // drawn even for flat dimensions so streams stay aligned
    if (per_dim_std[i] > 0.0) out[i] += factor * per_dim_std[i] * z;
  }
  return out;
}

/// Line-delimited metric records {step, task, metric_name, value}. Doubles are
/// written in shortest round-trip form, so equal runs give equal bytes.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream* out = nullptr) : out_(out) {}

  void write(std::size_t step, const std::string& task, const std::string& name, double value) {
    if (!out_) return;
    std::string line = "{\"step\":" + std::to_string(step) + ",\"task\":" + quote(task) + ",\"metric_name\":" +
                       quote(name) + ",\"value\":" + (std::isfinite(value) ? format_double(value) : "null") + "}\n";
    *out_ << line;
    ++lines_;
  }

  std::size_t lines() const noexcept { return lines_; }

 private:
  static std::string quote(const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') q += '\\';
      q += c;
    }
    return q + "\"";
  }

  std::ostream* out_;
  std::size_t lines_ = 0;
};

struct EvalResult {
  std::string task;
  double success_rate = 0.0;
  double mean_return = 0.0;
  std::size_t episodes = 0;
};

using PolicyFn = std::function<Vec(const Vec&, Rng&)>;

/// Rolls `episodes` episodes of `policy` on a private copy of `proto`. Success
/// is the predicate at the final state; return counts steps whose successor
/// satisfies the predicate.
inline std::vector<EvalResult> evaluate_policy(const PolicyFn& policy, const Env& proto, std::size_t episodes,
                                               const std::vector<SuccessPredicate>& predicates, std::uint64_t seed) {
  std::vector<EvalResult> out;
  for (const auto& p : predicates) out.push_back({p.task.name, 0.0, 0.0, episodes});
  if (episodes == 0) return out;
  auto env = proto.clone();
  Rng rng(seed);
  const std::size_t horizon = env->spec().episode_horizon;
  for (std::size_t e = 0; e < episodes; ++e) {
    Vec s = env->reset(derive_seed(seed, e));
    std::vector<double> ret(predicates.size(), 0.0);
    for (std::size_t t = 0; t < horizon; ++t) {
      s = env->step(s, policy(s, rng));
      for (std::size_t k = 0; k < predicates.size(); ++k) ret[k] += predicates[k](s) ? 1.0 : 0.0;
    }
    for (std::size_t k = 0; k < predicates.size(); ++k) {
      out[k].success_rate += predicates[k](s) ? 1.0 : 0.0;
      out[k].mean_return += ret[k];
    }
  }
  for (auto& r : out) {
    r.success_rate /= static_cast<double>(episodes);
    r.mean_return /= static_cast<double>(episodes);
  }
  return out;
}

/// Main-task intention acting deterministically. The scheduler is not consulted.
inline std::vector<EvalResult> evaluate(const Intention& main, const Env& proto, std::size_t episodes,
                                        const std::vector<SuccessPredicate>& predicates, std::uint64_t seed) {
  return evaluate_policy([&](const Vec& s, Rng& rng) { return main.act(s, true, rng); }, proto, episodes,
                         predicates, seed);
}

inline void save_discriminator(Checkpoint& ck, const Discriminator& d) {
  for (std::size_t k = 0; k < d.num_tasks(); ++k) ck.put_params("disc.task" + std::to_string(k), d.task_net(k).params());
  ck.put("disc.offset", d.input_offset());
  ck.put("disc.inv_scale", d.input_inv_scale());
}

inline void load_discriminator(const Checkpoint& ck, Discriminator& d) {
  for (std::size_t k = 0; k < d.num_tasks(); ++k) {
    const ParamList p = ck.get_params("disc.task" + std::to_string(k));
    check_same_shape(d.task_net(k).params(), p, "discriminator");
    d.set_task_params(k, p);
  }
  d.set_input_affine(ck.get("disc.offset").col(0), ck.get("disc.inv_scale").col(0));
}

/// Everything a training run produces.
struct TrainState {
  TaskSet tasks;
  std::vector<Intention> intentions;
  std::optional<Discriminator> discriminator;
  std::vector<EvalResult> last_eval;
  std::size_t steps = 0;
  std::size_t updates = 0;
  std::size_t insertions = 0;

  TaskReward reward_for(std::size_t k) const {
    const auto& rc = intentions.at(k).config().reward;
    if (rc.kind == RewardKind::dac) return TaskReward(rc, &*discriminator, k);
    return TaskReward(rc);
  }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    for (std::size_t k = 0; k < intentions.size(); ++k) intentions[k].save(ck, "task." + tasks[k].name);
    if (discriminator) save_discriminator(ck, *discriminator);
    ck.put_scalar("step", static_cast<double>(steps));
    return ck;
  }

  void restore(const Checkpoint& ck) {
    for (std::size_t k = 0; k < intentions.size(); ++k) intentions[k].load(ck, "task." + tasks[k].name);
    if (discriminator) load_discriminator(ck, *discriminator);
    steps = static_cast<std::size_t>(ck.get_scalar("step"));
  }
};

/// Fresh, untrained state for the given tasks (also used to load checkpoints).
inline TrainState make_train_state(const RunConfig& cfg, const EnvSpec& spec, const TaskSet& tasks, Rng& rng) {
  TrainState st{tasks, {}, std::nullopt, {}, 0, 0, 0};
  IntentionConfig ic = cfg.intention;
  ic.gamma = spec.gamma;
  for (std::size_t k = 0; k < tasks.size(); ++k) st.intentions.emplace_back(tasks[k], spec.obs_dim, spec.act_dim, ic, rng);
  if (ic.reward.kind == RewardKind::dac)
    st.discriminator.emplace(spec.obs_dim, tasks.size(), cfg.disc_hidden, ic.reward, cfg.disc_opt, rng);
  return st;
}

struct TrainHooks {
  MetricsWriter* metrics = nullptr;
  /// Called at each evaluation point (and at the end) with the current state.
  std::function<void(const TrainState&)> on_checkpoint;
};

/// The interaction/update loop. Examples are matched to tasks by name.
inline TrainState train(const RunConfig& cfg, Env& env, const TaskSet& tasks,
                        const std::vector<ExampleBuffer>& example_buffers, TrainHooks hooks = {}) {
  cfg.validate();
  cfg.scheduler.validate(tasks);
  const EnvSpec& spec = env.spec();
  std::vector<const ExampleBuffer*> ex(tasks.size(), nullptr);
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    for (const auto& b : example_buffers)
      if (b.task().name == tasks[k].name) ex[k] = &b;
    if (!ex[k]) throw ConfigError("no example buffer for task '" + tasks[k].name + "'");
    if (ex[k]->dim() != spec.obs_dim) throw DimensionError("examples for '" + tasks[k].name + "'", spec.obs_dim, ex[k]->dim());
  }
  std::vector<SuccessPredicate> predicates;
  for (std::size_t k = 0; k < tasks.size(); ++k) predicates.push_back(env.success_predicate(tasks[k]));

  Rng init_rng(derive_seed(cfg.seed, 1));
  Rng act_rng(derive_seed(cfg.seed, 2));
  Rng update_rng(derive_seed(cfg.seed, 3));
  Rng sched_rng(derive_seed(cfg.seed, 4));
  TrainState st = make_train_state(cfg, spec, tasks, init_rng);
  MetricsWriter null_writer;
  MetricsWriter& out = hooks.metrics ? *hooks.metrics : null_writer;

  if (st.discriminator && st.discriminator->config().normalize_input) {
    const auto& b = *ex[0];
    Vec mean = Vec::Zero(static_cast<Eigen::Index>(b.dim()));
    for (const auto& s : b.states()) mean += s;
    mean /= static_cast<double>(b.size());
    st.discriminator->set_input_normalization(mean, b.per_dim_std());
  }

  ReplayBuffer buffer(cfg.buffer_capacity);
  std::vector<TaskReward> rewards;
  for (std::size_t k = 0; k < tasks.size(); ++k) rewards.push_back(st.reward_for(k));

  auto example_batch = [&](std::size_t k) {
    const auto& b = *ex[k];
    const auto idx = b.sample_indices(cfg.example_batch, update_rng);
    Mat m(static_cast<Eigen::Index>(b.dim()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
      m.col(static_cast<Eigen::Index>(j)) = augment_example(b[idx[j]], b.per_dim_std(), cfg.aug_factor, update_rng);
    return m;
  };

  const std::size_t nt = tasks.size();
  std::vector<double> td_acc(nt, 0.0), pen_acc(nt, 0.0), q_acc(nt, 0.0), actor_acc(nt, 0.0);
  std::size_t acc_n = 0, actor_n = 0;

  auto emit_updates = [&](std::size_t step) {
    if (acc_n == 0) return;
    for (std::size_t k = 0; k < nt; ++k) {
      const auto& it = st.intentions[k];
      const std::string& name = tasks[k].name;
      out.write(step, name, "critic_td_loss", td_acc[k] / static_cast<double>(acc_n));
      out.write(step, name, "critic_penalty", pen_acc[k] / static_cast<double>(acc_n));
      out.write(step, name, "mean_q", q_acc[k] / static_cast<double>(acc_n));
      if (actor_n > 0) out.write(step, name, "actor_loss", actor_acc[k] / static_cast<double>(actor_n));
      out.write(step, name, "alpha", it.alpha());
      if (it.bounds().warm()) {
        out.write(step, name, "q_max", it.bounds().q_max());
        if (it.config().reward.kind != RewardKind::rce &&
            (it.config().reward.kind != RewardKind::dac || !it.bounds().min_reward_filter().empty()))
          out.write(step, name, "q_min", it.bounds().q_min());
      }
    }
    for (auto* v : {&td_acc, &pen_acc, &q_acc, &actor_acc}) std::fill(v->begin(), v->end(), 0.0);
    acc_n = 0;
    actor_n = 0;
  };

  auto emit_eval = [&](std::size_t step) {
    st.last_eval = evaluate(st.intentions[0], env, cfg.eval_episodes, predicates, derive_seed(cfg.seed, 0xe7a1 + step));
    for (const auto& r : st.last_eval) {
      out.write(step, r.task, "eval_success", r.success_rate);
      out.write(step, r.task, "eval_return", r.mean_return);
    }
    if (hooks.on_checkpoint) hooks.on_checkpoint(st);
  };

  std::size_t episode = 0;
  Vec s = env.reset(derive_seed(cfg.seed, 0x5eed0000 + episode));
  SchedulerState sched = begin_episode(cfg.scheduler, spec.episode_horizon, sched_rng);
  std::size_t active = 0;
  std::size_t t_in_episode = 0;

  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    if (sched.at_boundary()) {
      active = select_task(sched, cfg.scheduler, tasks, sched_rng);
      if (cfg.log_schedule) out.write(step, tasks[active].name, "scheduled_task", static_cast<double>(active));
    }
    Vec a;
    if (step < cfg.exploration) {
      a.resize(static_cast<Eigen::Index>(spec.act_dim));
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = uniform(act_rng, -1.0, 1.0);
    } else {
      a = st.intentions[active].act(s, false, act_rng);
    }
    Vec next = env.step(s, a);
    buffer.push({s, a, next, t_in_episode});
    s = std::move(next);
    advance(sched);
    if (++t_in_episode == spec.episode_horizon) {
      ++episode;
      t_in_episode = 0;
      s = env.reset(derive_seed(cfg.seed, 0x5eed0000 + episode));
      sched = begin_episode(cfg.scheduler, spec.episode_horizon, sched_rng);
    }

    const std::size_t done = step + 1;
    if (done >= cfg.warmup && done % cfg.update_every == 0) {
      for (std::size_t g = 0; g < cfg.gradient_steps; ++g) {
        ++st.updates;
        const auto idx = buffer.sample_indices(cfg.replay_batch, update_rng);
        const ReplayBatch batch = make_replay_batch(buffer, idx, cfg.intention.n_step);
        std::vector<Mat> exb;
        for (std::size_t k = 0; k < tasks.size(); ++k) exb.push_back(example_batch(k));
        if (st.discriminator)
          for (std::size_t k = 0; k < tasks.size(); ++k) st.discriminator->update(k, batch.states, exb[k], update_rng);
        for (std::size_t k = 0; k < tasks.size(); ++k) {
          auto& it = st.intentions[k];
          const CriticStats cs = critic_update(it, rewards[k], batch, exb[k], update_rng);
          td_acc[k] += cs.td_loss;
          pen_acc[k] += cs.penalty_loss;
          q_acc[k] += cs.mean_q;
          if (st.updates % cfg.actor_every == 0) {
            const ActorStats as = actor_update(it, batch.states, update_rng);
            actor_acc[k] += as.loss;
            alpha_update(it, as.log_prob);
          }
          if (st.updates % cfg.target_every == 0) it.critics().update_targets();
        }
        ++acc_n;
        if (st.updates % cfg.actor_every == 0) ++actor_n;
      }
    }
    st.steps = done;
    if (done % cfg.log_every == 0) emit_updates(done);
    if (cfg.eval_every > 0 && done % cfg.eval_every == 0) emit_eval(done);
  }
  st.insertions = buffer.insertion_count();
  if (cfg.total_steps % cfg.log_every != 0) emit_updates(cfg.total_steps);
  if (cfg.total_steps > 0 && (cfg.eval_every == 0 || cfg.total_steps % cfg.eval_every != 0)) emit_eval(cfg.total_steps);
  return st;
}

}  // namespace ebc
